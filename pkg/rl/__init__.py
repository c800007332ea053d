#-------------------------------------------------------------------------
# __init__.py
#
# The presence of this file turns this directory into a Python package.
# rl: presolve environment, policy networks, PPO trainer and harness.
#-------------------------------------------------------------------------

from . import __version__
__version__ = __version__.VERSION_STRING


# Load the package namespace with the core classes and such
from .Errors import *
from .PresolveEnv import *
from .TinyNN import *
from .ChainPolicy import *
from .Trainer import *
from .Harness import *
