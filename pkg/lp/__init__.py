#-------------------------------------------------------------------------
# __init__.py
#
# The presence of this file turns this directory into a Python package.
# lp: sparse LP model, MPS files, presolvers, simplex and generators.
#-------------------------------------------------------------------------

from . import __version__
__version__ = __version__.VERSION_STRING


# Load the package namespace with the core classes and such
from .Errors import *
from .LPProblem import *
from .MPSFile import *
from .Presolver import *
from .Simplex import *
from .InstanceGenerator import *
