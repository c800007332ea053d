"""LP presolve engine with reinforcement-learned presolve routines
"""

# Always prefer setuptools over distutils
from setuptools import setup, find_packages
# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'readme.rst'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='rlpresolve',

    version='0.1',

    description='LP presolve engine with reinforcement-learned presolve routines',
    long_description=long_description,

    license='MIT',

    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
    ],

    keywords='linear programming presolve reinforcement learning ppo',

    packages=find_packages(exclude=['contrib', 'docs', 'tests', 'examples', 'examples.*']),

    # numpy carries every dense computation; scipy supplies the sparse
    # matrix storage and the reference solver the tests compare against
    install_requires=['numpy', 'scipy'],

    entry_points={
        'console_scripts': ['rlpresolve = rl.cli:main'],
    },

    # $ pip install -e .[test]
    extras_require={
        'test': ['coverage'],
    },
)
