#! /usr/bin/env python3

from setuptools import setup, find_packages
import pathlib

# REQUIREMENTS
REQUIREMENTS = [ 'numpy', 'scipy', 'scikit-learn', 'tqdm', 'PTable', 'python-dateutil' ]

# The directory containing this file
HERE = pathlib.Path(__file__).parent

# About the project
about = {}
exec((HERE / "eegdg" / "__version__.py").read_text(), about)

# The text of the README file
README = (HERE / "README.rst").read_text()

setup(
    name=about['__title__'],
    description=about['__description__'],
    url=about['__url__'],
    maintainer=about['__author__'],
    maintainer_email=about['__author_email__'],
    version=about['__version__'],
    packages=find_packages(exclude=['tests', 'tests.*']),
    install_requires=REQUIREMENTS,
    python_requires='>=3.7',
    license=about['__license__'],
    long_description=README,
    long_description_content_type="text/x-rst",
    test_suite="tests",
    keywords=about['__keywords__'],
    entry_points={
        'console_scripts': ['eegdg=eegdg.cli:main'],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Development Status :: 3 - Alpha',
    ],
)
