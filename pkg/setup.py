import sys
import os.path
from setuptools import setup, find_packages

PKG_NAME = 'kldescent'

# Extract version number from module
sys.path.insert(0, os.path.join(os.path.dirname(__file__), PKG_NAME))
from version_ import __version__  # @IgnorePep8 @UnresolvedImport
sys.path.pop(0)

setup(
    name=PKG_NAME,
    version=__version__,
    packages=find_packages(exclude=['test']),
    entry_points={
        'console_scripts': ['kld = kldescent.main_:cmd',
                            'kld-run = kldescent.run_:cmd',
                            'kld-monitor = kldescent.monitor_:cmd',
                            'kld-rates = kldescent.rates_:cmd',
                            'kld-decompose = kldescent.decompose_:cmd',
                            'kld-lm = kldescent.lm_:cmd']},
    license='Apache License 2.0',
    description=(
        'Inexact descent methods (variable-metric alternating '
        'forward-backward, projected Levenberg-Marquardt) with checkers for '
        'their descent hypotheses and Kurdyka-Lojasiewicz rate analysis.'),
    long_description=open('README.rst').read(),
    install_requires=['numpy>=1.17',
                      'scipy>=1.4',
                      'matplotlib>=3.1',
                      'progressbar2>=3.16.0'],
    python_requires='>=3.7',
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Natural Language :: English",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Mathematics"])
