"""Toolkit for studying code language models on HPC-style C/C++ functions."""

__version__ = "0.1.0"
