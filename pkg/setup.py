#!/usr/bin/env python3
"""
Setup script for the RFI Toolkit.
"""
from setuptools import setup, find_packages
import os
import re

# Read version from __init__.py
with open(os.path.join('rfi_toolkit', '__init__.py'), 'r', encoding='utf-8') as f:
    version_file = f.read()
    version_match = re.search(r"^__version__ = ['\"]([^'\"]*)['\"]", version_file, re.M)
    if version_match:
        version = version_match.group(1)
    else:
        version = '0.0.0'  # fallback version

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="rfi-toolkit",
    version=version,
    author="RFI Toolkit Team",
    description="Random function iterations: operator library, particle ensembles and convergence diagnostics",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    package_data={"rfi_toolkit": ["configs/*.toml", "requirements.txt"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.10",
    install_requires=[
        "numpy",
        "scipy",
        "pydantic>=2",
        "POT",
        "tomli; python_version < '3.11'",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "rfi-toolkit=rfi_toolkit.__main__:main",
        ],
    },
)
