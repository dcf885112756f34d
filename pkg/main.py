#!/usr/bin/env python3
"""
UBIC PDE Discovery - Main Entry Point

Runs the ``ubic`` command-line interface: data generation, denoising,
weak-form libraries, best-subset sweeps and uncertainty-penalized selection.
"""

import os
import sys

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ubic.core.cli import main

if __name__ == "__main__":
    sys.exit(main())
