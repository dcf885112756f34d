"""UBIC PDE discovery package"""

__version__ = "0.1.0"
__author__ = "UBIC Development Team"
__description__ = "Governing-PDE discovery from noisy spatio-temporal data with uncertainty-penalized BIC"
