"""Utility modules for the UBIC PDE discovery package."""
