"""Parallel-MRI reconstruction: SENSE model, regularizers and solvers."""

__version__ = "0.1.0"
