"""fedsim: a desk-scale federated optimization framework."""

__version__ = "0.1.0"
