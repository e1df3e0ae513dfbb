"""p-branch-and-bound for two-stage stochastic MIQCQPs."""

__version__ = "0.1.0"
