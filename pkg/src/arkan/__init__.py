"""AR-KAN: autoregressive memory feeding a Kolmogorov-Arnold network, with baselines."""

__version__ = "0.1.0"
