"""Layer-wise federated group ADMM simulator with FL/standalone baselines
and a wireless energy model for the exchanged payloads."""

__version__ = "0.1.0"
