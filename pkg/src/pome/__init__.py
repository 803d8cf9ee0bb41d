"""PPO with a model-discrepancy exploration bonus, on small discrete MDPs."""

__version__ = "0.1.0"
