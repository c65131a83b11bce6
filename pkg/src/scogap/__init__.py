"""Adversarial stochastic convex optimization instances and GD/SGD gap experiments."""

__version__ = "0.1.0"
