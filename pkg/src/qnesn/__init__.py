"""Echo state networks with real or quaternion reservoirs and linear or bilinear readouts."""

__version__ = "0.1.0"
