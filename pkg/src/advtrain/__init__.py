"""Two-stage adversarial training lab for a two-vehicle intersection simulator."""

from advtrain._accel import BACKEND

__version__ = "0.1.0"
