"""Zero-glance class unlearning with generated erasure samples, on a numpy autodiff core."""

__version__ = "0.1.0"
