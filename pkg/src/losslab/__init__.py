"""Loss-landscape measurement lab for small MLP classifiers."""

__version__ = "0.1.0"
