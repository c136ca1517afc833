"""Computing and certifying C^{1,beta} linearizations of hyperbolic fixed points."""

__version__ = "0.1.0"
