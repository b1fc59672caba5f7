"""Deep twin generative networks for counterfactual image and video generation."""

__version__ = "0.1.0"
