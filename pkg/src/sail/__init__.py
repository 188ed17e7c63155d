"""Quality-diversity optimization toolkit.

MAP-Elites archives, surrogate-assisted illumination with Gaussian-process
models and UCB acquisition maps, Sobol sampling, and a 2D airfoil design
domain with a synthetic stand-in evaluator for desk-scale experiments.
"""

__version__ = "0.1.0"
