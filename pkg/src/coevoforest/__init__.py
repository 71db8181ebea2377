"""Coevolutionary training of adversarially robust decision forests.

Tree populations evolve against adversarial perturbation populations on
multiple islands with periodic migration; final ensembles are weighted by
a mixed Nash equilibrium of the tree-vs-perturbation zero-sum game.
"""

__version__ = "0.1.0"
