"""Lipschitz gluing of Gromov-Hausdorff close Riemannian manifolds"""

__version__ = "1.0.0"
