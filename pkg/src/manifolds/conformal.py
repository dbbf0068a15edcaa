"""Conformally flat metrics exp(2w) * I with analytic connection"""

from abc import abstractmethod
from dataclasses import dataclass

import numpy as np

from src.manifolds.base import ManifoldModel


@dataclass(frozen=True, kw_only=True)
class ConformallyFlatModel(ManifoldModel):
    """
    Model whose unscaled metric is exp(2 w(u)) * I in every chart

    The log-factor w with its gradient and Hessian gives Christoffel symbols
    gamma^k_ij = delta_ik w_j + delta_jk w_i - delta_ij w_k and their
    derivatives in closed form.
    """

    @abstractmethod
    def log_factor(self, chart: int, coords: np.ndarray) -> float:
        """The function w with metric exp(2w) * I"""

    @abstractmethod
    def log_factor_gradient(self, chart: int, coords: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def log_factor_hessian(self, chart: int, coords: np.ndarray) -> np.ndarray:
        pass

    def base_metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.exp(2.0 * self.log_factor(chart, coords)) * np.eye(self.dimension)

    def metric_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        g = self.metric(chart, coords)
        grad = self.log_factor_gradient(chart, coords)
        return 2.0 * np.einsum("k,ij->kij", grad, g)

    def christoffel_symbols(self, chart: int, coords: np.ndarray) -> np.ndarray:
        grad = self.log_factor_gradient(chart, coords)
        identity = np.eye(self.dimension)
        return (
            np.einsum("ki,j->kij", identity, grad)
            + np.einsum("kj,i->kij", identity, grad)
            - np.einsum("ij,k->kij", identity, grad)
        )

    def christoffel_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        hess = self.log_factor_hessian(chart, coords)
        identity = np.eye(self.dimension)
        return (
            np.einsum("ki,jl->lkij", identity, hess)
            + np.einsum("kj,il->lkij", identity, hess)
            - np.einsum("ij,kl->lkij", identity, hess)
        )

    def gaussian_curvature(self, chart: int, coords: np.ndarray) -> float:
        """K = -exp(-2w) * laplacian(w) / scale**2, valid in dimension 2"""
        w = self.log_factor(chart, coords)
        laplacian = np.trace(self.log_factor_hessian(chart, coords))
        return float(-np.exp(-2.0 * w) * laplacian / self.scale**2)
