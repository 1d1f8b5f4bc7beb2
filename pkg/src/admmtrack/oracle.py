"""Centralised ground truth for the tracking experiments.

Nothing here is visible to the agents, except through the oracle-certified
warm start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .graph import ArcMatrices, GraphSpectrum
from .process import ParameterState, curvature_constants, stacked_gradient

MU_TOL = 1e-12
PINV_RCOND = 1e-10


@dataclass(frozen=True)
class OptimalPoint:
    x_star: np.ndarray
    z_star: np.ndarray
    alpha_star: np.ndarray
    grad_star: np.ndarray
    mu: float
    L: float
    is_unique_primal: bool
    x_bar: np.ndarray

    @property
    def u_star(self) -> np.ndarray:
        return np.concatenate([self.z_star, self.alpha_star])

    @property
    def lam_star(self) -> np.ndarray:
        return np.concatenate([self.alpha_star, -self.alpha_star])


@dataclass(frozen=True)
class ContractionQuantities:
    delta: float
    q: float
    g: float
    dx_star: float
    dgrad_star: float


@lru_cache(maxsize=32)
def _dual_pinv(arcs: ArcMatrices) -> np.ndarray:
    # minimum-norm solution map of E_o^T alpha = b; lands in range(E_o)
    return np.linalg.pinv(arcs.E_o.T, rcond=PINV_RCOND)


def solve_optimal(theta: ParameterState, arcs: ArcMatrices, mu_tol: float = MU_TOL) -> OptimalPoint:
    n, p, m = arcs.n_nodes, arcs.p, arcs.m_arcs
    if (theta.n_nodes, theta.p) != (n, p):
        raise ValueError("parameter state does not match the network")
    G = theta.gram().sum(axis=0)
    b = theta.moment().sum(axis=0)
    xbar = np.linalg.pinv(G, rcond=PINV_RCOND, hermitian=True) @ b
    x_star = np.tile(xbar, n)
    z_star = np.tile(xbar, m)
    grad = stacked_gradient(theta, x_star)
    alpha_star = -(_dual_pinv(arcs) @ grad)
    mu, L = curvature_constants(theta)
    return OptimalPoint(x_star, z_star, alpha_star, grad, mu, L, mu > mu_tol, xbar)


def delta(mu: float, L: float, spectrum: GraphSpectrum, rho: float, phi: float = 2.0,
          mu_tol: float = MU_TOL) -> float:
    """Contraction margin of one ADMM round; zero once strong convexity is lost."""
    if not phi > 1:
        raise ValueError("phi must exceed 1")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if mu <= mu_tol:
        return 0.0
    gam, Gam = spectrum.gamma_L, spectrum.Gamma_L
    first = (phi - 1.0) * gam / (phi * Gam)
    second = 2.0 * rho * mu * gam / (rho ** 2 * Gam * gam + phi * L ** 2)
    return min(first, second)


def contraction(theta_k: ParameterState, theta_prev: ParameterState, arcs: ArcMatrices,
                spectrum: GraphSpectrum, rho: float, phi: float = 2.0,
                opt_k: OptimalPoint | None = None, opt_prev: OptimalPoint | None = None,
                mu_tol: float = MU_TOL) -> ContractionQuantities:
    if opt_k is None:
        opt_k = solve_optimal(theta_k, arcs, mu_tol)
    if opt_prev is None:
        opt_prev = solve_optimal(theta_prev, arcs, mu_tol)
    d = delta(opt_k.mu, opt_k.L, spectrum, rho, phi, mu_tol)
    dx = float(np.linalg.norm(opt_k.x_star - opt_prev.x_star))
    dgrad = float(np.linalg.norm(opt_k.grad_star - opt_prev.grad_star))
    n, m = arcs.n_nodes, arcs.m_arcs
    g = math.sqrt(rho * m / n) * dx + dgrad / math.sqrt(2.0 * rho * spectrum.gamma_L)
    return ContractionQuantities(d, 1.0 / (1.0 + d), g, dx, dgrad)


def g_deviation(state, opt: OptimalPoint) -> float:
    """G-norm distance ``sqrt(rho ||z - z*||^2 + ||alpha - alpha*||^2 / rho)``."""
    rho = state.rho
    dz = state.z - opt.z_star
    da = state.alpha - opt.alpha_star
    return math.sqrt(rho * float(dz @ dz) + float(da @ da) / rho)


def u_deviation(state, opt: OptimalPoint) -> float:
    """Unweighted distance ``||u - u*||``."""
    return float(np.linalg.norm(state.u - opt.u_star))


@dataclass(frozen=True)
class Lemma1Check:
    passed: bool
    lhs: float
    rhs: float
    slack: float


def check_lemma1(state_k, state_prev, opt_k: OptimalPoint, opt_prev: OptimalPoint,
                 cq: ContractionQuantities, rtol: float = 1e-8) -> Lemma1Check:
    """Per-step tracking inequality.

    ``||u(k) - u*(theta_k)||_G <= (||u(k-1) - u*(theta_{k-1})||_G + g) / sqrt(1 + delta)``
    where ``state_k`` is one exact round against ``theta_k`` from ``state_prev``.
    """
    lhs = g_deviation(state_k, opt_k)
    rhs = (g_deviation(state_prev, opt_prev) + cq.g) / math.sqrt(1.0 + cq.delta)
    slack = rhs - lhs
    return Lemma1Check(slack >= -rtol * (1.0 + rhs), lhs, rhs, slack)
