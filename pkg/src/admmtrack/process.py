"""Markov parameter process driving the distributed least-squares objective.

Node ``i`` holds ``f_i(x_i) = 0.5 * ||H_i x_i - y_i||^2``.  The implemented
process moves every entry of every ``H_i`` and ``y_i`` with the same AR(1)
recursion ``a' = (1 - eps) a + eps v`` with ``v ~ N(0, 1)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np


@dataclass(frozen=True)
class ParameterState:
    """One draw of the parameter process.

    ``H`` has shape ``(n_nodes, rows_per_node, p)`` and ``y`` has shape
    ``(n_nodes, rows_per_node)``.
    """

    H: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    k: int = 0

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        y = np.array(self.y, dtype=float)
        if H.ndim != 3 or y.shape != H.shape[:2]:
            raise ValueError(f"inconsistent shapes H{H.shape}, y{y.shape}")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite entries in parameter state")
        H.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", y)

    @property
    def n_nodes(self) -> int:
        return self.H.shape[0]

    @property
    def rows_per_node(self) -> int:
        return self.H.shape[1]

    @property
    def p(self) -> int:
        return self.H.shape[2]

    def gram(self) -> np.ndarray:
        """Per-node Gram matrices ``H_i^T H_i``, shape ``(n, p, p)``."""
        return np.einsum("nri,nrj->nij", self.H, self.H)

    def moment(self) -> np.ndarray:
        """Per-node ``H_i^T y_i``, shape ``(n, p)``."""
        return np.einsum("nri,nr->ni", self.H, self.y)


@dataclass(frozen=True)
class ProcessConfig:
    n_nodes: int = 10
    rows_per_node: int = 3
    p: int = 3
    epsilon_ar: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.epsilon_ar <= 1.0:
            raise ValueError("epsilon_ar must lie in [0, 1]")
        if self.rows_per_node < 1 or self.p < 1 or self.n_nodes < 1:
            raise ValueError("rows_per_node, p and n_nodes must be >= 1")

    @property
    def stationary_variance(self) -> float:
        """Fixed point of ``s = (1 - eps)^2 s + eps^2``.

        At ``eps = 0`` the chain is constant and every law is stationary; the
        innovation variance 1 is used so that frozen runs are non-trivial.
        """
        eps = self.epsilon_ar
        if eps == 0.0:
            return 1.0
        return eps / (2.0 - eps)

    @property
    def draws_per_step(self) -> int:
        return self.n_nodes * self.rows_per_node * (self.p + 1)


class ParameterProcess(Protocol):
    """Anything that can start at stationarity and take one Markov step."""

    def stationary_sample(self, rng: np.random.Generator) -> ParameterState: ...

    def step(self, state: ParameterState, rng: np.random.Generator) -> ParameterState: ...


def _split(draws: np.ndarray, cfg: ProcessConfig):
    # (node, entry) order: H_i row-major, then y_i
    block = draws.reshape(cfg.n_nodes, cfg.rows_per_node * (cfg.p + 1))
    split = cfg.rows_per_node * cfg.p
    H = block[:, :split].reshape(cfg.n_nodes, cfg.rows_per_node, cfg.p)
    y = block[:, split:]
    return H, y


def stationary_sample(cfg: ProcessConfig, rng: np.random.Generator) -> ParameterState:
    """Draw from the stationary law: i.i.d. ``N(0, eps / (2 - eps))`` entries."""
    draws = rng.standard_normal(cfg.draws_per_step)
    H, y = _split(np.sqrt(cfg.stationary_variance) * draws, cfg)
    return ParameterState(H, y, 0)


def ar1_step(state: ParameterState, cfg: ProcessConfig,
             rng: np.random.Generator) -> ParameterState:
    if (state.n_nodes, state.rows_per_node, state.p) != (cfg.n_nodes, cfg.rows_per_node, cfg.p):
        raise ValueError("state shape does not match the process configuration")
    eps = cfg.epsilon_ar
    V, W = _split(rng.standard_normal(cfg.draws_per_step), cfg)
    return ParameterState((1.0 - eps) * state.H + eps * V,
                          (1.0 - eps) * state.y + eps * W,
                          state.k + 1)


@dataclass(frozen=True)
class AR1Process:
    cfg: ProcessConfig

    def stationary_sample(self, rng):
        return stationary_sample(self.cfg, rng)

    def step(self, state, rng):
        return ar1_step(state, self.cfg, rng)


def curvature_constants(state: ParameterState) -> tuple[float, float]:
    """Strong convexity and gradient Lipschitz constants of the stacked objective.

    The objective is separable over nodes, so ``mu`` is the smallest and ``L``
    the largest eigenvalue over all per-node Gram matrices.
    """
    eig = np.linalg.eigvalsh(state.gram())
    mu = max(float(eig[:, 0].min()), 0.0)
    L = max(float(eig[:, -1].max()), 0.0)
    return mu, L


def local_gradient(state: ParameterState, i: int, x_i) -> np.ndarray:
    if not 0 <= i < state.n_nodes:
        raise IndexError(f"node {i} out of range for {state.n_nodes} nodes")
    H = state.H[i]
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (state.p,):
        raise ValueError(f"x_i must have length {state.p}")
    return H.T @ (H @ x_i - state.y[i])


def stacked_gradient(state: ParameterState, x) -> np.ndarray:
    """Gradient of the stacked objective at ``x`` (length ``n * p``)."""
    X = np.asarray(x, dtype=float).reshape(state.n_nodes, state.p)
    resid = np.einsum("nri,ni->nr", state.H, X) - state.y
    return np.einsum("nri,nr->ni", state.H, resid).ravel()


def dump_state_csv(state: ParameterState, path) -> None:
    """One row per node: ``k, node, H (row-major), y``."""
    r, p = state.rows_per_node, state.p
    header = (["k", "node"] + [f"H_{a}_{b}" for a in range(r) for b in range(p)]
              + [f"y_{a}" for a in range(r)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(state.n_nodes):
            w.writerow([state.k, i] + [repr(float(v)) for v in state.H[i].ravel()]
                       + [repr(float(v)) for v in state.y[i]])


def load_state_csv(path) -> ParameterState:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_h = sum(1 for h in header if h.startswith("H_"))
    r = sum(1 for h in header if h.startswith("y_"))
    p = n_h // r
    H = np.array([[float(v) for v in row[2:2 + n_h]] for row in body]).reshape(len(body), r, p)
    y = np.array([[float(v) for v in row[2 + n_h:]] for row in body])
    return ParameterState(H, y, int(body[0][0]))
