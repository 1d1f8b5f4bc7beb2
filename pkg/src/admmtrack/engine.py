"""Edge-based consensus ADMM, one iteration per change of the parameter.

A round is split into barrier-separated phases:

1. every node observes its new local cost and solves its x-subproblem from
   local data (its Gram matrix, the z and alpha blocks on its outgoing arcs);
2. nodes exchange x blocks with their neighbours (:class:`NodeInbox`);
3. every arc ``i -> j`` averages ``x_i`` and the received ``x_j`` (z-update);
4. every arc takes its dual ascent step.

Only ``alpha`` is stored: the full multiplier is ``lambda = [alpha; -alpha]``.
``AdmmState.lam_full`` optionally carries the generic ``lambda`` updated with
the dense ``A`` and ``B`` so that the symmetry can be checked instead of
assumed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import ArcMatrices
from .process import ParameterState


class WarmStartError(RuntimeError):
    """Warm start did not reach the requested accuracy."""


@dataclass(frozen=True)
class AdmmState:
    x: np.ndarray
    z: np.ndarray
    alpha: np.ndarray
    rho: float
    k: int = 0
    lam_full: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.z, self.alpha])

    @property
    def lam(self) -> np.ndarray:
        """Full multiplier; the debug copy when present, else ``[alpha; -alpha]``."""
        if self.lam_full is not None:
            return self.lam_full
        return np.concatenate([self.alpha, -self.alpha])


def zero_state(arcs: ArcMatrices, rho: float, full_lambda: bool = False) -> AdmmState:
    n, m, p = arcs.n_nodes, arcs.m_arcs, arcs.p
    lam = np.zeros(2 * m * p) if full_lambda else None
    return AdmmState(np.zeros(n * p), np.zeros(m * p), np.zeros(m * p), float(rho), 0, lam)


@dataclass(frozen=True)
class NodeInbox:
    """Messages delivered in the exchange phase.

    Row ``a`` of `received` is the block ``x_j`` that node ``i`` received over
    arc ``a = (i -> j)``.
    """

    arcs: tuple[tuple[int, int], ...]
    received: np.ndarray

    def for_node(self, i: int) -> dict[int, np.ndarray]:
        return {j: self.received[a] for a, (s, j) in enumerate(self.arcs) if s == i}


def _node_sums(values: np.ndarray, owners: np.ndarray, n: int) -> np.ndarray:
    # sequential accumulation: result does not depend on any parallel schedule
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, owners, values)
    return out


def x_update(state: AdmmState, theta: ParameterState, arcs: ArcMatrices) -> np.ndarray:
    """Exact minimisation of the augmented Lagrangian over ``x``.

    Node ``i`` solves ``(H_i^T H_i + 2 rho d_i I) x_i = H_i^T y_i - (A^T lambda)_i
    + rho ((A_s + A_d)^T z)_i``.
    """
    n, p, rho = arcs.n_nodes, arcs.p, state.rho
    deg = arcs.graph.degrees.astype(float)
    src, dst = arcs.sources, arcs.destinations
    Z = state.z.reshape(-1, p)
    if state.lam_full is None:
        # (A^T lambda)_i = (E_o^T alpha)_i = 2 * sum of alpha over arcs leaving i
        alpha = state.alpha.reshape(-1, p)
        dual = _node_sums(alpha, src, n) - _node_sums(alpha, dst, n)
    else:
        dual = (arcs.A.T @ state.lam_full).reshape(n, p)
    zsum = _node_sums(Z, src, n) + _node_sums(Z, dst, n)
    lhs = theta.gram() + (2.0 * rho * deg)[:, None, None] * np.eye(p)
    rhs = theta.moment() - dual + rho * zsum
    return np.linalg.solve(lhs, rhs[..., None])[..., 0].ravel()


def exchange(x: np.ndarray, arcs: ArcMatrices) -> NodeInbox:
    X = np.asarray(x).reshape(arcs.n_nodes, arcs.p)
    return NodeInbox(arcs.arcs, X[arcs.destinations].copy())


def z_update(state: AdmmState, arcs: ArcMatrices, inbox: NodeInbox | None = None) -> np.ndarray:
    """Per-arc average of the two endpoint blocks.

    In full-lambda mode the generic minimiser
    ``z = (A_s x + A_d x) / 2 + (lambda_s + lambda_d) / (2 rho)`` is used.
    """
    p = arcs.p
    if inbox is None:
        inbox = exchange(state.x, arcs)
    own = state.x.reshape(arcs.n_nodes, p)[arcs.sources]
    z = 0.5 * (own + inbox.received)
    if state.lam_full is not None:
        mp = arcs.m_arcs * p
        lam_s, lam_d = state.lam_full[:mp], state.lam_full[mp:]
        z = z.ravel() + (lam_s + lam_d) / (2.0 * state.rho)
    return z.ravel()


def lambda_update(state: AdmmState, arcs: ArcMatrices) -> np.ndarray:
    """Dual ascent on the stored half: ``alpha += rho (A_s x - z)``."""
    p = arcs.p
    own = state.x.reshape(arcs.n_nodes, p)[arcs.sources].ravel()
    return state.alpha + state.rho * (own - state.z)


def full_lambda_update(state: AdmmState, arcs: ArcMatrices) -> np.ndarray:
    """Generic ``lambda += rho (A x + B z)`` with the dense block matrices."""
    return state.lam_full + state.rho * (arcs.A @ state.x + arcs.B @ state.z)


def step(state: AdmmState, theta: ParameterState, arcs: ArcMatrices) -> AdmmState:
    """One full round against the freshly observed parameter ``theta``."""
    x = x_update(state, theta, arcs)
    s = replace(state, x=x)
    inbox = exchange(x, arcs)
    s = replace(s, z=z_update(s, arcs, inbox))
    alpha = lambda_update(s, arcs)
    lam = None
    if state.lam_full is not None:
        lam = full_lambda_update(s, arcs)
        alpha = lam[:arcs.m_arcs * arcs.p].copy()
    return replace(s, alpha=alpha, lam_full=lam, k=state.k + 1)


def round_map(theta: ParameterState, arcs: ArcMatrices, rho: float):
    """Affine map ``u -> T u + c`` of one frozen round on ``u = [z; alpha]``.

    ``x`` is eliminated: it is a function of the previous ``(z, alpha)``.
    """
    mp = arcs.m_arcs * arcs.p
    n_p = arcs.n_nodes * arcs.p

    def apply(u):
        s = AdmmState(np.zeros(n_p), u[:mp], u[mp:], rho)
        out = step(s, theta, arcs)
        return np.concatenate([out.z, out.alpha])

    c = apply(np.zeros(2 * mp))
    T = np.empty((2 * mp, 2 * mp))
    for j in range(2 * mp):
        e = np.zeros(2 * mp)
        e[j] = 1.0
        T[:, j] = apply(e) - c
    return T, c


def _fast_forward(theta0, arcs, opt, eps0, max_iters, rho):
    """Locate the first round whose G-distance is at most `eps0`.

    Binary lifting over powers of the affine round map: valid because the
    G-distance to a fixed point never increases along ADMM iterates.  Returns
    the state one round short of the target, or ``None`` past `max_iters`.
    """
    from .oracle import g_deviation

    T, c = round_map(theta0, arcs, rho)
    D = T.shape[0]
    mp = D // 2
    n_p = arcs.n_nodes * arcs.p
    aug = np.zeros((D + 1, D + 1))
    aug[:D, :D] = T
    aug[:D, D] = c
    aug[D, D] = 1.0

    def as_state(v, k):
        return AdmmState(np.zeros(n_p), v[:mp].copy(), v[mp:D].copy(), rho, k)

    v = np.zeros(D + 1)
    v[D] = 1.0
    powers = [aug]
    while (1 << len(powers)) <= max_iters:
        powers.append(powers[-1] @ powers[-1])
    count = 0
    for j in range(len(powers) - 1, -1, -1):
        if count + (1 << j) >= max_iters:
            continue
        w = powers[j] @ v
        if g_deviation(as_state(w, 0), opt) > eps0:
            v, count = w, count + (1 << j)
    if count + 1 > max_iters:
        return None
    return as_state(v, count)


def warm_start(theta0: ParameterState, arcs: ArcMatrices, eps0: float, max_iters: int = 10_000_000,
               rho: float = 10.0, opt=None, full_lambda: bool = False,
               fast_forward: bool = True) -> AdmmState:
    """Run ADMM on the frozen problem ``theta0`` from zero ``z`` and ``alpha``.

    Stops at the first round whose G-distance to the optimum is at most
    `eps0` and returns that state relabelled ``k = 0``.  With `fast_forward`
    the rounds before the last one are evaluated through powers of the
    affine round map (``O(log N)`` matrix products) instead of one by one.
    """
    from .oracle import g_deviation, solve_optimal

    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if opt is None:
        opt = solve_optimal(theta0, arcs)
    state = zero_state(arcs, rho, full_lambda)
    if fast_forward and not full_lambda and g_deviation(state, opt) > eps0:
        before = _fast_forward(theta0, arcs, opt, eps0, max_iters, rho)
        if before is not None:
            state = step(before, theta0, arcs)
    for _ in range(max_iters - state.k + 1):
        if g_deviation(state, opt) <= eps0:
            return replace(state, k=0)
        if state.k >= max_iters:
            break
        state = step(state, theta0, arcs)
    raise WarmStartError(
        f"warm start not converged: G-distance {g_deviation(state, opt):.3e} > {eps0:g} "
        f"after {state.k} iterations")


class TraceWriter:
    """Per-round CSV trace: ``k, node, x_0 .. x_{p-1}``."""

    def __init__(self, fh, p: int):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(["k", "node"] + [f"x_{c}" for c in range(p)])
        self.p = p

    def write(self, state: AdmmState) -> None:
        X = state.x.reshape(-1, self.p)
        for i, row in enumerate(X):
            self._w.writerow([state.k, i] + [repr(float(v)) for v in row])
