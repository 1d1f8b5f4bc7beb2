"""Monte Carlo tracking harness and the mean-square deviation bound.

The constants of the contraction decay ``E[prod q] <= C gamma^w`` are not
computable in closed form; :func:`estimate_decay` fits them from simulated
stationary tracks, so the assembled bound is an empirical-constant bound.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import engine, oracle
from .config import SimConfig
from .graph import ArcMatrices, Graph, GraphSpectrum, arc_matrices, generate_random_graph, laplacian_spectrum
from .process import AR1Process, ProcessConfig, curvature_constants

# references only: the matrix dimensions behind these values are not known
REFERENCE_BX4 = 7.2e-3
REFERENCE_BL4 = 7.3e-4

TRACK_STREAM = 1
DECAY_STREAM = 2


class DegenerateDecayError(RuntimeError):
    """Fitted decay rate is not below one."""


@dataclass(frozen=True)
class Setup:
    """Everything fixed for one experiment: the graph and its derived objects."""

    cfg: SimConfig
    graph: Graph
    arcs: ArcMatrices
    spectrum: GraphSpectrum

    @property
    def process(self) -> AR1Process:
        c = self.cfg
        return AR1Process(ProcessConfig(c.n_nodes, c.rows_per_node, c.dim_p, c.epsilon_ar))


def make_setup(cfg: SimConfig, graph: Graph | None = None) -> Setup:
    if graph is None:
        graph = generate_random_graph(cfg.n_nodes, cfg.edge_prob, cfg.seed)
    return Setup(cfg, graph, arc_matrices(graph, cfg.dim_p),
                 laplacian_spectrum(graph, cfg.gamma_l_convention))


def track_rng(seed: int, track: int, stream: int = TRACK_STREAM) -> np.random.Generator:
    """Dedicated counter-based stream for one track."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, track])))


@dataclass
class TrackRecord:
    mse_u_G: np.ndarray
    mse_u: np.ndarray
    mse_primal: np.ndarray
    mse_dual: np.ndarray
    q: np.ndarray
    g: np.ndarray
    delta: np.ndarray
    dx4: np.ndarray
    dl4: np.ndarray
    lemma_slack: np.ndarray | None = None
    lemma_rhs: np.ndarray | None = None
    warm_start_dist: float = 0.0

    FIELDS = ("mse_u_G", "mse_u", "mse_primal", "mse_dual", "q", "g", "delta", "dx4", "dl4")

    @property
    def lemma_violations(self) -> int:
        if self.lemma_slack is None:
            return 0
        return int(np.sum(self.lemma_slack < -1e-8 * (1.0 + self.lemma_rhs)))


class TrackError(RuntimeError):
    def __init__(self, track: int, cause: Exception):
        super().__init__(f"track {track}: {cause}")
        self.track = track
        self.cause = cause


def run_track(setup: Setup, track: int, check_lemma: bool = False, trace=None) -> TrackRecord:
    """Warm start on a stationary draw, then one ADMM round per process step."""
    cfg, arcs, spec = setup.cfg, setup.arcs, setup.spectrum
    proc = setup.process
    rng = track_rng(cfg.seed, track)
    theta = proc.stationary_sample(rng)
    opt = oracle.solve_optimal(theta, arcs, cfg.mu_tol)
    try:
        state = engine.warm_start(theta, arcs, cfg.warm_start_eps, cfg.warm_start_max_iters,
                                  cfg.rho, opt=opt)
    except engine.WarmStartError as exc:
        raise TrackError(track, exc) from exc
    if trace is not None:
        trace.write(state)
    ws_dist = oracle.g_deviation(state, opt)

    T = cfg.track_len
    out = {name: np.empty(T) for name in TrackRecord.FIELDS}
    slack = np.empty(T) if check_lemma else None
    rhs = np.empty(T) if check_lemma else None
    for k in range(T):
        theta_new = proc.step(theta, rng)
        opt_new = oracle.solve_optimal(theta_new, arcs, cfg.mu_tol)
        new = engine.step(state, theta_new, arcs)
        cq = oracle.contraction(theta_new, theta, arcs, spec, cfg.rho, cfg.phi,
                                opt_k=opt_new, opt_prev=opt, mu_tol=cfg.mu_tol)
        dist_G = oracle.g_deviation(new, opt_new)
        out["mse_u_G"][k] = dist_G ** 2
        out["mse_u"][k] = oracle.u_deviation(new, opt_new) ** 2
        out["mse_primal"][k] = float(np.sum((new.x - opt_new.x_star) ** 2))
        out["mse_dual"][k] = float(np.sum((new.alpha - opt_new.alpha_star) ** 2))
        out["q"][k] = cq.q
        out["g"][k] = cq.g
        out["delta"][k] = cq.delta
        out["dx4"][k] = cq.dx_star ** 4
        # ||d lambda*|| = sqrt(2) ||d alpha*||
        out["dl4"][k] = 4.0 * float(np.sum((opt_new.alpha_star - opt.alpha_star) ** 2)) ** 2
        if check_lemma:
            chk = oracle.check_lemma1(new, state, opt_new, opt, cq)
            slack[k], rhs[k] = chk.slack, chk.rhs
        if trace is not None:
            trace.write(new)
        state, theta, opt = new, theta_new, opt_new
    return TrackRecord(**out, lemma_slack=slack, lemma_rhs=rhs, warm_start_dist=ws_dist)


def default_threads() -> int:
    env = os.environ.get("ADMMTRACK_THREADS")
    return max(1, int(env)) if env else 1


def _track_job(args):
    setup, track, check = args
    return run_track(setup, track, check)


def run_tracks(setup: Setup, check_lemma: bool = False, threads: int | None = None,
               tracks=None) -> list[TrackRecord]:
    """All tracks of an experiment, returned in track order whatever `threads` is."""
    tracks = range(setup.cfg.num_tracks) if tracks is None else tracks
    threads = default_threads() if threads is None else threads
    jobs = [(setup, t, check_lemma) for t in tracks]
    if threads <= 1:
        return [_track_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_track_job, jobs))


@dataclass(frozen=True)
class MomentEstimates:
    B_x4_hat: float
    B_lambda4_hat: float
    B_x4_sem: float
    B_lambda4_sem: float
    samples: int
    n_tracks: int

    @property
    def B_x(self) -> float:
        return self.B_x4_hat ** 0.25

    @property
    def B_lambda(self) -> float:
        return self.B_lambda4_hat ** 0.25


def _mean_sem(per_track: np.ndarray) -> tuple[float, float]:
    n = per_track.shape[0]
    mean = float(np.mean(per_track))
    sem = float(np.std(per_track, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return mean, sem


def estimate_moments(records: list[TrackRecord]) -> MomentEstimates:
    """Pooled fourth moments; standard errors treat tracks as the i.i.d. unit."""
    dx4 = np.stack([r.dx4 for r in records])
    dl4 = np.stack([r.dl4 for r in records])
    bx, bx_se = _mean_sem(dx4.mean(axis=1))
    bl, bl_se = _mean_sem(dl4.mean(axis=1))
    return MomentEstimates(bx, bl, bx_se, bl_se, dx4.size, len(records))


@dataclass
class MonteCarloResult:
    curves: dict[str, np.ndarray]
    moments: MomentEstimates
    records: list[TrackRecord] = field(repr=False)

    @property
    def track_len(self) -> int:
        return self.curves["k"].size

    def plateau(self, key: str = "mse_uG_mean") -> float:
        """Empirical limsup: mean of the last quarter of the horizon."""
        c = self.curves[key]
        return float(np.mean(c[-max(1, c.size // 4):]))

    def third_quarter(self, key: str = "mse_uG_mean") -> float:
        c = self.curves[key]
        q = max(1, c.size // 4)
        return float(np.mean(c[c.size - 2 * q: c.size - q]))


CURVE_COLUMNS = ("k", "mse_primal_mean", "mse_primal_sem", "mse_dual_mean", "mse_dual_sem",
                 "mse_uG_mean", "mse_uG_sem")


def summarize(records: list[TrackRecord]) -> MonteCarloResult:
    if len(records) < 2:
        raise ValueError("need at least two tracks")
    curves = {"k": np.arange(1, records[0].mse_u_G.size + 1)}
    for name, attr in (("mse_primal", "mse_primal"), ("mse_dual", "mse_dual"),
                       ("mse_uG", "mse_u_G"), ("mse_u", "mse_u")):
        stack = np.stack([getattr(r, attr) for r in records])
        curves[f"{name}_mean"] = stack.mean(axis=0)
        curves[f"{name}_sem"] = stack.std(axis=0, ddof=1) / math.sqrt(len(records))
    return MonteCarloResult(curves, estimate_moments(records), records)


def monte_carlo(setup: Setup, threads: int | None = None) -> MonteCarloResult:
    return summarize(run_tracks(setup, threads=threads))


def bound_B1(B_x: float, B_lambda: float, rho: float, m: float, n: float, gamma_L: float) -> float:
    """Degree-4 bound on ``E[g^4]`` in terms of the increment bounds."""
    _check_bound_args(B_x, B_lambda, rho, m, n, gamma_L)
    return ((rho * m / n) ** 2 * B_x ** 4
            + 4.0 * (rho * m ** 1.5 / (n ** 1.5 * math.sqrt(2.0 * gamma_L))) * B_x ** 3 * B_lambda
            + 4.0 * (math.sqrt(rho * m) / (math.sqrt(n) * (2.0 * rho * gamma_L) ** 1.5))
            * B_lambda ** 3 * B_x
            + 6.0 * (m / (n * gamma_L)) * B_x ** 2 * B_lambda ** 2
            + (1.0 / (4.0 * rho ** 2 * gamma_L ** 2)) * B_lambda ** 4)


def bound_B2(B_x: float, B_lambda: float, rho: float, m: float, n: float, gamma_L: float) -> float:
    """Degree-2 companion of :func:`bound_B1`."""
    _check_bound_args(B_x, B_lambda, rho, m, n, gamma_L)
    return ((rho * m / n) * B_x ** 2
            + 2.0 * math.sqrt(m / (n * gamma_L)) * B_x * B_lambda
            + (1.0 / (2.0 * rho * gamma_L)) * B_lambda ** 2)


def _check_bound_args(B_x, B_lambda, rho, m, n, gamma_L):
    if B_x < 0 or B_lambda < 0:
        raise ValueError("B_x and B_lambda must be non-negative")
    if not (rho > 0 and m > 0 and n > 0 and gamma_L > 0):
        raise ValueError("rho, m, n and gamma_L must be positive")


@dataclass(frozen=True)
class DecayFit:
    C_hat: float
    gamma_hat: float
    r_squared: float
    windows: np.ndarray
    mean_product: np.ndarray
    sem: np.ndarray


def q_track(setup: Setup, track: int) -> np.ndarray:
    """Contraction factors ``q(Theta_1..Theta_T)`` along one stationary track."""
    cfg = setup.cfg
    proc = setup.process
    rng = track_rng(cfg.seed, track, DECAY_STREAM)
    theta = proc.stationary_sample(rng)
    qs = np.empty(cfg.track_len)
    for k in range(cfg.track_len):
        theta = proc.step(theta, rng)
        mu, L = curvature_constants(theta)
        d = oracle.delta(mu, L, setup.spectrum, cfg.rho, cfg.phi, cfg.mu_tol)
        qs[k] = 1.0 / (1.0 + d)
    return qs


def window_products(q_tracks: np.ndarray, max_window: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean over all windows of ``prod q`` per window length, with track-level SEM."""
    n_tracks, T = q_tracks.shape
    if max_window > T:
        raise ValueError("max_window exceeds the track length")
    logc = np.concatenate([np.zeros((n_tracks, 1)), np.cumsum(np.log(q_tracks), axis=1)], axis=1)
    means = np.empty(max_window)
    sems = np.empty(max_window)
    for w in range(1, max_window + 1):
        prods = np.exp(logc[:, w:] - logc[:, :-w])
        per_track = prods.mean(axis=1)
        means[w - 1], sems[w - 1] = _mean_sem(per_track)
    return means, sems


def fit_decay(windows: np.ndarray, mean_product: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line through ``log mean_product``; returns ``(C, gamma, R^2)``."""
    y = np.log(mean_product)
    X = np.column_stack([np.ones_like(windows, dtype=float), windows.astype(float)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return math.exp(coef[0]), math.exp(coef[1]), r2


def estimate_decay(setup: Setup, max_window: int | None = None,
                   q_source: Callable[[int], np.ndarray] | None = None,
                   num_tracks: int | None = None, threads: int | None = None,
                   degenerate_tol: float = 1e-12) -> DecayFit:
    """Fit ``E[prod_{i=j}^{j+w-1} q(Theta_i)] ~ C gamma^w`` for ``w = 1..max_window``.

    `q_source(track)` supplies the contraction factors of one track; by
    default they come from simulated stationary process tracks.
    """
    cfg = setup.cfg
    max_window = cfg.decay_window if max_window is None else max_window
    num_tracks = cfg.num_tracks if num_tracks is None else num_tracks
    threads = default_threads() if threads is None else threads
    if q_source is None:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                qs = list(pool.map(q_track, [setup] * num_tracks, range(num_tracks)))
        else:
            qs = [q_track(setup, t) for t in range(num_tracks)]
    else:
        qs = [np.asarray(q_source(t), dtype=float) for t in range(num_tracks)]
    q_arr = np.stack(qs)
    windows = np.arange(1, max_window + 1)
    means, sems = window_products(q_arr, max_window)
    C, gamma, r2 = fit_decay(windows, means)
    if gamma >= 1.0 - degenerate_tol:
        raise DegenerateDecayError(
            f"degenerate decay: fitted gamma = {gamma!r} is not below 1 "
            "(strong convexity is never observed)")
    return DecayFit(C, gamma, r2, windows, means, sems)


@dataclass(frozen=True)
class BoundReport:
    B1: float
    B2: float
    C_hat: float
    gamma_hat: float
    theorem1_rhs: float
    observed_plateau: float
    bound_satisfied: bool
    observed_plateau_unweighted: float = float("nan")
    warm_start_eps: float = float("nan")
    warm_start_eps_sq: float = float("nan")

    def transient(self, k: int) -> float:
        """Warm-start term ``eps0^2 C gamma^k``, squared convention; vanishes as ``k`` grows."""
        return self.warm_start_eps_sq * self.C_hat * self.gamma_hat ** k


def theorem1_rhs(est: MomentEstimates, fit: DecayFit, setup: Setup,
                 observed_plateau: float, observed_plateau_unweighted: float = float("nan")
                 ) -> BoundReport:
    """Assemble ``2 C / (1 - sqrt(gamma))^2 * sqrt(B1)`` and compare with the plateau."""
    if not fit.gamma_hat < 1.0:
        raise ValueError("gamma_hat must be below 1")
    cfg = setup.cfg
    m, n, gam = setup.arcs.m_arcs, setup.arcs.n_nodes, setup.spectrum.gamma_L
    b1 = bound_B1(est.B_x, est.B_lambda, cfg.rho, m, n, gam)
    b2 = bound_B2(est.B_x, est.B_lambda, cfg.rho, m, n, gam)
    rhs = 2.0 * fit.C_hat / (1.0 - math.sqrt(fit.gamma_hat)) ** 2 * math.sqrt(b1)
    eps0 = cfg.warm_start_eps
    return BoundReport(b1, b2, fit.C_hat, fit.gamma_hat, rhs, observed_plateau,
                       bool(rhs >= observed_plateau), observed_plateau_unweighted, eps0, eps0 ** 2)


def static_rate_check(theta, setup: Setup, K: int = 100, u0_state=None) -> tuple[float, float]:
    """Distance after `K` frozen rounds and the linear-rate bound for it."""
    cfg = setup.cfg
    opt = oracle.solve_optimal(theta, setup.arcs, cfg.mu_tol)
    state = u0_state if u0_state is not None else engine.zero_state(setup.arcs, cfg.rho)
    d0 = oracle.g_deviation(state, opt)
    for _ in range(K):
        state = engine.step(state, theta, setup.arcs)
    d = oracle.delta(opt.mu, opt.L, setup.spectrum, cfg.rho, cfg.phi, cfg.mu_tol)
    return oracle.g_deviation(state, opt), d0 * (1.0 + d) ** (-K / 2.0) + 1e-8
