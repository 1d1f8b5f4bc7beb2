"""Command-line entry points.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(warm start, degenerate decay), 3 invariant violation (``verify-lemma1``).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import analysis
from .config import ConfigError, SimConfig, parse_config
from .engine import TraceWriter, WarmStartError
from .graph import ConnectivityError, write_edge_list
from .io import write_csv

log = logging.getLogger("admmtrack")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat 'key = value' config file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out-dir", metavar="PATH", help="override the output directory")
    common.add_argument("--threads", type=int,
                        help="worker processes (default: $ADMMTRACK_THREADS or 1)")
    common.add_argument("--trace", action="store_true",
                        help="write the per-round x trace of track 0 to trace.csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="admmtrack", description="Decentralized ADMM tracking experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo tracks -> curves.csv, moments.csv")
    sub.add_parser("bound", parents=[common], help="simulate + decay fit -> bound.csv")
    sub.add_parser("decay", parents=[common], help="contraction decay fit -> decay.csv")
    sub.add_parser("graph-info", parents=[common], help="print the graph and its spectrum")
    sub.add_parser("verify-lemma1", parents=[common], help="per-step tracking inequality sweep")
    return p


def load_config(args) -> SimConfig:
    overrides = {"seed": args.seed, "out_dir": args.out_dir}
    if args.config:
        return parse_config(args.config, **overrides)
    return SimConfig(**{k: v for k, v in overrides.items() if v is not None})


def _write_trace(setup, out_dir):
    path = out_dir / "trace.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        analysis.run_track(setup, 0, trace=TraceWriter(fh, setup.cfg.dim_p))
    return path


def write_curves(result: analysis.MonteCarloResult, out_dir):
    c = result.curves
    rows = zip(*(c[col] for col in analysis.CURVE_COLUMNS))
    return write_csv(out_dir / "curves.csv", analysis.CURVE_COLUMNS, rows)


def write_moments(est: analysis.MomentEstimates, out_dir):
    return write_csv(out_dir / "moments.csv",
                     ["B_x4_hat", "B_x4_sem", "B_lambda4_hat", "B_lambda4_sem", "samples"],
                     [[est.B_x4_hat, est.B_x4_sem, est.B_lambda4_hat, est.B_lambda4_sem,
                       est.samples]])


def write_decay(fit: analysis.DecayFit, out_dir):
    return write_csv(out_dir / "decay.csv", ["window", "mean_product", "sem"],
                     zip(fit.windows, fit.mean_product, fit.sem))


def write_bound(rep: analysis.BoundReport, out_dir):
    return write_csv(out_dir / "bound.csv",
                     ["B1", "B2", "C_hat", "gamma_hat", "theorem1_rhs", "observed_plateau",
                      "bound_satisfied"],
                     [[rep.B1, rep.B2, rep.C_hat, rep.gamma_hat, rep.theorem1_rhs,
                       rep.observed_plateau, rep.bound_satisfied]])


def cmd_simulate(cfg, threads=None, trace=False):
    setup = analysis.make_setup(cfg)
    result = analysis.monte_carlo(setup, threads)
    write_curves(result, cfg.out_dir)
    write_moments(result.moments, cfg.out_dir)
    est = result.moments
    print(f"B_x^4 = {est.B_x4_hat:.4g} +/- {est.B_x4_sem:.2g}  "
          f"(reference {analysis.REFERENCE_BX4:g}, order of magnitude only)")
    print(f"B_lambda^4 = {est.B_lambda4_hat:.4g} +/- {est.B_lambda4_sem:.2g}  "
          f"(reference {analysis.REFERENCE_BL4:g}, order of magnitude only)")
    print(f"plateau of E||u - u*||_G^2 = {result.plateau():.6g}")
    if trace:
        _write_trace(setup, cfg.out_dir)
    return EXIT_OK


def cmd_decay(cfg, threads=None, trace=False):
    setup = analysis.make_setup(cfg)
    fit = analysis.estimate_decay(setup, threads=threads)
    write_decay(fit, cfg.out_dir)
    print(f"C_hat = {fit.C_hat!r}  gamma_hat = {fit.gamma_hat!r}  R^2 = {fit.r_squared:.6f}")
    return EXIT_OK


def cmd_bound(cfg, threads=None, trace=False):
    setup = analysis.make_setup(cfg)
    result = analysis.monte_carlo(setup, threads)
    fit = analysis.estimate_decay(setup, threads=threads)
    rep = analysis.theorem1_rhs(result.moments, fit, setup, result.plateau(),
                                result.plateau("mse_u_mean"))
    write_bound(rep, cfg.out_dir)
    print(f"theorem1_rhs = {rep.theorem1_rhs:.6g}  observed_plateau = {rep.observed_plateau:.6g}  "
          f"bound_satisfied = {rep.bound_satisfied}")
    print(f"unweighted plateau = {rep.observed_plateau_unweighted:.6g}  "
          f"eps0 = {rep.warm_start_eps:g}  eps0^2 = {rep.warm_start_eps_sq:g}")
    if trace:
        _write_trace(setup, cfg.out_dir)
    return EXIT_OK


def cmd_graph_info(cfg, threads=None, trace=False):
    setup = analysis.make_setup(cfg)
    sp = setup.spectrum
    print(f"n={setup.graph.n_nodes}")
    print(f"edges={setup.graph.n_edges}")
    print(f"m_arcs={setup.arcs.m_arcs}")
    print(f"gamma_L={sp.gamma_L:.12g} ({sp.convention.value})")
    print(f"Gamma_L={sp.Gamma_L:.12g}")
    print(f"algebraic_connectivity={sp.algebraic_connectivity:.12g}")
    print("eigenvalues=" + " ".join(f"{v:.12g}" for v in sp.eigenvalues))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_edge_list(setup.graph, cfg.out_dir / "graph.txt")
    return EXIT_OK


def cmd_verify_lemma1(cfg, threads=None, trace=False):
    setup = analysis.make_setup(cfg)
    records = analysis.run_tracks(setup, check_lemma=True, threads=threads)
    checked = sum(r.lemma_slack.size for r in records)
    bad = sum(r.lemma_violations for r in records)
    worst = min(float(np.min(r.lemma_slack / (1.0 + r.lemma_rhs))) for r in records)
    write_csv(cfg.out_dir / "lemma1.csv", ["track", "k", "slack", "rhs"],
              ((t, k + 1, s, r) for t, rec in enumerate(records)
               for k, (s, r) in enumerate(zip(rec.lemma_slack, rec.lemma_rhs))))
    print(f"checked {checked} steps over {len(records)} tracks: {bad} violations "
          f"(worst relative slack {worst:.3e})")
    return EXIT_OK if bad == 0 else EXIT_INVARIANT


COMMANDS = {
    "simulate": cmd_simulate,
    "bound": cmd_bound,
    "decay": cmd_decay,
    "graph-info": cmd_graph_info,
    "verify-lemma1": cmd_verify_lemma1,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
    except (UsageError, ConfigError, OSError) as exc:
        print(f"admmtrack: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, args.threads, args.trace)
    except (analysis.TrackError, WarmStartError, analysis.DegenerateDecayError,
            ConnectivityError, np.linalg.LinAlgError) as exc:
        print(f"admmtrack: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
