"""Command-line frontend: ``rlcm <subcommand> ...``.

Exit codes for ``check`` are a stable contract: 0 when the sufficient
conditions certify identifiability, 2 when the design is incomplete
(hence non-identifiable), 3 when the checks are inconclusive, 1 on
input errors.  Every other subcommand exits 0 on success and 1 on any
error.  All randomness is controlled by explicit ``--seed`` flags
(default 0), so every invocation is reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import fileio
from .core import QMatrix, ThetaMatrix, weight_graded_order
from .identifiability import (
    NonIdentifiablePair,
    Verdict,
    c1_only_counterexample,
    distributions_equal,
    incomplete_counterexample,
    verdict,
)
from .inference import EmConfig, consistency_experiment, em_fit, simulate
from .models import DinaParams, theta_from_params
from .tmatrix import apply_shift, build_tmatrix, build_transform, marginal_vector, response_distribution

DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_INCOMPLETE = 2
EXIT_NOT_COVERED = 3

# input-path argument names per subcommand, validated before any computation
_INPUT_ARGS = {
    "check": ("q", "theta", "params"),
    "counterexample": ("q", "theta", "params", "p", "extra_q"),
    "verify-pair": ("pair",),
    "tmatrix": ("q", "theta", "params", "p"),
    "simulate": ("q", "theta", "params", "p"),
    "fit": ("q", "data"),
    "experiment": ("q", "params", "p"),
    "verify-transform": (),
}


@dataclass(frozen=True)
class RunConfig:
    """One resolved invocation: paths checked, seed and tolerances pinned."""

    subcommand: str
    inputs: Tuple[Path, ...]
    output: Optional[Path]
    seed: int
    tol: float
    display_order: str

    def __post_init__(self):
        for path in self.inputs:
            if not path.is_file():
                raise FileNotFoundError(f"input file not found: {path}")


def _build_config(args) -> RunConfig:
    inputs = []
    for name in _INPUT_ARGS[args.subcommand]:
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            inputs.append(Path(value))
    return RunConfig(
        subcommand=args.subcommand,
        inputs=tuple(inputs),
        output=Path(args.out) if getattr(args, "out", None) else None,
        seed=getattr(args, "seed", DEFAULT_SEED),
        tol=getattr(args, "tol", 1e-7),
        display_order=getattr(args, "display_order", "binary"),
    )


def _load_theta(args, q: QMatrix) -> ThetaMatrix:
    if getattr(args, "theta", None):
        theta = fileio.read_theta_json(args.theta)
    elif getattr(args, "params", None):
        params, n_attributes = fileio.read_item_params_json(args.params)
        if n_attributes != q.n_attributes:
            raise ValueError(
                f"item parameters declare K={n_attributes}, Q-matrix has "
                f"K={q.n_attributes}"
            )
        theta = theta_from_params(q, params)
    else:
        raise ValueError("provide --theta or --params")
    if theta.n_items != q.n_items or theta.n_attributes != q.n_attributes:
        raise ValueError("theta dimensions do not match the Q-matrix")
    return theta


def _parse_families(spec: str, n_items: int) -> Tuple[str, ...]:
    names = [s.strip().upper() for s in spec.split(",")]
    if len(names) == 1:
        names = names * n_items
    if len(names) != n_items:
        raise ValueError(f"expected 1 or {n_items} family names, got {len(names)}")
    return tuple(names)


def _write_or_print(payload: dict, out: Optional[Path]) -> None:
    text = json.dumps(payload, indent=2)
    if out is not None:
        out.write_text(text + "\n")
    else:
        print(text)


def _cmd_check(args, config: RunConfig) -> int:
    q = fileio.read_qmatrix_csv(args.q)
    theta = None
    if args.theta or args.params:
        theta = _load_theta(args, q)
    report = verdict(q, theta)
    _write_or_print(report.to_dict(), config.output)
    if report.verdict is Verdict.IDENTIFIABLE:
        return EXIT_OK
    if report.verdict is Verdict.INCOMPLETE:
        return EXIT_INCOMPLETE
    return EXIT_NOT_COVERED


def _emit_pair(pair: NonIdentifiablePair, config: RunConfig) -> int:
    # re-verify with the exhaustive oracle before anything is written
    gap = distributions_equal(pair.first, pair.second)
    doc = fileio.pair_to_dict(pair)
    doc["verified_gap"] = gap
    _write_or_print(doc, config.output)
    print(f"verified distribution gap: {gap:.3e}", file=sys.stderr)
    return EXIT_OK


def _cmd_counterexample(args, config: RunConfig) -> int:
    if args.mode == "incomplete":
        if not args.q:
            raise ValueError("--mode incomplete requires --q")
        q = fileio.read_qmatrix_csv(args.q)
        theta = _load_theta(args, q)
        if not args.p:
            raise ValueError("--mode incomplete requires --p")
        p = fileio.read_proportion_json(args.p)
        pair = incomplete_counterexample(q, theta, p)
        return _emit_pair(pair, config)

    if args.k is None or not args.params or args.anchors is None:
        raise ValueError("--mode c1-only requires --k, --params and --anchors")
    if args.extra_q:
        extra = fileio.read_qmatrix_csv(args.extra_q).entries
    else:
        extra = np.zeros((0, args.k - 1), dtype=np.int64)
    params, n_attributes = fileio.read_item_params_json(args.params)
    if n_attributes != args.k:
        raise ValueError(f"item parameters declare K={n_attributes}, --k is {args.k}")
    if not all(isinstance(p, DinaParams) for p in params):
        raise ValueError("the c1-only construction needs DINA item parameters")
    anchors = tuple(float(a) for a in args.anchors.split(","))
    if len(anchors) != 2:
        raise ValueError("--anchors must hold two comma-separated reals")
    pair = c1_only_counterexample(args.k, extra, params, args.rho, anchors)
    return _emit_pair(pair, config)


def _cmd_verify_pair(args, config: RunConfig) -> int:
    # read_pair_json re-runs the enumeration oracle via build()
    pair = fileio.read_pair_json(args.pair)
    gap = distributions_equal(pair.first, pair.second)
    _write_or_print({"max_distribution_gap": gap,
                     "parameter_distance": pair.parameter_distance}, config.output)
    return EXIT_OK


def _display_perm(n_bits: int, order: str) -> np.ndarray:
    if order == "weight":
        return weight_graded_order(n_bits)
    return np.arange(1 << n_bits)


def _cmd_tmatrix(args, config: RunConfig) -> int:
    q = fileio.read_qmatrix_csv(args.q) if args.q else None
    if args.theta:
        theta = fileio.read_theta_json(args.theta)
    else:
        if q is None:
            raise ValueError("provide --theta, or --q together with --params")
        theta = _load_theta(args, q)
    t = build_tmatrix(theta)
    row_perm = _display_perm(theta.n_items, config.display_order)
    col_perm = _display_perm(theta.n_attributes, config.display_order)
    lines = [
        "# marginal table; rows = response patterns, columns = attribute profiles",
        f"# encoding: {fileio.CANONICAL_ORDER}; display order: {config.display_order}",
        "# columns: " + ",".join(str(int(c)) for c in col_perm),
    ]
    for r in row_perm:
        values = ",".join(repr(float(v)) for v in t.values[r][col_perm])
        lines.append(f"{int(r)},{values}")
    if args.p:
        p = fileio.read_proportion_json(args.p)
        dist = response_distribution(theta, p)
        dominance = marginal_vector(t, p)
        lines.append("# pattern,probability,dominance_probability")
        for r in row_perm:
            lines.append(f"{int(r)},{float(dist[r])!r},{float(dominance[r])!r}")
    text = "\n".join(lines) + "\n"
    if config.output is not None:
        config.output.write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_simulate(args, config: RunConfig) -> int:
    q = fileio.read_qmatrix_csv(args.q) if args.q else None
    if args.theta:
        theta = fileio.read_theta_json(args.theta)
    else:
        if q is None:
            raise ValueError("provide --theta, or --q together with --params")
        theta = _load_theta(args, q)
    p = fileio.read_proportion_json(args.p)
    data = simulate(theta, p, args.n, config.seed)
    if config.output is None:
        raise ValueError("simulate requires --out")
    fileio.write_response_csv(config.output, data)
    print(f"wrote {data.n_subjects} subjects x {data.n_items} items to "
          f"{config.output}", file=sys.stderr)
    return EXIT_OK


def _cmd_fit(args, config: RunConfig) -> int:
    q = fileio.read_qmatrix_csv(args.q)
    data = fileio.read_response_csv(args.data)
    families = _parse_families(args.families, q.n_items)
    em = EmConfig(max_iters=args.max_iters, tol=config.tol,
                  restarts=args.restarts, seed=config.seed)
    fit = em_fit(data, q, families, em)
    if config.output is not None:
        fileio.write_fit_json(config.output, fit, q.n_attributes)
    else:
        fileio_doc = {
            "item_params": [fileio._params_to_dict(p) for p in fit.item_params_hat],
            "p": fit.p_hat.probs.tolist(),
            "loglik": fit.loglik_trace[-1],
            "converged": fit.converged,
        }
        print(json.dumps(fileio_doc, indent=2))
    print(f"loglik {fit.loglik_trace[-1]:.4f} after {len(fit.loglik_trace) - 1} "
          f"iterations, converged={fit.converged}", file=sys.stderr)
    return EXIT_OK


def _cmd_experiment(args, config: RunConfig) -> int:
    q = fileio.read_qmatrix_csv(args.q)
    params, n_attributes = fileio.read_item_params_json(args.params)
    if n_attributes != q.n_attributes:
        raise ValueError("item parameters and Q-matrix disagree on K")
    p = fileio.read_proportion_json(args.p)
    families = _parse_families(args.families, q.n_items)
    n_grid = [int(n) for n in args.n_grid.split(",")]
    em = EmConfig(max_iters=args.max_iters, tol=config.tol,
                  restarts=args.restarts, seed=config.seed)
    table = consistency_experiment(q, families, params, p, n_grid,
                                   args.replications, config.seed, em)
    if config.output is not None:
        fileio.write_experiment_json(config.output, table)
    else:
        print(json.dumps(table.to_dict(), indent=2))
    for n, err in table.medians().items():
        print(f"N={n}: median max-abs error {err:.4f}", file=sys.stderr)
    return EXIT_OK


def _cmd_verify_transform(args, config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed)
    theta = ThetaMatrix(rng.uniform(size=(args.j, 1 << args.k)))
    shift = rng.uniform(-1.0, 1.0, size=args.j)
    transform = build_transform(shift)
    lhs = transform.values @ build_tmatrix(theta).values
    rhs = build_tmatrix(apply_shift(theta, shift)).values
    residual = float(np.abs(lhs - rhs).max())
    print(json.dumps({"J": args.j, "K": args.k, "seed": config.seed,
                      "max_abs_residual": residual}))
    return EXIT_OK if residual <= 1e-12 else EXIT_INPUT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlcm",
        description="Identifiability analysis, marginal-table algebra, "
                    "simulation and EM fitting for Q-restricted latent "
                    "class models.",
    )
    parser.add_argument("--schema", action="store_true",
                        help="print the JSON schemas of all file formats and exit")
    sub = parser.add_subparsers(dest="subcommand")

    def add_common(sp, seed=True, out=True, display=False):
        if seed:
            sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        if out:
            sp.add_argument("--out", type=str, default=None)
        if display:
            sp.add_argument("--display-order", choices=("binary", "weight"),
                            default="binary",
                            help="printed row/column order; storage is always "
                                 "binary-counter")

    sp = sub.add_parser("check", help="render an identifiability verdict for a design")
    sp.add_argument("--q", required=True, help="Q-matrix CSV")
    sp.add_argument("--theta", help="theta-matrix JSON")
    sp.add_argument("--params", help="item-params JSON")
    add_common(sp, seed=False)

    sp = sub.add_parser("counterexample",
                        help="construct a verified non-identifiable parameter pair")
    sp.add_argument("--mode", choices=("incomplete", "c1-only"), required=True)
    sp.add_argument("--q", help="Q-matrix CSV (incomplete mode)")
    sp.add_argument("--theta", help="theta-matrix JSON (incomplete mode)")
    sp.add_argument("--params", help="item-params JSON")
    sp.add_argument("--p", help="proportion-vector JSON (incomplete mode)")
    sp.add_argument("--k", type=int, help="attribute count (c1-only mode)")
    sp.add_argument("--extra-q", help="CSV of extra rows over attributes 2..K "
                                      "(c1-only mode)")
    sp.add_argument("--rho", type=float, default=1.0,
                    help="mass ratio between partner profiles (c1-only mode)")
    sp.add_argument("--anchors", help="two comma-separated zero-class anchors "
                                      "for items 1 and 2 (c1-only mode)")
    add_common(sp, seed=False)

    sp = sub.add_parser("verify-pair", help="re-verify a stored pair with the "
                                            "enumeration oracle")
    sp.add_argument("--pair", required=True)
    add_common(sp, seed=False)

    sp = sub.add_parser("tmatrix", help="emit the marginal table (and, with --p, "
                                        "the response distribution) as CSV")
    sp.add_argument("--q", help="Q-matrix CSV")
    sp.add_argument("--theta", help="theta-matrix JSON")
    sp.add_argument("--params", help="item-params JSON (needs --q)")
    sp.add_argument("--p", help="proportion-vector JSON")
    add_common(sp, seed=False, display=True)

    sp = sub.add_parser("simulate", help="draw response data")
    sp.add_argument("--q", help="Q-matrix CSV")
    sp.add_argument("--theta", help="theta-matrix JSON")
    sp.add_argument("--params", help="item-params JSON (needs --q)")
    sp.add_argument("--p", required=True, help="proportion-vector JSON")
    sp.add_argument("--n", type=int, required=True)
    add_common(sp)

    sp = sub.add_parser("fit", help="EM-fit item parameters and proportions")
    sp.add_argument("--q", required=True)
    sp.add_argument("--data", required=True, help="response CSV")
    sp.add_argument("--families", required=True,
                    help="one family, or J comma-separated families")
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--tol", type=float, default=1e-7)
    add_common(sp)

    sp = sub.add_parser("experiment", help="recovery error across sample sizes")
    sp.add_argument("--q", required=True)
    sp.add_argument("--params", required=True, help="true item-params JSON")
    sp.add_argument("--p", required=True, help="true proportion-vector JSON")
    sp.add_argument("--families", required=True)
    sp.add_argument("--n-grid", required=True, help="comma-separated sample sizes")
    sp.add_argument("--replications", type=int, default=5)
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--tol", type=float, default=1e-7)
    add_common(sp)

    sp = sub.add_parser("verify-transform",
                        help="check the shift-transform identity on random input")
    sp.add_argument("--j", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    add_common(sp, out=False)

    return parser


_HANDLERS = {
    "check": _cmd_check,
    "counterexample": _cmd_counterexample,
    "verify-pair": _cmd_verify_pair,
    "tmatrix": _cmd_tmatrix,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "experiment": _cmd_experiment,
    "verify-transform": _cmd_verify_transform,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.schema:
        print(json.dumps(fileio.SCHEMAS, indent=2))
        return EXIT_OK
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        config = _build_config(args)
        return _HANDLERS[args.subcommand](args, config)
    except (ValueError, FileNotFoundError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
