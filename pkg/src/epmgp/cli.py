"""Command-line entry point.

Exit status: 0 on success, 1 for invalid input (the message names the
field), 2 for numerical failure or, with ``--strict``, non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .ep import EPConfig, run_epmgp, run_power_ep
from .errors import EPMGPError, NotConverged, Unsupported, ValidationError
from .experiments import (
    GENERATOR_VERSION,
    PATHOLOGY_KINDS,
    STUDY_KINDS,
    TRUE_BOX_LOG_Z,
    StudyConfig,
    default_pathology_ep_config,
    default_study_ep_config,
    run_alpha_sweep,
    run_pathology,
    run_study,
)
from .io import dataclass_rows, format_csv, load_problem, write_text
from .oracles import LATTICE_ID, PRNG_ID, genz_qmc, genz_qmc_linear, mc_rejection, orthant_analytic, univariate_exact

logger = logging.getLogger("epmgp")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

CASE_COLUMNS = {
    "case_id": "caseId",
    "log_z_ep": "logZ_ep",
    "log_z_oracle": "logZ_oracle",
    "rel_error": "relError",
    "cond_k": "condK",
    "cond_cprime": "condCprime",
    "gram_fro": "gramFro",
    "gram_l1": "gramL1",
    "oracle_method": "oracleMethod",
    "oracle_stderr": "oracleStderr",
}
STUDY_HEADER = [
    "record", "caseId", "cell", "n", "m", "seed", "logZ_ep", "logZ_oracle", "relError",
    "condK", "condCprime", "gramFro", "gramL1", "sweeps", "converged", "oracleMethod", "oracleStderr",
    "count", "relError_q25", "relError_q75", "oracleRelStderr_median", "notConverged",
]
PATHOLOGY_HEADER = ["kind", "sweepValue", "logZ_ep", "logZ_true", "signedRelError", "sweeps", "converged"]
ALPHA_HEADER = ["kind", "sweepValue", "alpha", "logZ_ep", "logZ_true", "signedRelError", "sweeps", "converged", "oscillation", "optimal"]
_ROW_NAMES = {
    "sweep_value": "sweepValue",
    "log_z_ep": "logZ_ep",
    "log_z_true": "logZ_true",
    "signed_rel_error": "signedRelError",
}

CONSTRUCTIONS = {
    "redundancy": "N(0,I) in 2d over [-1,1]^2 with both axis slabs repeated k times",
    "extramass": "N(0,I) in 2d; squares [-1,2w-1]^2 and [1-2w,1]^2 whose intersection is [-1,1]^2",
    "rotated": "N(0,I) in 2d; r squares at angles j*pi/(2r), half-width |cos|+|sin| so each circumscribes [-1,1]^2",
}


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1), not numerical ones
    def error(self, message):
        raise ValidationError("arguments", message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _ep_flags(p: argparse.ArgumentParser, defaults: EPConfig | None) -> None:
    g = p.add_argument_group("EP options")
    g.add_argument("--tol", type=float, default=None, help=f"convergence tolerance (default {defaults.tol if defaults else 1e-10:g})")
    g.add_argument("--max-sweeps", type=int, default=None)
    g.add_argument("--damping", type=float, default=None, help="site step size in (0, 1]")
    g.add_argument("--sequential-refresh", action="store_true", default=None, help="update the posterior after every factor")
    g.add_argument("--parallel-refresh", dest="sequential_refresh", action="store_false", default=None, help="update the posterior once per sweep")


def _ep_config(args, base: EPConfig) -> EPConfig:
    kw = {}
    if args.tol is not None:
        kw["tol"] = args.tol
    if args.max_sweeps is not None:
        kw["max_sweeps"] = args.max_sweeps
    if args.damping is not None:
        kw["damping"] = args.damping
    if args.sequential_refresh is not None:
        kw["sequential"] = args.sequential_refresh
    fields = dict(tol=base.tol, max_sweeps=base.max_sweeps, damping=base.damping, sequential=base.sequential)
    fields.update(kw)
    return EPConfig(**fields)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epmgp", description="Gaussian probabilities of polyhedra by expectation propagation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run EP (or Power EP) on a problem file")
    s.add_argument("--problem", required=True)
    s.add_argument("--alphas", type=_floats, default=None, help="one power, or one per constraint")
    s.add_argument("--out", default=None, help="JSON output path (default stdout)")
    s.add_argument("--strict", action="store_true", help="exit 2 if EP did not converge")
    _ep_flags(s, EPConfig())

    o = sub.add_parser("oracle", help="reference probability for a problem file")
    o.add_argument("--method", choices=("mc", "qmc", "orthant", "exact"), required=True)
    o.add_argument("--problem", required=True)
    o.add_argument("--samples", type=int, default=None, help="MC samples, or lattice points per shift")
    o.add_argument("--shifts", type=int, default=8)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", default=None)

    st = sub.add_parser("study", help="random-problem error study")
    st.add_argument("--kind", choices=STUDY_KINDS, required=True)
    st.add_argument("--dims", type=_ints, default=None)
    st.add_argument("--m-list", type=_ints, default=None)
    st.add_argument("--cases", type=int, default=50)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--scale", type=float, default=1.0, help="region half-width scale")
    st.add_argument("--qmc-points", type=int, default=62_500, help="lattice points per shift")
    st.add_argument("--qmc-shifts", type=int, default=8)
    st.add_argument("--mc-samples", type=int, default=1_000_000)
    st.add_argument("--out", default=None)
    st.add_argument("--strict", action="store_true")
    _ep_flags(st, default_study_ep_config())

    pa = sub.add_parser("pathology", help="EP on constructed [-1,1]^2 problems")
    pa.add_argument("--kind", choices=PATHOLOGY_KINDS, required=True)
    pa.add_argument("--sweep", type=_floats, required=True)
    pa.add_argument("--out", default=None)
    pa.add_argument("--strict", action="store_true")
    _ep_flags(pa, default_pathology_ep_config())

    al = sub.add_parser("alpha-sweep", help="Power EP over a grid of uniform powers")
    al.add_argument("--kind", choices=PATHOLOGY_KINDS, required=True)
    al.add_argument("--sweep", type=_floats, required=True)
    al.add_argument("--grid", type=_floats, required=True)
    al.add_argument("--no-search", dest="search", action="store_false", help="skip the optimal-power search")
    al.add_argument("--out", default=None)
    _ep_flags(al, default_pathology_ep_config())
    return p


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def cmd_solve(args) -> int:
    spec = load_problem(args.problem)
    cfg = _ep_config(args, EPConfig())
    alphas = args.alphas if args.alphas is not None else spec.alphas
    if alphas is not None:
        a = np.asarray(alphas, dtype=float)
        if a.size == 1:
            a = float(a[0])
        state = run_power_ep(spec.prior, spec.region, cfg, alphas=a)
    else:
        state = run_epmgp(spec.prior, spec.region, cfg)
    out = {
        "logZ": _finite_or_none(state.log_z),
        "Z": _finite_or_none(state.z) if math.isfinite(state.log_z) else None,
        "mu": state.mu.tolist(),
        "sigma": state.sigma.tolist(),
        "sweeps": state.sweeps,
        "converged": bool(state.converged),
    }
    write_text(json.dumps(out, indent=2) + "\n", args.out)
    if not math.isfinite(state.log_z):
        logger.error("log Z is not finite")
        return EXIT_NUMERICAL
    if args.strict and not state.converged:
        raise NotConverged(f"EP stopped after {state.sweeps} sweeps (max change {state.max_delta:.3g})")
    return EXIT_OK


def _exact(spec):
    prior, region = spec.prior, spec.region
    if region.m == 1:
        c = region.directions[0]
        return univariate_exact(float(c @ prior.mean), float(c @ prior.cov @ c), region.lower[0], region.upper[0])
    cov = prior.cov
    if region.is_axis_aligned() and region.is_rectangular() and np.count_nonzero(cov - np.diag(np.diag(cov))) == 0:
        axes = np.argmax(np.abs(region.directions), axis=1)
        sign = region.directions[np.arange(region.m), axes]
        log_v = 0.0
        for i, ax in enumerate(axes):
            lo, hi = (region.lower[i], region.upper[i]) if sign[i] > 0 else (-region.upper[i], -region.lower[i])
            e = univariate_exact(float(sign[i] * prior.mean[ax]), float(cov[ax, ax]), lo, hi)
            log_v += e.log_value
        return type(e)(math.exp(log_v), 0.0, "univariate", 0)
    raise Unsupported("exact answers need one constraint, or an axis-aligned box with diagonal covariance")


def cmd_oracle(args) -> int:
    spec = load_problem(args.problem)
    if args.method == "mc":
        est = mc_rejection(spec.prior, spec.region, args.samples or 1_000_000, seed=args.seed)
    elif args.method == "qmc":
        qmc = genz_qmc_linear if spec.region.m > spec.region.n else genz_qmc
        est = qmc(spec.prior, spec.region, args.samples or 62_500, args.shifts, seed=args.seed)
    elif args.method == "orthant":
        r = spec.region
        ok = r.is_axis_aligned() and r.is_rectangular() and np.allclose(spec.prior.mean, 0)
        ok = ok and np.all(np.abs(r.lower) == 0) and np.all(r.upper == math.inf) and np.all(r.directions.sum(axis=1) > 0)
        if not ok:
            raise Unsupported("orthant oracle needs zero mean and constraints 0 < x_i < inf")
        est = orthant_analytic(spec.prior.cov)
    else:
        est = _exact(spec)
    out = {
        "method": est.method,
        "Z": est.value,
        "logZ": _finite_or_none(est.log_value),
        "stderr": est.stderr,
        "samples": est.samples,
        "seed": args.seed,
        "prng": PRNG_ID,
    }
    write_text(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def _metadata(**extra) -> dict:
    meta = {"generator": f"epmgp {__version__}, generator version {GENERATOR_VERSION}", "prng": PRNG_ID}
    meta.update(extra)
    return meta


def cmd_study(args) -> int:
    cfg_kw = dict(
        kind=args.kind,
        cases_per_cell=args.cases,
        seed=args.seed,
        ep_config=_ep_config(args, default_study_ep_config()),
        region_scale=args.scale,
        qmc_points=args.qmc_points,
        qmc_shifts=args.qmc_shifts,
        mc_samples=args.mc_samples,
    )
    if args.dims is not None:
        cfg_kw["dims"] = tuple(args.dims)
    elif args.kind == "orthant":
        cfg_kw["dims"] = (2, 3)
    if args.m_list is not None:
        cfg_kw["m_list"] = tuple(args.m_list)
    cfg = StudyConfig(**cfg_kw)
    rows, aggs = run_study(cfg)

    records = [dict(record="case", **r) for r in dataclass_rows(rows, CASE_COLUMNS)]
    for a in aggs:
        records.append(
            {
                "record": "aggregate",
                "cell": a.cell,
                "relError": a.rel_error_median,
                "relError_q25": a.rel_error_q25,
                "relError_q75": a.rel_error_q75,
                "count": a.count,
                "oracleRelStderr_median": a.oracle_rel_stderr_median,
                "notConverged": a.not_converged,
            }
        )
    meta = _metadata(
        kind=cfg.kind,
        seed=cfg.seed,
        dims=",".join(map(str, cfg.dims)),
        m_list=",".join(map(str, cfg.m_list)) if cfg.kind == "polyM" else "",
        cases_per_cell=cfg.cases_per_cell,
        region_scale=cfg.region_scale,
        lattice=LATTICE_ID,
        oracle=f"qmc {cfg.qmc_points} points x {cfg.qmc_shifts} shifts (surplus constraints on the last variable when m > n), mc {cfg.mc_samples} samples if directions are rank deficient",
        ep=f"tol={cfg.ep_config.tol:g} max_sweeps={cfg.ep_config.max_sweeps} damping={cfg.ep_config.damping:g} sequential={cfg.ep_config.sequential}",
        aggregate="record=aggregate rows: relError is the cell median",
    )
    write_text(format_csv(STUDY_HEADER, records, meta), args.out)
    bad = sum(not r.converged for r in rows)
    if bad and args.strict:
        raise NotConverged(f"{bad} cases did not converge")
    return EXIT_OK


def cmd_pathology(args) -> int:
    cfg = _ep_config(args, default_pathology_ep_config())
    rows = run_pathology(args.kind, args.sweep, cfg)
    meta = _metadata(kind=args.kind, construction=CONSTRUCTIONS[args.kind], logZ_true=TRUE_BOX_LOG_Z)
    write_text(format_csv(PATHOLOGY_HEADER, dataclass_rows(rows, _ROW_NAMES), meta), args.out)
    bad = sum(not r.converged for r in rows)
    if bad and args.strict:
        raise NotConverged(f"{bad} sweep values did not converge")
    return EXIT_OK


def cmd_alpha_sweep(args) -> int:
    cfg = _ep_config(args, default_pathology_ep_config())
    rows = run_alpha_sweep(args.kind, args.sweep, args.grid, cfg, search=args.search)
    meta = _metadata(
        kind=args.kind,
        construction=CONSTRUCTIONS[args.kind],
        logZ_true=TRUE_BOX_LOG_Z,
        search="golden section on |signedRelError|; optimal=true rows" if args.search else "off",
    )
    write_text(format_csv(ALPHA_HEADER, dataclass_rows(rows, _ROW_NAMES), meta), args.out)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "study": cmd_study,
    "pathology": cmd_pathology,
    "alpha-sweep": cmd_alpha_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"epmgp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, Unsupported) as exc:
        print(f"epmgp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EPMGPError as exc:
        print(f"epmgp: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
