"""Command-line entry point ``ecx``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from ecx import __version__
from ecx import io as eio
from ecx import experiments as ex
from ecx.errors import NumericalError, ValidationError
from ecx.model import GeneratorSpec, parse_config_text
from ecx.pipeline import SpecializationMatrix

log = logging.getLogger("ecx")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

SINGLE_DEFAULTS = {"kind": "linspace", "n_economies": 10, "n_activities": 20, "n_capabilities": 1}
MULTI_DEFAULTS = {"kind": "linspace", "n_economies": 100, "n_activities": 1000, "n_capabilities": 10}
NETWORK_DEFAULTS = {
    "kind": "mixed", "n_economies": 100, "n_activities": 200, "n_capabilities": 10, "alpha": 0.75,
}
SWEEP_KEYS = ("alpha_min", "alpha_max", "alpha_points", "reps", "n_economies", "n_activities",
              "n_capabilities", "base", "workers", "seed")
NETWORK_KEYS = ("proximity", "n_std", "matrix")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _read_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return parse_config_text(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from None


def _spec(defaults: dict[str, Any], cfg: dict[str, Any], seed: int | None) -> GeneratorSpec:
    data = {**defaults, **cfg}
    if seed is not None:
        data["seed"] = seed
    return GeneratorSpec.from_dict(data)


def _out(args: argparse.Namespace) -> Path:
    return Path(args.out or f"ecx-{args.command}")


def cmd_model(args: argparse.Namespace, defaults: dict[str, Any]) -> int:
    spec = _spec(defaults, _read_config(args.config), args.seed)
    out = _out(args)
    run = ex.run_model(spec, out)
    (out / "spec.txt").write_text(spec.dumps())
    print(f"spearman(eci, r) = {run.spearman_eci:.6f}; artifacts in {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    unknown = set(cfg) - set(SWEEP_KEYS)
    if unknown:
        raise ValidationError(f"unknown sweep fields: {sorted(unknown)}")
    lo, hi, points = ex.FULL_GRID if args.full_scale else ex.DESK_GRID
    reps = ex.FULL_REPS if args.full_scale else ex.DESK_REPS
    dims = ex.FULL_DIMS if args.full_scale else ex.DESK_DIMS
    grid = np.linspace(float(cfg.get("alpha_min", lo)), float(cfg.get("alpha_max", hi)),
                       int(cfg.get("alpha_points", points)))
    dims = (int(cfg.get("n_economies", dims[0])), int(cfg.get("n_activities", dims[1])),
            int(cfg.get("n_capabilities", dims[2])))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    workers = args.workers or int(cfg.get("workers", ex.default_workers()))
    result = ex.run_phase_sweep(grid, int(cfg.get("reps", reps)), dims, seed,
                                base=str(cfg.get("base", "linspace")), workers=workers)
    out = ex.write_sweep(result, _out(args))
    print(f"transition (largest drop midpoint) = {result.transition():.4f}; artifacts in {out}")
    return EXIT_OK


def cmd_equilibrium(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    scenario = ex.EquilibriumScenario.from_dict(cfg)
    run = ex.run_equilibrium(scenario, _out(args))
    res = run.summary()["residuals"]
    print(f"clearing residual {res['market_clearing']:.3e}; artifacts in {_out(args)}")
    return EXIT_OK


def cmd_network(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    kind = str(cfg.pop("proximity", "min_conditional"))
    n_std = float(cfg.pop("n_std", 1.0))
    matrix = args.matrix or cfg.pop("matrix", None)
    if matrix is not None:
        values, e_ids, a_ids = eio.read_matrix_csv(matrix)
        if not np.isin(values, (0, 1)).all():
            raise ValidationError(f"{matrix}: specialization matrix must be binary")
        m = SpecializationMatrix(values.astype(np.int8), e_ids, a_ids)
    else:
        spec = _spec(NETWORK_DEFAULTS, cfg, args.seed)
        m = ex.run_model(spec).pipeline.specialization
    g = ex.network_from_specialization(m, kind, n_std)  # type: ignore[arg-type]
    out = ex.write_network(g, _out(args))
    print(f"{g.n_nodes} nodes, {int(g.in_backbone.sum())} backbone edges; artifacts in {out}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    report = ex.oracle_report(seed=args.seed or 0)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    eio.write_json(out / "oracle.json", report)
    for case in report["cases"]:
        print(f"{'PASS' if case['pass'] else 'FAIL'} {case['kind']} {case['sizes']}")
    print(f"{'PASS' if report['separable']['pass'] else 'FAIL'} separable")
    print(f"{'PASS' if report['shifted']['pass'] else 'FAIL'} shifted")
    if not report["pass"]:
        raise NumericalError("pipeline disagrees with closed-form results")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value or YAML file of run parameters")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (default: ecx-<command>)")
    common.add_argument("--full-scale", action="store_true", help="full-size sweep grid, replicates and dimensions")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="ecx", description="Economic complexity toy-model toolkit.")
    p.add_argument("--version", action="version", version=f"ecx {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("single", parents=[common], help="single-capability model run")
    sub.add_parser("multi", parents=[common], help="multi-capability model run")
    sp = sub.add_parser("sweep", parents=[common], help="mixing-parameter phase sweep")
    sp.add_argument("--workers", type=int, help="worker processes (results are identical)")
    sub.add_parser("equilibrium", parents=[common], help="short-run price equilibrium")
    np_ = sub.add_parser("network", parents=[common], help="relatedness network backbone")
    np_.add_argument("--matrix", help="binary M_cp CSV instead of a generated model")
    sub.add_parser("oracle-check", parents=[common], help="compare pipeline with closed forms")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "single":
            return cmd_model(args, SINGLE_DEFAULTS)
        if args.command == "multi":
            return cmd_model(args, MULTI_DEFAULTS)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "equilibrium":
            return cmd_equilibrium(args)
        if args.command == "network":
            return cmd_network(args)
        return cmd_oracle(args)
    except ValidationError as exc:
        print(f"ecx: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ecx: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
