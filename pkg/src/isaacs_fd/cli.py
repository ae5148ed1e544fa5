"""Batch experiment driver.

    isaacs-fd {solve,rates,kgap,regularity} --config CONFIG.json --out DIR

Writes ``DIR/results.csv`` and ``DIR/manifest.json``.  Column sets:

* solve: ``t, x1..xd, value`` (every grid point)
* rates: ``h, sup_error, pairwise_order``
* kgap: ``K, gap``
* regularity: ``epsilon, seminorm``

Floats are written with ``repr`` (shortest round-trip form).  The worker cap
for slice sweeps can be lowered with ``ISAACS_FD_MAX_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .analysis import holder_seminorm, k_gap_study, regularity_study, rate_study
from .errors import ConfigParseError, IsaacsError
from .geometry import Box, build_grid, domain_from_dict
from .lattice import standard_directions
from .operators import PucciParams
from .problem import ActionSets, constant_coefficient_problem, make_manufactured
from .solver import SolverConfig, solve_isaacs

logger = logging.getLogger(__name__)

STUDIES = ("solve", "rates", "kgap", "regularity")


def load_schema() -> dict:
    return json.loads(resources.files("isaacs_fd").joinpath("config_schema.json").read_text())


def _field(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def parse_config(raw: dict) -> dict:
    """Validate ``raw`` against the schema plus the cross-field rules."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        raise ConfigParseError(f"{_field(err.path)}: {err.message}")
    hs = raw["grid"]["h"]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigParseError("grid.h: values must be strictly decreasing")
    T = raw["grid"]["T"]
    if any(h * h >= T for h in hs):
        raise ConfigParseError("grid.T: must exceed h**2 for every h")
    Ks = raw.get("study", {}).get("K_list", [])
    if any(b <= a for a, b in zip(Ks, Ks[1:])):
        raise ConfigParseError("study.K_list: values must be strictly increasing")
    return raw


def read_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def _constant_case(params: dict, domain_spec):
    try:
        a = np.atleast_2d(np.asarray(params["a"], dtype=float))
    except KeyError:
        raise ConfigParseError("problem.params.a: required for constant_coefficient") from None
    d = a.shape[0]
    if a.shape != (d, d):
        raise ConfigParseError("problem.params.a: must be a square matrix")
    b = np.asarray(params.get("b", [0.0] * d), dtype=float)
    c = float(params.get("c", 0.0))
    gspec = params.get("g", {"kind": "zero"})
    kind = gspec.get("kind", "zero")
    if kind == "zero":
        p, q = np.zeros(d), 0.0
    elif kind == "constant":
        p, q = np.zeros(d), float(gspec.get("value", 0.0))
    elif kind == "affine":
        p, q = np.asarray(gspec["p"], dtype=float), float(gspec.get("q", 0.0))
    else:
        raise ConfigParseError(f"problem.params.g.kind: unknown kind {kind!r}")

    def g(t, x, _p=p, _q=q):
        return x @ _p + _q

    f = params.get("f", 0.0)
    exact = None
    if f == "consistent":
        f = -float(b @ p)
        if c == 0.0:
            exact = g
    problem = constant_coefficient_problem(
        a, b, c, float(f), g, actions=ActionSets((0,), (0,)), delta=float(params.get("delta", 0.5))
    )
    domain = domain_from_dict(domain_spec) if domain_spec else Box((0.0,) * d, (1.0,) * d)
    return problem, domain, exact


def build_case(cfg: dict):
    """Return ``(problem, domain, exact_or_None)`` for the configured family."""
    name = cfg["problem"]["name"]
    params = dict(cfg["problem"].get("params", {}))
    T = cfg["grid"]["T"]
    dom = cfg["grid"].get("domain")
    if name == "constant_coefficient":
        return _constant_case(params, dom)
    params["T"] = T
    try:
        case = make_manufactured(name, params)
    except (ValueError, KeyError) as exc:
        raise ConfigParseError(f"problem.params: {exc}") from exc
    if dom is not None and domain_from_dict(dom) != case.domain:
        raise ConfigParseError(f"grid.domain: {name} is defined on {case.domain.to_dict()} only")
    return case.problem, case.domain, case.exact


def _solver_config(cfg: dict) -> SolverConfig:
    try:
        return SolverConfig(**cfg.get("solver", {}))
    except ValueError as exc:
        raise ConfigParseError(f"solver: {exc}") from exc


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def run_study(study: str, cfg: dict, out_dir: Path) -> dict:
    """Execute ``study`` and write the CSV and manifest; returns the manifest."""
    problem, domain, exact = build_case(cfg)
    config = _solver_config(cfg)
    directions = standard_directions(problem.dim)
    hs = cfg["grid"]["h"]
    T = cfg["grid"]["T"]
    spec = cfg.get("study", {})
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    manifest = {
        "study": study,
        "config": cfg,
        "versions": {
            "isaacs_fd": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    stats = []

    def context(**kw):
        return ", ".join(f"{k}={v!r}" for k, v in kw.items())

    if study == "solve":
        h = hs[0]
        try:
            grid = build_grid(domain, T, h, directions.r_lambda)
            v = solve_isaacs(problem, grid, directions, config)
        except IsaacsError as exc:
            raise IsaacsError(f"solve failed ({context(h=h)}): {exc}") from exc
        header = ["t"] + [f"x{i + 1}" for i in range(grid.dim)] + ["value"]
        rows = (
            [float(t)] + [float(c) for c in grid.coords[j]] + [float(v.values[k, j])]
            for k, t in enumerate(grid.times)
            for j in range(len(grid.nodes))
        )
        _write_csv(csv_path, header, rows)
        stats.append({"h": h, **v.stats.summary()})
        if exact is not None:
            manifest["sup_error"] = float(np.max(np.abs(v.values - grid.sample(exact).values)))

    elif study == "rates":
        if exact is None:
            raise ConfigParseError("problem: rates study needs a family with a closed-form solution")
        if len(hs) < 2:
            raise ConfigParseError("grid.h: rates study needs at least two step sizes")
        from .problem import ManufacturedCase

        case = ManufacturedCase(problem, exact, domain, T, cfg["problem"]["name"])
        try:
            rep = rate_study(case, hs, directions, config)
        except IsaacsError as exc:
            raise IsaacsError(f"rates study failed: {exc}") from exc
        orders = [None] + rep.pairwise_orders
        _write_csv(csv_path, ["h", "sup_error", "pairwise_order"],
                   [(h, e, o) for (h, e), o in zip(rep.samples, orders)])
        manifest.update(fitted_exponent=rep.fitted_exponent, pairwise_orders=rep.pairwise_orders,
                        fit_residual=rep.residual)
        stats += [{"h": h, **v.stats.summary()} for h, v in zip(hs, rep.meta["solutions"])]

    elif study == "kgap":
        Ks = spec.get("K_list")
        if not Ks:
            raise ConfigParseError("study.K_list: required for kgap")
        h = hs[0]
        pucci = None
        if "lambda_low" in spec or "lambda_high" in spec:
            dflt = PucciParams.default(problem.delta)
            pucci = PucciParams(spec.get("lambda_low", dflt.lambda_low), spec.get("lambda_high", dflt.lambda_high))
        try:
            grid = build_grid(domain, T, h, directions.r_lambda)
            rep = k_gap_study(problem, grid, directions, Ks, config, pucci)
        except IsaacsError as exc:
            raise IsaacsError(f"kgap study failed ({context(h=h)}): {exc}") from exc
        except ValueError as exc:
            raise ConfigParseError(f"study: {exc}") from exc
        _write_csv(csv_path, ["K", "gap"], zip(rep.meta["K"], rep.meta["gaps"]))
        manifest.update(fitted_exponent=_finite(rep.fitted_exponent), exact_to_tolerance=rep.exact,
                        pairwise_orders=rep.pairwise_orders)
        for K, (up, lo) in zip(rep.meta["K"], rep.meta["solutions"]):
            stats.append({"K": K, "side": "upper", **up.stats.summary()})
            stats.append({"K": K, "side": "lower", **lo.stats.summary()})

    elif study == "regularity":
        eps = spec.get("epsilon_list")
        chi = spec.get("chi")
        if not eps or chi is None:
            raise ConfigParseError("study: regularity needs epsilon_list and chi")
        h = hs[0]
        try:
            grid = build_grid(domain, T, h, directions.r_lambda)
            v = solve_isaacs(problem, grid, directions, config)
            if len(eps) >= 2:
                rep = regularity_study(v, eps, chi)
                pairs = list(zip(rep.meta["epsilon"], rep.meta["seminorm"]))
                manifest.update(log_log_slope=_finite(rep.fitted_exponent), pairwise_orders=rep.pairwise_orders)
            else:
                pairs = [(float(eps[0]), holder_seminorm(v, grid, eps[0], chi))]
                manifest["log_log_slope"] = None
        except IsaacsError as exc:
            raise IsaacsError(f"regularity study failed ({context(h=h)}): {exc}") from exc
        _write_csv(csv_path, ["epsilon", "seminorm"], pairs)
        stats.append({"h": h, **v.stats.summary()})
    else:
        raise ConfigParseError(f"study.kind: unknown study {study!r}")

    manifest["solver_stats"] = stats
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, allow_nan=False) + "\n")
    return manifest


def run_config(config_path, study: str | None = None, out_dir=None) -> int:
    """Run one study from a config file; returns a process exit status."""
    try:
        cfg = read_config(config_path)
        declared = cfg.get("study", {}).get("kind")
        study = study or declared
        if study is None:
            raise ConfigParseError("study.kind: no study given on the command line or in the config")
        if declared is not None and declared != study:
            raise ConfigParseError(f"study.kind: config declares {declared!r} but {study!r} was requested")
        out = Path(out_dir or cfg.get("output") or ".")
        run_study(study, cfg, out)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IsaacsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="isaacs-fd", description=__doc__.split("\n\n")[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="study", required=True)
    for name in STUDIES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: config 'output' or .)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    return run_config(args.config, args.study, args.out)


if __name__ == "__main__":
    sys.exit(main())
