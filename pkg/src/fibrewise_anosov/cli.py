"""Command-line entry point and the report format.

    fibrewise-anosov <certify|homology|conjugate|leaves|sweep|demo> --config PATH [--seed N] [--out DIR]

Exit status: 0 when every verdict passes, 2 on a config or precondition
error, 3 when some verdict fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import COMMANDS, ConfigError, SystemConfig, parse_config
from .cones import (
    ConeField,
    approximate_invariant_bundles,
    check_cone_invariance,
    default_grid,
    stable_contraction_defect,
    unstable_expansion_defect,
)
from .conjugacy import EVALUATION_ALLOWANCE, SeriesParameters, build_conjugacy, injectivity_scan, verify_conjugacy
from .leaves import LeafError, compute_leaf, find_intersections, leaf_distance_bound, product_structure_scan
from .linear import NotHyperbolicError, NumericalBreakdown, compute_splitting
from .system import HomologyMismatch, InversionError, NotEquivariantError, displacement, induced_homology_matrix
from .torus import Grid
from .zoo import fixture_text

EXIT_OK, EXIT_PRECONDITION, EXIT_FAIL = 0, 2, 3
PRECONDITION_ERRORS = (
    ConfigError,
    HomologyMismatch,
    NotHyperbolicError,
    NotEquivariantError,
    NumericalBreakdown,
    InversionError,
    LeafError,
    ValueError,
)
DEGREE_TOL = 1e-10
LEAF_INVARIANCE_TOL = 1e-6
RESOLVED_FRACTION = 0.95


def verdict(passed: bool, value, threshold, relation: str) -> dict:
    """A verdict always carries the number it was decided on."""
    return {"pass": bool(passed), "value": value, "threshold": threshold, "relation": relation}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class RunReport:
    command: str
    seed: int
    config: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return EXIT_PRECONDITION
        if all(v["pass"] for v in self.verdicts.values()):
            return EXIT_OK
        return EXIT_FAIL

    @property
    def status(self) -> str:
        return {EXIT_OK: "PASS", EXIT_PRECONDITION: "ERROR", EXIT_FAIL: "FAIL"}[self.exit_code]

    def to_dict(self) -> dict:
        """Everything except wall-clock timing, which lives in timing.json."""
        return _clean(
            {
                "command": self.command,
                "seed": self.seed,
                "config": self.config,
                "status": self.status,
                "results": self.results,
                "verdicts": self.verdicts,
                "errors": self.errors,
                "tables": sorted(self.tables),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json(), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(_clean(self.timing), sort_keys=True, indent=2) + "\n")
        for name, (header, rows) in self.tables.items():
            np.savetxt(out / name, np.atleast_2d(rows), fmt="%.17g", delimiter=",", header=",".join(header), comments="")
        return out / "report.json"

    def summary(self) -> str:
        lines = [f"{self.command}: {self.status}"]
        for err in self.errors:
            lines.append(f"  error [{err['type']}]: {err['message']}")
        for name in sorted(self.verdicts):
            v = self.verdicts[name]
            mark = "PASS" if v["pass"] else "FAIL"
            lines.append(f"  {mark}  {name}: {_fmt(v['value'])} {v['relation']} {_fmt(v['threshold'])}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# -- pipelines ---------------------------------------------------------------


def _certify(cfg: SystemConfig, seed: int):
    sec = cfg.section("certify")
    F = cfg.system()
    split = compute_splitting(cfg.matrix)
    cones = ConeField.from_splitting(split, sec["gamma"])
    grid = Grid(sec["grid"]) if sec["grid"] else default_grid(F)
    cert = check_cone_invariance(F, cones, sec["steps"], grid)
    results = {"certificate": cert.to_dict(), "spectral_lambda": split.lam}
    verdicts = {
        "cone_invariance": verdict(cert.margin > 0, cert.margin, 0.0, ">"),
        "rate_below_one": verdict(cert.lambda_prime < 1, cert.lambda_prime, 1.0, "<"),
    }
    if cert.passed:
        bgrid = Grid(sec["bundle_grid"]) if sec["bundle_grid"] else Grid([4] * F.k + [8] * F.d)
        approx = approximate_invariant_bundles(F, cert, 60, sec["bundle_tol"], bgrid)
        con = stable_contraction_defect(F, approx, cert.lambda_prime, cert.steps, 5)
        exp = unstable_expansion_defect(F, approx, cert.lambda_prime, cert.steps, 5)
        results["bundles"] = approx.to_dict()
        results["bundles"]["stable_contraction_ratio"] = con
        results["bundles"]["unstable_expansion_ratio"] = exp
        gap = max(approx.stable_gap, approx.unstable_gap)
        verdicts["bundle_convergence"] = verdict(approx.converged, gap, approx.tol, "<")
        verdicts["bundle_transversality"] = verdict(approx.transversality() > 0, approx.transversality(), 0.0, ">")
        verdicts["stable_contraction"] = verdict(con <= 1.0, con, 1.0, "<=")
        verdicts["unstable_expansion"] = verdict(exp <= 1.0, exp, 1.0, "<=")
    return results, verdicts, {}, cert


def _homology(cfg: SystemConfig, seed: int):
    F = cfg.system()
    M = induced_homology_matrix(F, samples=10, seed=seed)
    diff = int(np.max(np.abs(M.array - cfg.model_matrix.array)))
    results = {"induced_matrix": M.tolist(), "model_matrix": cfg.model_matrix.tolist(), "determinant": M.det}
    verdicts = {"homology_matches_model": verdict(diff == 0, diff, 0, "==")}
    return results, verdicts, {}


def _conjugacy_verdicts(res, ver, inj) -> dict:
    tb = res.parameters.tail_bound
    return {
        "cohomology_identity": verdict(
            res.cohomology_residual["max"] <= 2 * tb + EVALUATION_ALLOWANCE,
            res.cohomology_residual["max"],
            2 * tb + EVALUATION_ALLOWANCE,
            "<=",
        ),
        "conjugacy_equation": verdict(ver["pass"], ver["max_residual"], ver["threshold"], "<="),
        "degree_one": verdict(res.degree_defect <= DEGREE_TOL, res.degree_defect, DEGREE_TOL, "<="),
        "fibre_periodicity": verdict(res.periodicity_defect <= DEGREE_TOL, res.periodicity_defect, DEGREE_TOL, "<="),
        "injectivity_margin": verdict(res.injectivity_margin > 0, res.injectivity_margin, 0.0, ">"),
        "injectivity_scan": verdict(inj["min_ratio"] > 0, inj["min_ratio"], 0.0, ">"),
    }


def _conjugate(cfg: SystemConfig, seed: int):
    sec = cfg.section("conjugate")
    F, G = cfg.system(), cfg.model()
    grid = Grid(sec["grid"]) if sec["grid"] else None
    res = build_conjugacy(F, G, sec["tol"], grid)
    ver = verify_conjugacy(res, samples=sec["samples"], seed=seed)
    inj = injectivity_scan(res, fibres=sec["fibres"], pairs=sec["pairs"], seed=seed, delta0=sec["delta0"])
    results = {"conjugacy": res.to_dict(), "verification": ver, "injectivity": inj}
    k, d = F.k, F.d
    header = [f"b{i}" for i in range(k)] + [f"x{i}" for i in range(d)] + [f"w{i}" for i in range(d)]
    tables = {"w_grid.csv": (header, res.grid_table())}
    return results, _conjugacy_verdicts(res, ver, inj), tables


def _leaves(cfg: SystemConfig, seed: int, fibres=None, pairs=None):
    sec = cfg.section("leaves")
    F = cfg.system()
    _, cert_verdicts, _, cert = _certify_light(cfg)
    if not cert.passed:
        raise ValueError(f"cone certificate failed (margin {cert.margin:.3g}); leaves are undefined")
    rng = np.random.default_rng(seed)
    b0, x0 = rng.random(F.k), rng.random(F.d)
    R, depth, density = sec["radius"], sec["depth"], sec["density"]
    Wu = compute_leaf(F, cert, b0, x0, "unstable", R, depth, density)
    Ws = compute_leaf(F, cert, b0, x0, "stable", R, depth, density)
    Wu2 = compute_leaf(F, cert, b0, x0, "unstable", R, depth + 10, density)
    Ws2 = compute_leaf(F, cert, b0, x0, "stable", R, depth + 10, density)
    window = max(float(np.abs(Wu.values - Wu2.values).max()), float(np.abs(Ws.values - Ws2.values).max()))
    window_bound = cert.lambda_prime**depth * cert.gamma * R
    inter = find_intersections(Ws, Wu)
    box = (x0 - 0.5, x0 + 0.5)
    dist = leaf_distance_bound([Wu, Ws], box)
    scan = product_structure_scan(
        F,
        cert,
        fibres=fibres or sec["fibres"],
        pairs=pairs or sec["pairs"],
        seed=seed,
        R=R,
        depth=sec["scan_depth"],
        density=sec["scan_density"],
    )
    inv = max(Wu.invariance_residual, Ws.invariance_residual)
    slope = max(Wu.max_slope, Ws.max_slope)
    results = {
        "certificate": cert.to_dict(),
        "unstable_leaf": Wu.to_dict(),
        "stable_leaf": Ws.to_dict(),
        "window_convergence": {"depth": depth, "difference": window, "bound": window_bound},
        "anchor_intersection": inter.to_dict(),
        "leaf_distance_bound": {"box": [b.tolist() for b in box], "bound": dist},
        "product_structure": scan,
    }
    verdicts = dict(cert_verdicts)
    verdicts.update(
        {
            "leaf_invariance": verdict(inv <= LEAF_INVARIANCE_TOL, inv, LEAF_INVARIANCE_TOL, "<="),
            "leaf_in_cone": verdict(slope <= cert.gamma, slope, cert.gamma, "<="),
            "window_convergence": verdict(window <= window_bound, window, window_bound, "<="),
            "anchor_intersection_unique": verdict(inter.multiplicity == 1, inter.multiplicity, 1, "=="),
            "product_structure_unique": verdict(scan["multiple"] == 0, scan["multiple"], 0, "=="),
            "product_structure_resolved": verdict(
                scan["resolved_fraction"] >= RESOLVED_FRACTION, scan["resolved_fraction"], RESOLVED_FRACTION, ">="
            ),
        }
    )
    header = ["t"] + [f"x{i}" for i in range(F.d)]
    tables = {}
    for name, leaf in (("leaf_unstable.csv", Wu), ("leaf_stable.csv", Ws)):
        if leaf.leaf_dim == 1:
            tables[name] = (header, leaf.polyline())
        else:
            tables[name] = ([f"t{i}" for i in range(leaf.leaf_dim)] + header[1:], leaf.polyline())
    return results, verdicts, tables


def _certify_light(cfg: SystemConfig):
    """Certificate only (no bundle pass), shared by the leaf pipeline."""
    sec = cfg.section("certify")
    F = cfg.system()
    cones = ConeField.from_splitting(compute_splitting(cfg.matrix), sec["gamma"])
    grid = Grid(sec["grid"]) if sec["grid"] else default_grid(F)
    cert = check_cone_invariance(F, cones, sec["steps"], grid)
    verdicts = {"cone_invariance": verdict(cert.margin > 0, cert.margin, 0.0, ">")}
    return {}, verdicts, {}, cert


def _sweep(cfg: SystemConfig, seed: int):
    """Conjugacy over a list of epsilons with N and tail bound pinned by the largest one."""
    sec, csec = cfg.section("sweep"), cfg.section("conjugate")
    eps_list = sorted(sec["epsilons"])
    G = cfg.model()
    split = compute_splitting(G.matrix)
    m_max = displacement(cfg.system(max(eps_list)), G).sup_bound
    params = SeriesParameters.choose(split, m_max, csec["tol"]) if m_max > 0 else None
    grid = Grid(csec["grid"]) if csec["grid"] else None
    header = [
        "epsilon",
        "sup_displacement",
        "truncation",
        "tail_bound",
        "cohomology_residual_max",
        "conjugacy_residual_max",
        "verify_max_residual",
        "injectivity_margin",
        "injectivity_min_ratio",
        "min_separation_at_delta0",
    ]
    rows, all_pass, margins = [], True, []
    for eps in eps_list:
        F = cfg.system(eps)
        res = build_conjugacy(F, G, csec["tol"], grid, parameters=params)
        ver = verify_conjugacy(res, samples=csec["samples"], seed=seed)
        inj = injectivity_scan(res, fibres=csec["fibres"], pairs=csec["pairs"], seed=seed, delta0=csec["delta0"])
        all_pass &= bool(ver["pass"]) and inj["min_ratio"] > 0
        margins.append(res.injectivity_margin)
        rows.append(
            [
                eps,
                res.solver.field.sup_bound,
                res.parameters.truncation,
                res.parameters.tail_bound,
                res.cohomology_residual["max"],
                res.conjugacy_residual["max"],
                ver["max_residual"],
                res.injectivity_margin,
                inj["min_ratio"],
                inj["min_separation_at_delta0"],
            ]
        )
    table = np.array(rows, dtype=float)
    rises = float(np.max(np.diff(margins))) if len(margins) > 1 else 0.0
    results = {
        "epsilons": eps_list,
        "truncation": int(table[0, 2]),
        "tail_bound": float(table[0, 3]),
        "rows": [dict(zip(header, r)) for r in table.tolist()],
    }
    verdicts = {
        "all_rows_conjugate": verdict(all_pass, int(all_pass), 1, "=="),
        "injectivity_margin_nonincreasing": verdict(rises <= 0.0, rises, 0.0, "<="),
    }
    return results, verdicts, {"sweep.csv": (header, table)}


def _demo(cfg: SystemConfig, seed: int):
    dsec = cfg.section("demo")
    results, verdicts, tables = {}, {}, {}
    parts = {
        "certify": lambda: _certify(cfg, seed)[:3],
        "homology": lambda: _homology(cfg, seed),
        "conjugate": lambda: _conjugate(cfg, seed),
        "leaves": lambda: _leaves(cfg, seed, dsec["fibres"], dsec["pairs"]),
    }
    for name, fn in parts.items():
        r, v, t = fn()
        results[name] = r
        verdicts.update({f"{name}.{k}": val for k, val in v.items()})
        tables.update({f"{name}_{k}": val for k, val in t.items()})
    return results, verdicts, tables


PIPELINES = {
    "certify": lambda cfg, seed: _certify(cfg, seed)[:3],
    "homology": _homology,
    "conjugate": _conjugate,
    "leaves": _leaves,
    "sweep": _sweep,
    "demo": _demo,
}


def run_command(cmd: str, config: SystemConfig, seed: int = 0) -> RunReport:
    if cmd not in PIPELINES:
        raise ValueError(f"unknown command {cmd!r}; expected one of {COMMANDS}")
    report = RunReport(command=cmd, seed=seed, config=config.to_dict())
    start = time.perf_counter()
    try:
        results, verdicts, tables = PIPELINES[cmd](config, seed)
        report.results, report.verdicts, report.tables = results, verdicts, tables
    except PRECONDITION_ERRORS as exc:
        report.errors.append({"type": type(exc).__name__, "message": str(exc)})
    report.timing = {"seconds": time.perf_counter() - start}
    return report


def _error_report(cmd: str, seed: int, errors: list[str], kind: str = "ConfigError") -> RunReport:
    report = RunReport(command=cmd, seed=seed)
    report.errors = [{"type": kind, "message": e} for e in errors]
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fibrewise-anosov", description="Fibrewise Anosov conjugacy toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML run configuration (demo defaults to the bundled fixture)")
    p.add_argument("--seed", type=int, default=0, help="seed for all sampling (unsigned 64-bit)")
    p.add_argument("--out", help="directory for report.json, timing.json and CSV tables")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        report = _error_report(args.command, 0, [f"seed: {args.seed} is not an unsigned 64-bit integer"])
    else:
        try:
            if args.config:
                text = Path(args.config).read_text(encoding="utf-8")
            elif args.command == "demo":
                text = fixture_text()
            else:
                raise ConfigError([f"--config is required for '{args.command}'"])
            cfg = parse_config(text, args.command)
        except ConfigError as exc:
            report = _error_report(args.command, args.seed, exc.errors)
        except OSError as exc:
            report = _error_report(args.command, args.seed, [f"config: {exc}"])
        else:
            report = run_command(args.command, cfg, args.seed)
    if args.out:
        report.write(args.out)
    print(report.summary())
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
