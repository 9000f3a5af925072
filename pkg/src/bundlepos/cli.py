"""Scenario configuration, command dispatch and machine-readable reports.

Configs are sectioned key = value text (INI syntax).  Reports are emitted as
a full JSON document or a one-row-per-check CSV summary; identical configs
produce byte-identical JSON apart from the ``timings`` subtree.

Exit codes: 0 all selected checks pass, 1 any failure, 2 any inconclusive
result, 3 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import difflib
import io
import json
import sys
import time

import numpy as np
from scipy.interpolate import RectBivariateSpline

from . import __version__
from .bundle_metrics import (HermitianMetric, chern_curvature, det_metric,
                             direct_sum_metric, griffiths_extremes)
from .direct_image import (DirectImageGram, assemble_det_metric, default_rule)
from .numerics import ComplexHessianStencil, FiberQuadratureRule
from .verifier import (HymReport, Scenario, check_conclusion_finsler,
                       check_conclusion_hermitian, check_hym_scenario,
                       check_hypotheses, kobayashi_sweep, paper_example_1)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 3

_KNOWN_KEYS = {
    "scenario": {"name", "degrees", "omega_scale", "metric_table"},
    "quadrature": {"n_theta", "n_rho"},
    "stencil": {"step", "order", "richardson"},
    "samples": {"base_radial", "base_angular", "fiber_keep", "scan_radial",
                "scan_angular", "pipeline_radial", "pipeline_angular",
                "convexity_triples", "seed"},
    "checks": {"theorems", "hypotheses", "conclusions", "k_max"},
    "hym": {"enabled", "c", "delta", "degrees", "metric_table", "omega_scale"},
    "output": {"path", "format"},
}

_BUILTINS = {"paper-example-1": dict(degrees=(9, 8, 7), omega_scale=7.0),
             "rank2-uniform": dict(degrees=(1, 1), omega_scale=1.0)}


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclasses.dataclass
class ScenarioConfig:
    """Validated run configuration (scenario, grids, checks, output)."""

    name: str = "paper-example-1"
    degrees: tuple[int, ...] = (9, 8, 7)
    omega_scale: float = 7.0
    metric_table: str | None = None
    n_theta: int | None = None
    n_rho: int | None = None
    step: float = 1e-3
    order: int = 4
    richardson: bool = False
    base_radial: int = 21
    base_angular: int = 21
    fiber_keep: int = 12
    scan_radial: int = 4
    scan_angular: int = 8
    pipeline_radial: int = 2
    pipeline_angular: int = 5
    convexity_triples: int = 10000
    seed: int = 20240801
    theorems: tuple[int, ...] = (1, 2, 3, 4)
    hypotheses: bool = True
    conclusions: bool = True
    k_max: int | None = None
    hym_enabled: bool = False
    hym_c: float | None = None
    hym_delta: float | None = None
    hym_degrees: tuple[int, ...] | None = None
    hym_metric_table: str | None = None
    hym_omega_scale: float = 1.0
    out_path: str = "report.json"
    out_format: str = "json"


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a sectioned key = value config; report all violations."""
    parser = configparser.ConfigParser()
    violations: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"config syntax error: {exc}"]) from exc
    if not parser.sections():
        raise ConfigError(["empty config: at least a [scenario] section is required"])

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            near = difflib.get_close_matches(section, _KNOWN_KEYS, n=1)
            hint = f" (did you mean [{near[0]}]?)" if near else ""
            violations.append(f"unknown section [{section}]{hint}")
            continue
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                near = difflib.get_close_matches(key, _KNOWN_KEYS[section], n=1)
                hint = f" (did you mean {near[0]!r}?)" if near else ""
                violations.append(f"unknown key {key!r} in [{section}]{hint}")

    cfg = ScenarioConfig()

    def read(section, key, conv, attr, check=None, message=None):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                val = conv(raw)
            except (TypeError, ValueError):
                violations.append(f"[{section}] {key}: cannot parse {raw!r}")
                return
            if check is not None and not check(val):
                violations.append(f"[{section}] {key}: {message} (got {raw!r})")
                return
            setattr(cfg, attr, val)

    def ints(raw):
        return tuple(int(t) for t in raw.replace(",", " ").split())

    def boolean(raw):
        low = raw.strip().lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(raw)

    if parser.has_option("scenario", "name"):
        name = parser.get("scenario", "name")
        if name not in _BUILTINS:
            near = difflib.get_close_matches(name, _BUILTINS, n=1)
            hint = f" (did you mean {near[0]!r}?)" if near else ""
            violations.append(f"unknown built-in scenario {name!r}{hint}")
        else:
            cfg.name = name
            for attr, val in _BUILTINS[name].items():
                setattr(cfg, attr, val)
    elif parser.has_option("scenario", "degrees"):
        try:
            cfg.name = "custom-" + "-".join(
                str(int(t)) for t in parser.get("scenario", "degrees").replace(",", " ").split())
        except ValueError:
            pass

    read("scenario", "degrees", ints, "degrees",
         check=lambda v: len(v) >= 2, message="need at least two degrees")
    read("scenario", "omega_scale", float, "omega_scale",
         check=lambda v: v > 0, message="must be positive")
    read("scenario", "metric_table", str, "metric_table")
    read("quadrature", "n_theta", int, "n_theta",
         check=lambda v: v >= 8, message="must be >= 8")
    read("quadrature", "n_rho", int, "n_rho",
         check=lambda v: v >= 8, message="must be >= 8")
    read("stencil", "step", float, "step",
         check=lambda v: v > 0, message="must be positive")
    read("stencil", "order", int, "order",
         check=lambda v: v in (2, 4), message="must be 2 or 4")
    read("stencil", "richardson", boolean, "richardson")
    for key in ("base_radial", "base_angular", "fiber_keep", "scan_radial",
                "scan_angular", "pipeline_radial", "pipeline_angular",
                "convexity_triples", "seed"):
        read("samples", key, int, key,
             check=lambda v: v > 0, message="must be positive")
    read("checks", "theorems", ints, "theorems",
         check=lambda v: all(t in (1, 2, 3, 4) for t in v),
         message="theorems are 1..4")
    read("checks", "hypotheses", boolean, "hypotheses")
    read("checks", "conclusions", boolean, "conclusions")
    read("checks", "k_max", int, "k_max",
         check=lambda v: v >= 0, message="must be nonnegative")
    read("hym", "enabled", boolean, "hym_enabled")
    read("hym", "c", float, "hym_c")
    read("hym", "delta", float, "hym_delta")
    read("hym", "degrees", ints, "hym_degrees")
    read("hym", "metric_table", str, "hym_metric_table")
    read("hym", "omega_scale", float, "hym_omega_scale")
    read("output", "path", str, "out_path")
    read("output", "format", str, "out_format",
         check=lambda v: v in ("json", "csv-summary", "csv"),
         message="format is json or csv-summary")

    if cfg.hym_enabled and cfg.hym_c is None:
        violations.append("[hym] c is required when hym checks are enabled")
    if cfg.hym_enabled and cfg.hym_delta is None:
        violations.append("[hym] delta is required when hym checks are enabled")

    if violations:
        raise ConfigError(violations)
    return cfg


def config_to_text(cfg: ScenarioConfig) -> str:
    """Render a config back to sectioned text (round-trips through parse_config)."""
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        "degrees": " ".join(str(d) for d in cfg.degrees),
        "omega_scale": repr(cfg.omega_scale),
    }
    if cfg.metric_table:
        parser["scenario"]["metric_table"] = cfg.metric_table
    if cfg.n_theta is not None:
        parser.setdefault("quadrature", {})["n_theta"] = str(cfg.n_theta)
    if cfg.n_rho is not None:
        parser.setdefault("quadrature", {})["n_rho"] = str(cfg.n_rho)
    parser["stencil"] = {"step": repr(cfg.step), "order": str(cfg.order),
                         "richardson": str(cfg.richardson).lower()}
    parser["samples"] = {k: str(getattr(cfg, k)) for k in
                         ("base_radial", "base_angular", "fiber_keep",
                          "scan_radial", "scan_angular", "pipeline_radial",
                          "pipeline_angular", "convexity_triples", "seed")}
    parser["checks"] = {"theorems": " ".join(str(t) for t in cfg.theorems),
                        "hypotheses": str(cfg.hypotheses).lower(),
                        "conclusions": str(cfg.conclusions).lower()}
    if cfg.k_max is not None:
        parser["checks"]["k_max"] = str(cfg.k_max)
    if cfg.hym_enabled:
        parser["hym"] = {"enabled": "true", "c": repr(cfg.hym_c),
                         "delta": repr(cfg.hym_delta),
                         "omega_scale": repr(cfg.hym_omega_scale)}
        if cfg.hym_degrees:
            parser["hym"]["degrees"] = " ".join(str(d) for d in cfg.hym_degrees)
        if cfg.hym_metric_table:
            parser["hym"]["metric_table"] = cfg.hym_metric_table
    parser["output"] = {"path": cfg.out_path, "format": cfg.out_format}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# external weight tables
# ---------------------------------------------------------------------------

def write_weight_table(path: str, H: HermitianMetric, xs, ys) -> None:
    """Write a rectangular weight-table file for the metric on both charts.

    Row format: ``chart x y`` followed by ``re im`` pairs of the r x r matrix
    in row-major order; lines starting with ``#`` are comments.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = H.rank
    with open(path, "w") as fh:
        fh.write(f"# bundlepos weight table, rank {r}\n")
        fh.write("# columns: chart x y then re/im pairs of the matrix, row-major\n")
        for chart in (0, 1):
            for x in xs:
                for y in ys:
                    M = H.matrix(complex(x, y), chart)
                    parts = [str(chart), repr(float(x)), repr(float(y))]
                    for a in range(r):
                        for b in range(r):
                            parts.append(repr(float(M[a, b].real)))
                            parts.append(repr(float(M[a, b].imag)))
                    fh.write(" ".join(parts) + "\n")


def load_weight_table(path: str) -> HermitianMetric:
    """Load a weight table and return a bicubic-interpolated Hermitian metric."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(t) for t in line.split()])
    if not rows:
        raise ConfigError([f"weight table {path!r} has no data rows"])
    ncol = len(rows[0])
    r = int(round(np.sqrt((ncol - 3) / 2)))
    if 3 + 2 * r * r != ncol:
        raise ConfigError([f"weight table {path!r}: bad column count {ncol}"])
    data = np.array(rows)
    fns = []
    for chart in (0, 1):
        sel = data[data[:, 0] == chart]
        if sel.size == 0:
            raise ConfigError([f"weight table {path!r}: no rows for chart {chart}"])
        xs = np.unique(sel[:, 1])
        ys = np.unique(sel[:, 2])
        if xs.size < 4 or ys.size < 4:
            raise ConfigError(
                [f"weight table {path!r}: bicubic interpolation needs a grid "
                 f"of at least 4 x 4 points per chart"])
        if sel.shape[0] != xs.size * ys.size:
            raise ConfigError(
                [f"weight table {path!r}: chart {chart} grid is not rectangular"])
        order = np.lexsort((sel[:, 2], sel[:, 1]))
        vals = sel[order, 3:].reshape(xs.size, ys.size, 2 * r * r)
        splines = [RectBivariateSpline(xs, ys, vals[:, :, c], kx=3, ky=3)
                   for c in range(2 * r * r)]

        def fn(zs, splines=splines, r=r):
            zs = np.asarray(zs, dtype=complex)
            M = np.empty((zs.size, r, r), dtype=complex)
            x, y = zs.real, zs.imag
            c = 0
            for a in range(r):
                for b in range(r):
                    re = splines[c].ev(x, y)
                    im = splines[c + 1].ev(x, y)
                    M[:, a, b] = re + 1j * im
                    c += 2
            return 0.5 * (M + np.swapaxes(M, 1, 2).conj())

        fns.append(fn)
    return HermitianMetric(rank=r, matrix_fns=tuple(fns), degrees=None,
                           label=f"table:{path}")


# ---------------------------------------------------------------------------
# running and reporting
# ---------------------------------------------------------------------------

def build_scenario(cfg: ScenarioConfig) -> Scenario:
    rank = len(cfg.degrees)
    rule = None
    if cfg.n_theta is not None or cfg.n_rho is not None:
        base = default_rule(rank)
        rule = FiberQuadratureRule(cfg.n_theta or base.n_theta,
                                   cfg.n_rho or base.n_rho, rank - 1)
    metric = load_weight_table(cfg.metric_table) if cfg.metric_table else None
    return Scenario(
        name=cfg.name, degrees=cfg.degrees, omega_scale=cfg.omega_scale,
        base_radial=cfg.base_radial, base_angular=cfg.base_angular,
        fiber_keep=cfg.fiber_keep, scan_radial=cfg.scan_radial,
        scan_angular=cfg.scan_angular, pipeline_radial=cfg.pipeline_radial,
        pipeline_angular=cfg.pipeline_angular, rule=rule,
        stencil=ComplexHessianStencil(step=cfg.step, order=cfg.order,
                                      richardson=cfg.richardson),
        k_max=cfg.k_max, seed=cfg.seed, convexity_triples=cfg.convexity_triples,
        metric_e=metric)


def _as_dict(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _as_dict(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _as_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_dict(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_as_dict(v) for v in obj.tolist()]
    if isinstance(obj, complex):
        return str(obj)
    return obj


def run(cfg: ScenarioConfig) -> dict:
    """Execute the selected checks and return the full report document."""
    scn = build_scenario(cfg)
    checks = []
    hypotheses = {}
    conclusions = {}
    timings = {}

    for t in cfg.theorems:
        if cfg.hypotheses:
            t0 = time.perf_counter()
            rep = check_hypotheses(t, scn)
            timings[f"hypothesis_{t}"] = time.perf_counter() - t0
            hypotheses[str(t)] = _as_dict(rep)
            status = "pass" if rep.passed else (
                "inconclusive" if rep.inconclusive else "fail")
            checks.append({
                "check": f"hypothesis_theorem_{t}", "scenario": scn.name,
                "theorem": t, "status": status, "value": rep.m_star,
                "margin": (scn.rank - rep.m_star) if np.isfinite(rep.m_star) else None,
                "tolerance": 1e-3, "resolution": rep.resolution})
        if cfg.conclusions:
            t0 = time.perf_counter()
            if t in (3, 4):
                crep = check_conclusion_hermitian(t, scn)
                value = crep.extremes[1] if crep.extremes else None
            else:
                crep = check_conclusion_finsler(t, scn)
                value = crep.dual_kobayashi[0] if crep.dual_kobayashi else None
            timings[f"conclusion_{t}"] = time.perf_counter() - t0
            conclusions[str(t)] = _as_dict(crep)
            checks.append({
                "check": f"conclusion_theorem_{t}", "scenario": scn.name,
                "theorem": t, "status": "pass" if crep.certified else "fail",
                "value": value, "margin": value, "tolerance": 0.0,
                "resolution": crep.resolution})

    hym = None
    if cfg.hym_enabled:
        t0 = time.perf_counter()
        if cfg.hym_metric_table:
            metric = load_weight_table(cfg.hym_metric_table)
        else:
            metric = direct_sum_metric(cfg.hym_degrees or cfg.degrees)
        from .base_geometry import fubini_study_form
        omega = fubini_study_form(cfg.hym_omega_scale)
        hrep = check_hym_scenario(metric, omega, cfg.hym_c, cfg.hym_delta)
        timings["hym"] = time.perf_counter() - t0
        hym = _as_dict(hrep)
        checks.append({
            "check": "hym_band", "scenario": scn.name, "theorem": None,
            "status": "pass" if hrep.passed else "fail",
            "value": hrep.band[1], "margin": min(hrep.thm2_margin, hrep.thm4_margin),
            "tolerance": 1e-6, "resolution": hrep.resolution})

    report = {
        "toolkit_version": __version__,
        "scenario": {
            "name": scn.name, "degrees": list(scn.degrees),
            "omega_scale": scn.omega_scale, "rank": scn.rank,
            "resolution": scn.resolution(),
        },
        "config": config_to_text(cfg),
        "checks": checks,
        "hypotheses": hypotheses,
        "conclusions": conclusions,
        "hym": hym,
        "timings": timings,
    }
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def report_to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["check", "scenario", "theorem", "status", "value",
                     "margin", "tolerance"])
    for c in report["checks"]:
        writer.writerow([c["check"], c["scenario"], c["theorem"], c["status"],
                         c["value"], c["margin"], c["tolerance"]])
    return buf.getvalue()


def emit(report: dict, fmt: str = "json", path: str | None = None) -> str:
    """Serialize the report; write to ``path`` when given, and return the text."""
    text = report_to_json(report) if fmt == "json" else report_to_csv(report)
    if path:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError([f"cannot write report to {path!r}: {exc}"]) from exc
    return text


def exit_code(report: dict) -> int:
    statuses = [c["status"] for c in report["checks"]]
    if any(s == "fail" for s in statuses):
        return EXIT_FAIL
    if any(s == "inconclusive" for s in statuses):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _load_config(args) -> ScenarioConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = ScenarioConfig()
    if getattr(args, "k_max", None) is not None:
        cfg.k_max = args.k_max
    if getattr(args, "grid", None) is not None:
        cfg.base_radial = cfg.base_angular = args.grid
    if getattr(args, "out", None):
        cfg.out_path = args.out
    if getattr(args, "format", None):
        cfg.out_format = args.format
    return cfg


def _cmd_curvature(args) -> int:
    cfg = _load_config(args)
    scn = build_scenario(cfg)
    samples = scn.scan_samples(0)
    lo, hi = griffiths_extremes(scn.metric_e, samples, scn.omega, 0, scn.stencil)
    det = det_metric(scn.metric_e)
    theta0 = chern_curvature(scn.metric_e, 0.0, 0, scn.stencil).value
    doc = {"griffiths_extremes_over_omega": [lo, hi],
           "det_degree": det.degree,
           "curvature_at_origin": [float(x) for x in np.real(np.diag(theta0))]}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_PASS


def _cmd_kobayashi(args) -> int:
    cfg = _load_config(args)
    scn = build_scenario(cfg)
    fib = scn.fiber_vectors()
    out = {}
    for label, metric in (("h", scn.metric_h_dual), ("g_twisted", scn.metric_twisted)):
        lo, hi = np.inf, -np.inf
        for chart in (0, 1):
            base = scn.base_samples(chart)
            om = scn.omega.coefficient(base, chart)
            sw = kobayashi_sweep(metric, base, fib, chart, scn.stencil)
            vals = sw.values / om[:, None]
            lo = min(lo, float(np.min(vals)))
            hi = max(hi, float(np.max(vals)))
        out[label] = [lo, hi]
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_PASS


def _cmd_direct_image(args) -> int:
    cfg = _load_config(args)
    scn = build_scenario(cfg)
    z = complex(args.z)
    k = args.k
    gram = DirectImageGram(potentials=(scn.potential_h(0), scn.potential_h(1)),
                           k=k, rule=scn.rule).at(z, 0)
    det_image = assemble_det_metric((scn.potential_h(0), scn.potential_h(1)),
                                    scn.rule)
    doc = {"z": str(z), "k": k,
           "gram_eigenvalues": [float(v) for v in np.linalg.eigvalsh(gram)],
           "det_weight": det_image.weight(z, 0),
           "det_degree": det_image.line_metric().degree}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_PASS


def _cmd_verify(args) -> int:
    cfg = _load_config(args)
    if args.theorem != "all":
        cfg.theorems = (int(args.theorem),)
    report = run(cfg)
    for c in report["checks"]:
        margin = c["margin"]
        mtxt = f" margin={margin:.6g}" if isinstance(margin, float) else ""
        print(f"{c['check']}: {c['status']}{mtxt}")
    return exit_code(report)


def _cmd_report(args) -> int:
    cfg = _load_config(args)
    report = run(cfg)
    fmt = "json" if cfg.out_format == "json" else "csv-summary"
    text = emit(report, "json" if fmt == "json" else "csv", cfg.out_path)
    if not cfg.out_path:
        print(text)
    else:
        print(f"wrote {cfg.out_path}")
    return exit_code(report)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bundlepos",
        description="curvature positivity checks for metrics on bundles over the sphere")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a sectioned config file")
        p.add_argument("--k-max", dest="k_max", type=int)
        p.add_argument("--grid", type=int, help="base grid resolution (radial=angular)")
        p.add_argument("--out", help="output path")
        p.add_argument("--format", choices=["json", "csv"])

    common(sub.add_parser("curvature", help="bundle curvature summary"))
    common(sub.add_parser("kobayashi", help="Kobayashi curvature extremes"))
    p_di = sub.add_parser("direct-image", help="L2 Gram and determinant weight")
    common(p_di)
    p_di.add_argument("--k", type=int, default=1)
    p_di.add_argument("--z", default="0.3+0.1j")
    p_v = sub.add_parser("verify", help="hypothesis and conclusion checks")
    common(p_v)
    p_v.add_argument("--theorem", choices=["1", "2", "3", "4", "all"],
                     default="all")
    common(sub.add_parser("report", help="full report"))

    args = parser.parse_args(argv)
    handlers = {"curvature": _cmd_curvature, "kobayashi": _cmd_kobayashi,
                "direct-image": _cmd_direct_image, "verify": _cmd_verify,
                "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
