"""Experiment runner.

Usage::

    phsplit bunching --config configs/bunching_skew.cfg --out runs/bunching

Each subcommand reads a flat ``key = value`` config (dotted keys, ``#``
comments), writes CSV tables plus ``report.json`` into ``--out`` and exits
0 iff every assertion in the report passes.  Sweeps over points record
per-item failures and keep going; single runs fail hard.
"""
import argparse
import csv
import inspect
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics, family, manifold, partial_deriv, splitting
from .dynamics import BASES, ZOO, FamilySpec
from .errors import SplittingError

SUBCOMMANDS = ("splitting", "bunching", "partial-derivative", "holder", "ddc",
               "param-derivative", "thmC-check", "selftest")

DEFAULT_TOLERANCES = {
    "invariance": 1e-8,
    "eigendirection": 1e-10,
    "expected_sup": 1e-10,
    "series_vs_fd": 5e-2,
    "center_slope": 0.95,
    "ddc_tracking": 10.0,  # multiples of the step
    "ddc_initial_velocity": 1e-4,
    "solver_residual": 1e-8,
    "fd_relative": 1e-3,
    "fd_absolute": 1e-6,
    "closed_form": 1e-6,
    "z0": 1e-10,
    "thmC_relative": 1e-3,
    "selftest": 1e-12,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything a run depends on; ``as_text`` reproduces it."""

    map: str = "skew_product"
    map_params: dict = field(default_factory=dict)
    t: float = 0.0
    grid: int = 8
    N: int = splitting.DEFAULT_N
    point: tuple = None
    points: int = 10
    fd_h: float = 1e-3
    fd_step: float = 1e-4
    z_h: float = 1e-4
    condition: str = "thmA_u"
    expected_sup: float = None
    which: str = "unstable"
    half_span: float = 0.05
    ddc_step: float = 1e-3
    holder_min_exp: int = 4
    holder_max_exp: int = 10
    seed: int = 0
    tolerances: dict = field(default_factory=dict)

    def tol(self, name):
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def validate(self):
        for name in ("grid", "N", "points", "fd_h", "fd_step", "z_h", "half_span", "ddc_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.holder_min_exp < self.holder_max_exp:
            raise ConfigError("need 0 < holder.min_exp < holder.max_exp")
        if self.condition not in splitting.CONDITIONS:
            raise ConfigError(f"unknown bunching.condition {self.condition!r}")
        if self.which not in ("unstable", "center"):
            raise ConfigError(f"param.which must be 'unstable' or 'center', got {self.which!r}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name, val in self.tolerances.items():
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance tol.{name}; known: {sorted(DEFAULT_TOLERANCES)}")
            if not val > 0:
                raise ConfigError(f"tol.{name} must be positive")
        return self


# config key -> (field, parser)
_SCALAR_KEYS = {
    "map.name": ("map", str),
    "map.t": ("t", float),
    "grid": ("grid", int),
    "orbit.N": ("N", int),
    "point": ("point", lambda s: tuple(_parse_floats(s))),
    "points.count": ("points", int),
    "fd.h": ("fd_h", float),
    "fd.step": ("fd_step", float),
    "fd.z_h": ("z_h", float),
    "bunching.condition": ("condition", str),
    "bunching.expected_sup": ("expected_sup", float),
    "param.which": ("which", str),
    "ddc.half_span": ("half_span", float),
    "ddc.step": ("ddc_step", float),
    "holder.min_exp": ("holder_min_exp", int),
    "holder.max_exp": ("holder_max_exp", int),
    "seed": ("seed", int),
}


def _parse_floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _parse_param(s):
    """int, float, matrix ``a,b;c,d``, vector ``a,b`` or a bare string."""
    if ";" in s:
        return [[int(x) if x.strip().lstrip("-").isdigit() else float(x) for x in row.split(",")]
                for row in s.split(";")]
    if "," in s:
        return [float(x) for x in s.split(",")]
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _allowed_params(name):
    sig = inspect.signature(ZOO[name])
    names = {p.name for p in sig.parameters.values() if p.kind is not p.VAR_KEYWORD}
    if any(p.kind is p.VAR_KEYWORD for p in sig.parameters.values()):
        for base in BASES:
            names |= set(inspect.signature(ZOO[base]).parameters)
    return names


def parse_config(text, source="<config>"):
    """Parse flat ``key = value`` text into an ExperimentConfig; unknown keys are errors."""
    cfg = ExperimentConfig()
    seen = {}
    map_params = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} repeated (first on line {seen[key]})")
        seen[key] = lineno
        try:
            if key in _SCALAR_KEYS:
                attr, conv = _SCALAR_KEYS[key]
                setattr(cfg, attr, conv(value))
            elif key.startswith("tol."):
                cfg.tolerances[key[4:]] = float(value)
            elif key.startswith("map.") and key.count(".") == 1:
                map_params[key[4:]] = (_parse_param(value), lineno)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if cfg.map not in ZOO:
        raise ConfigError(f"{source}:{seen.get('map.name', 0)}: unknown map {cfg.map!r}; known: {sorted(ZOO)}")
    allowed = _allowed_params(cfg.map)
    for name, (val, lineno) in map_params.items():
        if name not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key 'map.{name}' for map {cfg.map!r}; "
                              f"known: {sorted(allowed)}")
        cfg.map_params[name] = val
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def config_text(cfg):
    """Config file text that reproduces ``cfg``."""
    inv = {attr: key for key, (attr, _) in _SCALAR_KEYS.items()}
    lines = []
    for attr, val in asdict(cfg).items():
        if attr in ("map_params", "tolerances") or val is None:
            continue
        if attr == "point":
            val = ", ".join(repr(float(x)) for x in val)
        lines.append(f"{inv[attr]} = {val}")
    for k, v in cfg.map_params.items():
        if isinstance(v, list) and v and isinstance(v[0], list):
            v = "; ".join(", ".join(str(x) for x in row) for row in v)
        elif isinstance(v, list):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"map.{k} = {v}")
    for k, v in cfg.tolerances.items():
        lines.append(f"tol.{k} = {v!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    results: list = field(default_factory=list)
    files: list = field(default_factory=list)
    runtime_seconds: float = 0.0

    def check(self, name, value, tolerance, passed):
        self.results.append({"name": name, "value": _jsonable(value), "tolerance": tolerance,
                             "pass": bool(passed)})

    def at_most(self, name, value, tolerance):
        self.check(name, value, tolerance, np.isfinite(value) and value <= tolerance)

    @property
    def passed(self):
        return all(r["pass"] for r in self.results)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=False)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _coord_header(d, prefix="x"):
    return [f"{prefix}{i}" for i in range(d)]


def _build(cfg):
    obj = ZOO[cfg.map](**cfg.map_params)
    return obj


def _map_of(cfg):
    obj = _build(cfg)
    if isinstance(obj, FamilySpec):
        return obj.at(cfg.t)
    if cfg.t != 0.0:
        raise ConfigError("map.t applies to families only")
    return obj


def _family_of(cfg):
    obj = _build(cfg)
    if not isinstance(obj, FamilySpec):
        raise ConfigError(f"{cfg.map!r} is a map; this subcommand needs a family "
                          "(conjugated_family, rotation_family, constant_family)")
    return obj


def sample_points(cfg, dim):
    """The configured point, or ``points.count`` uniform points from the seeded generator."""
    if cfg.point is not None:
        if len(cfg.point) != dim:
            raise ConfigError(f"point has {len(cfg.point)} coordinates, map has dimension {dim}")
        return [manifold.wrap(cfg.point)]
    rng = np.random.default_rng(cfg.seed)
    return [manifold.wrap(q) for q in rng.random((cfg.points, dim))]


def _single_point(cfg, dim):
    return sample_points(cfg, dim)[0] if cfg.point is not None else np.zeros(dim)


def _sweep(job, items, threads):
    """Ordered map with per-item error capture."""
    def safe(x):
        try:
            return job(x), None
        except (SplittingError, ValueError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(safe, items))
    return [safe(x) for x in items]


# ---------------------------------------------------------------------------
# subcommands: each fills the report and returns {filename: (header, rows)}

def cmd_splitting(cfg, report, threads):
    f = _map_of(cfg)
    dims = dynamics.default_dims(f)
    pts = sample_points(cfg, f.dim)
    names = ["u", "s"] + (["cu", "cs", "c"] if dims[1] > 0 else [])

    def job(p):
        orb = splitting.OrbitSplitting(f, p, dims, 0, 1, cfg.N)
        s0, s1 = orb[0], orb[1]
        return {n: (s0.plane(n), splitting.invariance_residual(f, s0.plane(n), s1.plane(n))) for n in names}

    d = f.dim
    rows = []
    worst = 0.0
    failures = 0
    for i, (p, (res, err)) in enumerate(zip(pts, _sweep(job, pts, threads))):
        if err is not None:
            failures += 1
            rows.append([i, *p, "error", "nan", *(["nan"] * d), err])
            continue
        for n in names:
            plane, r = res[n]
            worst = max(worst, r)
            rows.append([i, *p, n, r, *plane.basis[:, 0], ""])
    report.at_most("points_failed", failures, 0)
    report.at_most("max_invariance_residual", worst, cfg.tol("invariance"))

    if f.linear_part is not None and dims[1] == 0 and np.allclose(f.jacobian(pts[0]), f.linear_part):
        evals, evecs = np.linalg.eig(f.linear_part)
        order = np.argsort(-np.abs(evals))
        s0 = splitting.splitting_at(f, pts[0], dims, cfg.N)
        du = splitting.plane_distance(s0.Eu.basis, np.real(evecs[:, order[:dims[0]]]))
        ds = splitting.plane_distance(s0.Es.basis, np.real(evecs[:, order[dims[0]:]]))
        report.at_most("eigendirection_u", du, cfg.tol("eigendirection"))
        report.at_most("eigendirection_s", ds, cfg.tol("eigendirection"))
    header = ["index", *_coord_header(d), "bundle", "invariance_residual", *_coord_header(d, "e"), "error"]
    return {"splitting.csv": (header, rows)}


def cmd_bunching(cfg, report, threads):
    f = _map_of(cfg)
    rep = splitting.bunching_report(f, cfg.grid, cfg.condition, dynamics.default_dims(f), cfg.N, threads)
    report.check(f"bunching_{cfg.condition}_sup_below_1", rep.sup, 1.0, rep.passed)
    if cfg.expected_sup is not None:
        report.at_most("sup_vs_expected", abs(rep.sup - cfg.expected_sup), cfg.tol("expected_sup"))
    rows = [[i, *p, v, rep.sup] for i, (p, v) in enumerate(zip(rep.points, rep.values))]
    return {"bunching.csv": (["index", *_coord_header(f.dim), cfg.condition, "sup"], rows)}


def cmd_partial_derivative(cfg, report, threads):
    f = _map_of(cfg)
    dims = dynamics.default_dims(f)
    if dims[1] < 1:
        raise ConfigError("partial-derivative needs a center bundle")
    pts = sample_points(cfg, f.dim)
    k = int(round(cfg.fd_h / cfg.fd_step))

    def job(p):
        v = splitting.splitting_at(f, p, dims, cfg.N).Ec.basis[:, 0]
        ser = partial_deriv.dEu_dEc_series(f, p, v, cfg.N, dims)
        curve = partial_deriv.two_sided_curve(f, p, v, cfg.fd_step, k, dims, cfg.N)
        fd = partial_deriv.fd_derivative_along_curve(f, curve, cfg.fd_h, cfg.fd_step, dims, cfg.N)
        a, b = ser.graph.ambient, fd.ambient
        scale = max(np.linalg.norm(a, 2), 1e-12)
        return (np.linalg.norm(a, 2), np.linalg.norm(b, 2), np.linalg.norm(a - b, 2) / scale,
                ser.ratio, ser.tail)

    rows = []
    worst, failures = 0.0, 0
    for i, (p, (res, err)) in enumerate(zip(pts, _sweep(job, pts, threads))):
        if err is not None:
            failures += 1
            rows.append([i, *p, "nan", "nan", "nan", "nan", "nan", err])
            continue
        worst = max(worst, res[2])
        rows.append([i, *p, *res, ""])
    report.at_most("points_failed", failures, 0)
    report.at_most("max_relative_error_series_vs_fd", worst, cfg.tol("series_vs_fd"))
    header = ["index", *_coord_header(f.dim), "series_norm", "fd_norm", "relative_error", "ratio", "tail", "error"]
    return {"partial_derivative.csv": (header, rows)}


def cmd_holder(cfg, report, threads):
    f = _map_of(cfg)
    dims = dynamics.default_dims(f)
    pts = sample_points(cfg, f.dim)
    scales = 2.0 ** -np.arange(cfg.holder_min_exp, cfg.holder_max_exp + 1)

    def job(p):
        c = partial_deriv.regularity_estimate(f, p, "center", scales, dims, cfg.N)
        s = partial_deriv.regularity_estimate(f, p, "stable", scales, dims, cfg.N)
        return c, s

    rows, table = [], []
    worst, failures = np.inf, 0
    for i, (p, (res, err)) in enumerate(zip(pts, _sweep(job, pts, threads))):
        if err is not None:
            failures += 1
            rows.append([i, *p, "nan", "nan", err])
            continue
        c, s = res
        slope_c = 1.0 if c.flat else c.slope
        worst = min(worst, slope_c)
        rows.append([i, *p, c.slope, s.slope, ""])
        for direction, r in (("center", c), ("stable", s)):
            table.extend([i, direction, t, dist] for t, dist in r.table)
    report.check("points_failed", failures, 0, failures == 0)
    report.check("min_center_slope", worst, cfg.tol("center_slope"), worst >= cfg.tol("center_slope"))
    return {"holder.csv": (["index", *_coord_header(f.dim), "center_slope", "stable_slope", "error"], rows),
            "holder_scales.csv": (["index", "direction", "scale", "distance"], table)}


def cmd_ddc(cfg, report, threads):
    fam = _family_of(cfg)
    p = _single_point(cfg, fam.dim)
    sp = splitting.splitting_at(fam.at(0.0), p, fam.dims, cfg.N)
    v = sp.Ec.basis[:, 0] if sp.Ec is not None else np.zeros(fam.dim)
    curve = family.dynamically_defined_curve(fam, p, v, (-cfg.half_span, cfg.half_span), cfg.ddc_step, cfg.N)
    vel0 = curve.velocities[curve.origin]
    _, dc, _ = sp.components(vel0 - curve.v)
    report.at_most("initial_velocity_center_defect", np.linalg.norm(dc), cfg.tol("ddc_initial_velocity"))
    d = fam.dim
    header = ["t", *_coord_header(d), *_coord_header(d, "v")]
    rows = [[t, *q, *vel] for t, q, vel in zip(curve.times, curve.points, curve.velocities)]
    if fam.conjugacy is not None and fam.dims[1] == 0:
        dev = max(float(np.linalg.norm(manifold.displacement(fam.conjugacy(t, p), q)))
                  for t, q in zip(curve.times, curve.points))
        report.at_most("max_deviation_from_conjugacy", dev, cfg.tol("ddc_tracking") * cfg.ddc_step)
    return {"ddc.csv": (header, rows)}


def cmd_param_derivative(cfg, report, threads):
    fam = _family_of(cfg)
    p = _single_point(cfg, fam.dim)
    res = family.theoremD_derivative(fam, p, cfg.which, cfg.N, fd_h=cfg.fd_h, z_h=cfg.z_h)
    report.at_most("z0_norm", res.Z0_norm, cfg.tol("z0"))
    report.at_most("solver_residual", res.residual, cfg.tol("solver_residual"))
    diff = float(np.linalg.norm(res.X - res.fd, 2))
    bound = cfg.tol("fd_relative") * float(np.linalg.norm(res.X, 2)) + cfg.tol("fd_absolute")
    report.check("solver_vs_fd", diff, bound, diff <= bound)
    rows = []
    if fam.shear is not None and fam.smooth_splitting:
        cf, _, _ = family.conjugacy_closed_form(fam, p, cfg.which, cfg.N)
        report.at_most("solver_vs_closed_form", float(np.linalg.norm(res.X - cf, 2)), cfg.tol("closed_form"))
    else:
        cf = np.full_like(res.X, np.nan)
    for (i, j), x in np.ndenumerate(res.X):
        rows.append([i, j, x, res.fd[i, j], cf[i, j]])
    blocks = [[name, res.classes[name], *res.gains[name]] for name in res.classes]
    return {"param_derivative.csv": (["row", "col", "solver", "fd", "closed_form"], rows),
            "param_blocks.csv": (["block", "series", "forward_gain", "backward_gain"], blocks)}


def cmd_thmC(cfg, report, threads):
    fam = _family_of(cfg)
    p = _single_point(cfg, fam.dim)
    res = family.theoremC_identity_check(fam, p, cfg.N, h=cfg.fd_h, step=cfg.fd_step, fd_h=cfg.fd_h)
    report.at_most("identity_relative_residual", res.relative, cfg.tol("thmC_relative"))
    rows = [[i, j, res.left[i, j], res.ddc[i, j], res.spatial[i, j]] for (i, j), _ in np.ndenumerate(res.left)]
    return {"thmC.csv": (["row", "col", "t_slope", "ddc_slope", "spatial_term"], rows)}


def _selftest_cases():
    from .dynamics import linear_toral, orbit, perturbed_skew, rotation_family, skew_product
    cat = linear_toral()
    sk = skew_product()
    phi = (np.sqrt(5) - 1) / 2
    eu = np.array([1.0, phi]) / np.linalg.norm([1.0, phi])
    rot = dynamics.MapSpec(name="rotation", dim=1, lift=lambda x: x + 0.25,
                           jacobian=lambda x: np.eye(1), hessian=lambda x: np.zeros((1, 1, 1)))
    ex, ey = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])

    def e(i, d=3):
        return np.eye(d)[:, [i]]

    cases = [
        ("wrap_mod1", lambda: np.abs(manifold.wrap([1.25, -0.5]) - [0.25, 0.5]).max()),
        ("wrap_lattice", lambda: np.abs(manifold.wrap([2.0, 3.0])).max()),
        ("displacement_minimal", lambda: np.abs(manifold.displacement([0.9, 0.1], [0.1, 0.2]) - [0.2, 0.1]).max()),
        ("displacement_half", lambda: abs(manifold.displacement([0.0], [0.5])[0] + 0.5)),
        ("cat_inverse", lambda: np.abs(manifold.displacement(cat.eval(dynamics.invert(cat, [0.3, 0.7])), [0.3, 0.7])).max()),
        ("cat_fixed_orbit", lambda: np.abs(np.array(orbit(cat, [0.0, 0.0], 5))).max()),
        ("rational_rotation", lambda: np.abs(np.ravel(orbit(rot, [0.0], 4)) - [0, 0.25, 0.5, 0.75, 0.0]).max()),
        ("cat_hessian_zero", lambda: np.abs(cat.hessian(np.array([0.3, 0.1]))).max()),
        ("perturbed_eps0", lambda: np.abs(perturbed_skew(0.0).eval([0.1, 0.2, 0.3]) - sk.eval([0.1, 0.2, 0.3])).max()),
        ("plane_distance_self", lambda: splitting.plane_distance(ex, ex)),
        ("plane_distance_orthogonal", lambda: abs(splitting.plane_distance(ex, ey) - 1.0)),
        ("plane_distance_angle", lambda: abs(splitting.plane_distance(
            ex, np.array([[np.cos(0.1)], [np.sin(0.1)]])) - np.sin(0.1))),
        ("cat_unstable", lambda: splitting.plane_distance(splitting.unstable_plane(cat, [0.2, 0.4], 1, 40).basis,
                                                          eu[:, None])),
        ("skew_center_axis", lambda: splitting.plane_distance(splitting.center_plane(sk, [0.1, 0.2, 0.3], (1, 1, 1), 40).basis, e(2))),
        ("skew_series_zero", lambda: partial_deriv.dEu_dEc_series(sk, [0.1, 0.2, 0.3], e(2)[:, 0], 30).graph.norm),
        ("series_v_zero", lambda: partial_deriv.dEu_dEc_series(perturbed_skew(0.02), [0.1, 0.2, 0.3], np.zeros(3), 30).graph.norm),
        ("rotation_family_lift_zero", lambda: np.linalg.norm(family.pc_series(rotation_family(), 0.0, [0.1, 0.2, 0.3], 30).value)),
    ]
    return cases


def cmd_selftest(cfg, report, threads):
    rows = []
    tol = cfg.tol("selftest")
    for name, fn in _selftest_cases():
        try:
            val = float(fn())
            err = ""
        except Exception as exc:  # noqa: BLE001 - every case must report
            val, err = float("nan"), f"{type(exc).__name__}: {exc}"
        report.at_most(name, val, tol)
        rows.append([name, val, tol, bool(np.isfinite(val) and val <= tol), err])
    return {"selftest.csv": (["case", "value", "tolerance", "pass", "error"], rows)}


COMMANDS = {
    "splitting": cmd_splitting,
    "bunching": cmd_bunching,
    "partial-derivative": cmd_partial_derivative,
    "holder": cmd_holder,
    "ddc": cmd_ddc,
    "param-derivative": cmd_param_derivative,
    "thmC-check": cmd_thmC,
    "selftest": cmd_selftest,
}


def run(subcommand, cfg, out=None, threads=1, strict=False):
    """Execute one subcommand; write CSVs and report.json into ``out`` when given."""
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; known: {list(COMMANDS)}")
    threads = (os.cpu_count() or 1) if threads == 0 else threads
    report = RunReport(config={"subcommand": subcommand, **_jsonable_config(cfg)})
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tables = COMMANDS[subcommand](cfg, report, threads)
    if strict:
        report.check("warnings", len(caught), 0, len(caught) == 0)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in tables.items():
            write_csv(out / name, header, rows)
            report.files.append(name)
    report.runtime_seconds = time.perf_counter() - start
    if out is not None:
        (out / "report.json").write_text(report.to_json() + "\n")
    report.tables = tables
    return report


def _jsonable_config(cfg):
    d = asdict(cfg)
    d["config_text"] = config_text(cfg)
    return d


def build_parser():
    ap = argparse.ArgumentParser(prog="phsplit", description="Invariant splittings of toral maps and their derivatives.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="flat key = value config file")
    ap.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps (0 = all cores)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--strict", action="store_true", help="treat warnings as failures")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text, str(args.config) if args.config else "<defaults>")
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        report = run(args.subcommand, cfg, args.out, args.threads, args.strict)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SplittingError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for r in report.results:
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['name']}: {r['value']} (tol {r['tolerance']})")
    print(f"wrote {len(report.files)} file(s) to {args.out} in {report.runtime_seconds:.2f} s")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
