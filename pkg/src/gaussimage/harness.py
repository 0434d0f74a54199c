"""Scenarios, the built-in catalog, full verification runs, sweeps and tensor queries."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata, resources
from itertools import product
from pathlib import Path

import jsonschema
import numpy as np

from . import pipeline as PL
from .expr import ExprError, Node, constant_value, parse_validated
from .spaceform import AmbientModel

SCHEMA_VERSION = 1
DEFAULT_GRID = 5
DOMAIN_SHRINK = 0.05
SWEEP_QUANTITIES = ("scalar_III", "scalar_I", "w_min", "cluster_gap") + PL.CHECK_NAMES
TENSORS = ("W", "III", "T", "P", "R3", "scalar")

_number = {"oneOf": [{"type": "number"}, {"type": "string"}]}
SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["name", "ambient", "n", "coords", "domain"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "ambient": {
            "type": "object",
            "required": ["kind", "dim"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["euclidean", "sphere", "hyperbolic"]},
                "k": {"type": "number"},
                "dim": {"type": "integer", "minimum": 1},
            },
        },
        "n": {"type": "integer", "minimum": 1},
        "coords": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "domain": {"type": "array", "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"oneOf": [{"type": "integer", "minimum": 0}, {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "points": {"type": "array", "items": {"type": "array", "items": _number}},
            },
        },
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "seed": {"type": "integer", "minimum": 0},
        "expect_failure": {"oneOf": [{"enum": sorted(PL.EXPECTED_FAILURES)}, {"type": "null"}]},
    },
}

_DEFAULT_K = {"euclidean": 0.0, "sphere": 1.0, "hyperbolic": -1.0}


class ScenarioError(ValueError):
    """Invalid scenario file or reference."""


@dataclass
class Scenario:
    name: str
    model: AmbientModel
    n: int
    coords: list[Node]
    sources: list[str]
    domain: np.ndarray  # (n, 2)
    grid: tuple[int, ...]
    points: np.ndarray  # explicit points (p, n)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    expect_failure: str | None = None
    description: str = ""

    @property
    def m(self) -> int:
        return self.model.dim - self.n

    def sample_points(self) -> np.ndarray:
        """Grid over the domain shrunk 5% from each end, then explicit points."""
        pts = []
        if all(k > 0 for k in self.grid):
            axes = [_axis(lo, hi, k) for (lo, hi), k in zip(self.domain, self.grid)]
            pts = [np.array(p) for p in product(*axes)]
        pts.extend(self.points)
        return np.array(pts, dtype=float).reshape(-1, self.n)


def _axis(lo: float, hi: float, k: int, shrink: float = DOMAIN_SHRINK) -> np.ndarray:
    pad = shrink * (hi - lo)
    if k == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo + pad, hi - pad, k)


def _const(value, where: str) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return constant_value(parse_validated(value, 0))
    except ExprError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def scenario_from_dict(data: dict, source: str = "<scenario>") -> Scenario:
    errors = sorted(jsonschema.Draft202012Validator(SCENARIO_SCHEMA).iter_errors(data), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'.'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ScenarioError(f"{source}: schema violation\n  " + "\n  ".join(lines))
    amb = data["ambient"]
    try:
        model = AmbientModel(amb["kind"], float(amb.get("k", _DEFAULT_K[amb["kind"]])), amb["dim"])
    except ValueError as exc:
        raise ScenarioError(f"{source}: ambient: {exc}") from None
    n = data["n"]
    if n >= model.dim:
        raise ScenarioError(f"{source}: n={n} leaves no normal directions in a space form of dimension {model.dim}")
    if len(data["coords"]) != model.chart_dim:
        raise ScenarioError(
            f"{source}: coords: dimension error, {len(data['coords'])} expressions but the "
            f"{model.kind} chart of dimension {model.dim} has {model.chart_dim} coordinates"
        )
    coords = []
    for i, text in enumerate(data["coords"]):
        try:
            coords.append(parse_validated(text, n))
        except ExprError as exc:
            raise ScenarioError(f"{source}: coords.{i}: {exc}") from None
    if len(data["domain"]) != n:
        raise ScenarioError(f"{source}: domain: {len(data['domain'])} intervals for n={n}")
    domain = np.array([[_const(v, f"domain.{i}") for v in iv] for i, iv in enumerate(data["domain"])])
    if np.any(domain[:, 0] > domain[:, 1]):
        raise ScenarioError(f"{source}: domain: empty interval")
    samples = data.get("samples", {})
    grid = samples.get("grid", DEFAULT_GRID)
    grid = tuple(grid) if isinstance(grid, list) else (grid,) * n
    if len(grid) != n:
        raise ScenarioError(f"{source}: samples.grid: {len(grid)} resolutions for n={n}")
    points = []
    for i, p in enumerate(samples.get("points", [])):
        if len(p) != n:
            raise ScenarioError(f"{source}: samples.points.{i}: {len(p)} coordinates for n={n}")
        pt = np.array([_const(v, f"samples.points.{i}") for v in p])
        if np.any(pt < domain[:, 0]) or np.any(pt > domain[:, 1]):
            raise ScenarioError(f"{source}: samples.points.{i}: point outside the declared domain")
        points.append(pt)
    unknown = sorted(set(data.get("tolerances", {})) - set(PL.CHECK_NAMES))
    if unknown:
        raise ScenarioError(f"{source}: tolerances: unknown check {unknown[0]!r}")
    return Scenario(
        name=data["name"],
        model=model,
        n=n,
        coords=coords,
        sources=list(data["coords"]),
        domain=domain,
        grid=grid,
        points=np.array(points).reshape(-1, n),
        tolerances=dict(data.get("tolerances", {})),
        seed=data.get("seed", 0),
        expect_failure=data.get("expect_failure"),
        description=data.get("description", ""),
    )


def _builtin_dir():
    return resources.files("gaussimage") / "scenarios"


def builtin_names() -> list[str]:
    return sorted(p.name[: -len(".json")] for p in _builtin_dir().iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a JSON file path or a built-in name."""
    path = Path(ref)
    if path.is_file():
        text, source = path.read_text(), str(path)
    elif str(ref) in builtin_names():
        text, source = (_builtin_dir() / f"{ref}.json").read_text(), str(ref)
    else:
        raise ScenarioError(f"no scenario file or built-in named {str(ref)!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: invalid JSON: {exc}") from None
    return scenario_from_dict(data, source)


def list_builtins() -> list[dict]:
    out = []
    for name in builtin_names():
        sc = load_scenario(name)
        out.append(
            {
                "name": name,
                "ambient": sc.model.kind,
                "k": sc.model.k,
                "n": sc.n,
                "m": sc.m,
                "expect_failure": sc.expect_failure,
                "description": sc.description,
            }
        )
    return out


@dataclass
class CheckReport:
    scenario: Scenario
    points: list[PL.PointResult]
    seed: int
    tol_scale: float
    metadata: dict = field(default_factory=dict)

    @property
    def expected_check(self) -> str | None:
        tag = self.scenario.expect_failure
        return PL.EXPECTED_FAILURES[tag] if tag else None

    @property
    def passed(self) -> bool:
        if self.expected_check is None:
            return all(p.first_failure is None for p in self.points)
        return bool(self.points) and all(p.first_failure == self.expected_check for p in self.points)

    def summary(self) -> dict:
        checks = {}
        for name in PL.CHECK_NAMES:
            recs = [r for p in self.points for r in p.checks if r.name == name]
            finite = [r.residual for r in recs if r.verdict != "skip"]
            checks[name] = {
                "max_residual": PL._num(max(finite)) if finite else None,
                "tolerance": PL._num(recs[0].tolerance) if recs else None,
                "pass": sum(r.verdict == "pass" for r in recs),
                "fail": sum(r.verdict == "fail" for r in recs),
                "skip": sum(r.verdict == "skip" for r in recs),
            }
        out = {"points": len(self.points), "passed": self.passed, "checks": checks}
        if self.expected_check:
            firsts = [p.first_failure for p in self.points]
            out["expected_failure"] = {
                "tag": self.scenario.expect_failure,
                "check": self.expected_check,
                "fired_at": sum(f == self.expected_check for f in firsts),
                "other_first_failures": sorted({f for f in firsts if f != self.expected_check and f is not None}),
                "points_without_failure": sum(f is None for f in firsts),
            }
        return out

    def to_json(self) -> dict:
        sc = self.scenario
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": sc.name,
            "ambient": {"kind": sc.model.kind, "k": sc.model.k, "dim": sc.model.dim},
            "n": sc.n,
            "m": sc.m,
            "seed": self.seed,
            "tol_scale": self.tol_scale,
            "expect_failure": sc.expect_failure,
            "passed": self.passed,
            "summary": self.summary(),
            "points": [p.to_json() for p in self.points],
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, allow_nan=False) + "\n"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _map_points(fn, points, threads: int) -> list:
    if threads <= 1:
        return [fn(i, u) for i, u in enumerate(points)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda iu: fn(*iu), enumerate(points)))


def run_checks(scenario: Scenario, *, seed: int | None = None, tol_scale: float = 1.0, threads: int = 1, points=None) -> CheckReport:
    """Run every check at every sample point; results are ordered by point index."""
    seed = scenario.seed if seed is None else seed
    pts = scenario.sample_points() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    start = time.perf_counter()

    def one(i, u):
        return PL.analyze_point(
            scenario.coords, scenario.model, u, index=i, seed=seed, tolerances=scenario.tolerances, tol_scale=tol_scale
        )

    results = sorted(_map_points(one, pts, threads), key=lambda r: r.index)
    meta = {"tool_version": _version(), "threads": threads, "elapsed_seconds": round(time.perf_counter() - start, 6)}
    return CheckReport(scenario, results, seed, tol_scale, meta)


def parse_grid(text: str, n: int) -> tuple[int, ...]:
    try:
        grid = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ScenarioError(f"malformed grid {text!r}; expected e.g. 16x16") from None
    if len(grid) == 1:
        grid = grid * n
    if len(grid) != n:
        raise ScenarioError(f"grid {text!r} has {len(grid)} axes, scenario has n={n}")
    if min(grid) < 2:
        raise ScenarioError("sweep grids need at least 2 points per axis")
    return grid


def sweep(scenario: Scenario, grid: tuple[int, ...], quantities: list[str], *, seed: int | None = None, threads: int = 1) -> str:
    """CSV of the requested quantities over a grid (NaN plus a flag where a regularity check fails)."""
    unknown = [q for q in quantities if q not in SWEEP_QUANTITIES]
    if unknown:
        raise ScenarioError(f"unknown quantity {unknown[0]!r}; choose from {', '.join(SWEEP_QUANTITIES)}")
    if len(grid) != scenario.n or min(grid) < 2:
        raise ScenarioError("sweep grids need one resolution >= 2 per axis")
    axes = [_axis(lo, hi, k) for (lo, hi), k in zip(scenario.domain, grid)]
    pts = np.array(list(product(*axes)), dtype=float)
    report = run_checks(scenario, seed=seed, threads=threads, points=pts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"u{i + 1}" for i in range(scenario.n)] + list(quantities) + ["flag"])
    for res in report.points:
        gating = next((c.name for c in res.checks if c.verdict == "fail" and PL.CHECKS[c.name].gating), None)
        flag = gating or res.first_failure or "ok"
        values = [float("nan") if gating else res.quantities.get(q, float("nan")) for q in quantities]
        writer.writerow([repr(float(v)) for v in res.u] + [repr(float(v)) for v in values] + [flag])
    return buf.getvalue()


def eval_tensor(scenario: Scenario, point, tensor: str, literal_p: bool = False) -> dict:
    """One tensor at one point, as a JSON-ready dict."""
    if tensor not in TENSORS:
        raise ScenarioError(f"unknown tensor {tensor!r}; choose from {', '.join(TENSORS)}")
    u = np.atleast_1d(np.asarray(point, dtype=float))
    if u.shape != (scenario.n,):
        raise ScenarioError(f"point has {u.size} coordinates, scenario has n={scenario.n}")
    st = PL.compute_state(scenario.coords, scenario.model, u, literal_p=literal_p)
    layouts = {
        "W": (st.obata.W.value, "W[c, b]: component c of W d_b"),
        "III": (st.obata.III.value, "III[a, b]"),
        "T": (st.conn.T, "T[c, a, b]: component c of T(d_a, d_b)"),
        "P": (st.aux.P, "P[a, b, e, c]: component e of P(d_a, d_b) d_c"),
        "R3": (st.curvature["theorem"].components, "R3[a, b, c, d] = III(R^III(d_a, d_b) d_c, d_d)"),
    }
    if tensor == "scalar":
        from .gaussmap import gauss_image_scalar_formula

        terms = gauss_image_scalar_formula(scenario.model, st.shape, st.obata, st.conn, st.aux)
        return {"tensor": "scalar", "point": u.tolist(), "value": terms["total"], "terms": terms}
    arr, layout = layouts[tensor]
    return {"tensor": tensor, "point": u.tolist(), "layout": layout, "shape": list(arr.shape), "values": arr.tolist()}


def parse_point(text: str, n: int) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != n:
        raise ScenarioError(f"point {text!r} has {len(parts)} coordinates, scenario has n={n}")
    return np.array([_const(t.strip(), "point") for t in parts])

