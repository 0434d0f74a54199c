"""Per-point verification: every identity checked at one parameter point.

A single order-4 jet pass of the immersion feeds every path.  The oracle
sees only the metric jets of g and of III; the formula paths see only the
shape operators and their covariant derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gaussmap as G
from . import immersion as I
from . import intrinsic as Q
from . import jet as J
from .expr import ExprError, eval_jet
from .spaceform import AmbientModel, OffModelError, constraint_residual

JET_ORDER = 4
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class CheckSpec:
    name: str
    tolerance: float
    description: str
    gating: bool = False
    scalable: bool = True  # threshold checks are not affected by --tol-scale


REGISTRY: tuple[CheckSpec, ...] = (
    CheckSpec("model_residual", 1e-9, "immersion point lies on the space-form model", gating=True),
    CheckSpec("immersion_rank", 1.0, "least eigenvalue of g above 1e-10 (ratio floor/eigenvalue)", True, False),
    CheckSpec("frame_orthonormality", 1e-11, "tangent/normal frame orthonormal and model-tangent"),
    CheckSpec("shape_self_adjoint", 1e-10, "g A_j symmetric"),
    CheckSpec("normal_flatness", 1e-8, "normal curvature vanishes", gating=True),
    CheckSpec("codazzi", 1e-9, "<(nabla_a A_j) d_b, d_c> totally symmetric"),
    CheckSpec("w_regularity", 1.0, "Obata operator invertible (ratio 1e-8 w_max / w_min)", True, False),
    CheckSpec("obata_identity", 1e-7, "W = k(n-1) Id + A_H - Ric operator"),
    CheckSpec("t_formula_vs_oracle", 1e-7, "W^-1 sum A_j nabla A_j equals Gamma(III) - Gamma(I)"),
    CheckSpec("t_principal_vs_formula", 1e-7, "principal-normal expansion of T equals the formula"),
    CheckSpec("t_symmetry", 1e-9, "T symmetric in its two arguments"),
    CheckSpec("covprincipal", 1e-7, "nabla A expanded in principal curvatures and normals"),
    CheckSpec("gauss_equation", 1e-8, "Rbar = R + KN(II, II)"),
    CheckSpec("r3_theorem_vs_oracle", 1e-6, "III-curvature from R + P + KN(T,T) equals the oracle"),
    CheckSpec("r3_kn_vs_oracle", 1e-6, "III-curvature from R + L + KN(T,T) - sum KN(J_j,J_j) equals the oracle"),
    CheckSpec("r3_nablat_vs_oracle", 1e-6, "III-curvature from R + nabla T + T T equals the oracle"),
    CheckSpec("r3_routes_pairwise", 1e-6, "the three III-curvature routes agree pairwise"),
    CheckSpec("curvature_symmetries", 1e-9, "algebraic curvature identities of every (0,4) output"),
    CheckSpec("p_antisymmetry", 1e-10, "P(X, Y) = -P(Y, X)"),
    CheckSpec("scalar_formula_vs_contraction", 1e-6, "closed-form III scalar equals the double III-trace"),
    CheckSpec("scalar_formula_vs_oracle", 1e-6, "closed-form III scalar equals the oracle scalar"),
    CheckSpec("frame_independence", 1e-9, "W, III, T, R^III unchanged by a random normal-frame rotation"),
)

CHECKS = {c.name: c for c in REGISTRY}
CHECK_NAMES = tuple(c.name for c in REGISTRY)

EXPECTED_FAILURES = {
    "immersion-degenerate": "immersion_rank",
    "normal-not-flat": "normal_flatness",
    "W-singular": "w_regularity",
}


@dataclass
class CheckRecord:
    name: str
    residual: float
    tolerance: float
    verdict: str  # pass | fail | skip
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "residual": _num(self.residual),
            "tolerance": _num(self.tolerance),
            "verdict": self.verdict,
            "detail": self.detail,
        }


@dataclass
class PointResult:
    index: int
    u: np.ndarray
    checks: list[CheckRecord] = field(default_factory=list)
    quantities: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)

    def check(self, name: str) -> CheckRecord | None:
        return next((c for c in self.checks if c.name == name), None)

    @property
    def first_failure(self) -> str | None:
        return next((c.name for c in self.checks if c.verdict == "fail"), None)

    def to_json(self) -> dict:
        return {"index": self.index, "u": [_num(v) for v in self.u], "checks": [c.to_json() for c in self.checks]}


def _num(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")


def _mx(*arrays) -> float:
    return max((float(np.max(np.abs(a))) if np.size(a) else 0.0) for a in arrays)


def relative_residual(abs_diff: float, scale: float, tol: float) -> float:
    """``abs_diff / scale``, with differences below ``ABS_FLOOR`` always passing."""
    if not np.isfinite(abs_diff):
        return float("inf")
    return abs_diff / max(scale, ABS_FLOOR / tol)


class _Stop(Exception):
    pass


class _Recorder:
    def __init__(self, result: PointResult, tolerances: dict, tol_scale: float):
        self.result = result
        self.tolerances = tolerances
        self.tol_scale = tol_scale

    def tol(self, name: str) -> float:
        entry = CHECKS[name]
        tol = self.tolerances.get(name, entry.tolerance)
        return tol * self.tol_scale if entry.scalable else tol

    def ratio(self, name: str, residual: float, detail: str = "") -> None:
        tol = self.tol(name)
        verdict = "pass" if residual <= tol else "fail"
        self.result.checks.append(CheckRecord(name, float(residual), tol, verdict, detail))
        self.result.quantities[name] = float(residual)
        if verdict == "fail" and CHECKS[name].gating:
            raise _Stop(name)

    def rel(self, name: str, abs_diff: float, scale: float, detail: str = "") -> None:
        self.ratio(name, relative_residual(abs_diff, scale, self.tol(name)), detail)

    def skip(self, name: str, detail: str) -> None:
        self.result.checks.append(CheckRecord(name, float("nan"), self.tol(name), "skip", detail))

    def skip_rest(self, reason: str) -> None:
        done = {c.name for c in self.result.checks}
        for name in CHECK_NAMES:
            if name not in done:
                self.skip(name, reason)


@dataclass
class PointState:
    """Everything computed at one point, for tensor queries."""

    geom: I.GeometryJet
    shape: I.ShapeData
    riemann_I: Q.Curv4
    obata: G.ObataData
    conn: G.ConnDiff
    aux: G.AuxTensors
    curvature: dict


def compute_state(coords, model: AmbientModel, u, literal_p: bool = False) -> PointState:
    """Run the full formula pipeline at ``u``; raises on any irregularity."""
    geom = I.evaluate_geometry(coords, model, u, JET_ORDER, on_model_tol=np.inf)
    return _state_from_geometry(geom, literal_p)


def _state_from_geometry(geom: I.GeometryJet, literal_p: bool = False, riemann_I: Q.Curv4 | None = None) -> PointState:
    shape = I.shape_operators(geom)
    if riemann_I is None:
        riemann_I = Q.riemann(shape.g, "I")
    ob = G.obata(shape)
    conn = G.connection_difference(shape, ob)
    aux = G.build_aux_tensors(shape, ob, riemann_I, literal=literal_p)
    curvature = {r: G.gauss_image_curvature(r, shape, ob, conn, aux, riemann_I) for r in ("theorem", "kn", "nablaT")}
    return PointState(geom, shape, riemann_I, ob, conn, aux, curvature)


def _metric_eigs(asts, model: AmbientModel, u) -> np.ndarray:
    x = J.stack([eval_jet(a, u, 1) for a in asts])
    dx = x.grad().value.T  # dx[a] = d_a x
    g = (dx * model.signature) @ dx.T
    return np.linalg.eigvalsh(0.5 * (g + g.T))


def analyze_point(
    coords,
    model: AmbientModel,
    u,
    *,
    index: int = 0,
    seed: int = 0,
    tolerances: dict | None = None,
    tol_scale: float = 1.0,
) -> PointResult:
    """Run every registered check at ``u`` in registry order.

    A failing gating check stops the run; later checks are recorded as
    skipped so the report always lists every check.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    result = PointResult(index, u)
    rec = _Recorder(result, dict(tolerances or {}), tol_scale)
    try:
        _run_checks(rec, coords, model, u, np.random.default_rng([seed, index]))
    except _Stop as stop:
        rec.skip_rest(f"skipped after {stop.args[0]} failed")
    return result


def _run_checks(rec: _Recorder, coords, model: AmbientModel, u, rng) -> None:
    q = rec.result.quantities

    # model residual
    try:
        x0 = np.array([eval_jet(a, u, 0).value for a in coords], dtype=float)
        resid = constraint_residual(model, x0)
        detail = ""
        if model.kind == "hyperbolic" and x0[0] <= 0:
            resid, detail = float("inf"), "point lies on the lower sheet"
    except ExprError as exc:
        resid, detail = float("inf"), str(exc)
    scale = 1.0 / abs(model.k) if model.is_quadric else 1.0
    rec.rel("model_residual", resid, scale, detail)

    eig = _metric_eigs(coords, model, u)
    rank_ratio = I.G_EIG_FLOOR / eig[0] if eig[0] > 0 else float("inf")
    rec.ratio("immersion_rank", rank_ratio, f"least eigenvalue of g {eig[0]:.6e}")
    try:
        geom = I.evaluate_geometry(coords, model, u, JET_ORDER, on_model_tol=np.inf)
    except (I.ImmersionError, OffModelError, ExprError) as exc:
        rec.result.checks[-1] = CheckRecord("immersion_rank", float("inf"), rec.tol("immersion_rank"), "fail", str(exc))
        raise _Stop("immersion_rank") from None

    fd = geom.frame_defects()
    x_scale = _mx(geom.x.value) * _mx(geom.dx.value) if model.is_quadric else 0.0
    rec.rel("frame_orthonormality", max(fd.values()), max(1.0, x_scale))

    shape = I.shape_operators(geom)
    gA = np.einsum("cd,jdb->jcb", shape.g.value, shape.A.value)
    rec.rel("shape_self_adjoint", shape.self_adjoint_defect(), _mx(gA))

    W0 = np.einsum("jce,jeb->cb", shape.A.value, shape.A.value)
    q["normal_flatness_abs"] = I.normal_flatness(shape)
    rec.rel("normal_flatness", q["normal_flatness_abs"], _mx(W0), "max normal curvature component")

    dA = shape.A.grad().value
    rec.rel("codazzi", I.codazzi_residual(shape), _mx(I.codazzi_tensor(shape), dA))

    try:
        ob = G.obata(shape)
    except G.RegularityError as exc:
        ratio = I.W_REL_FLOOR * exc.w_max / exc.w_min if exc.w_min > 0 else float("inf")
        q["w_min"] = exc.w_min
        rec.ratio("w_regularity", ratio, str(exc))
        return
    q["w_min"] = float(ob.w[0])
    rec.ratio("w_regularity", I.W_REL_FLOOR * ob.w[-1] / ob.w[0], f"eigenvalues of W {np.array2string(ob.w, precision=6)}")

    riemann_I = Q.riemann(shape.g, "I")
    ric, scalar_I = Q.ricci_scalar(riemann_I)
    q["scalar_I"] = scalar_I
    terms = G.obata_identity_terms(ob, shape, ric, model.k)
    rec.rel("obata_identity", G.obata_identity_residual(ob, shape, ric, model.k), _mx(*terms.values()))

    conn = G.connection_difference(shape, ob)
    gamma_I = shape.gamma.value
    gamma_III = Q.christoffel(ob.III).value
    T_oracle = gamma_III - gamma_I
    t_scale = _mx(conn.T, gamma_III, gamma_I)
    rec.rel("t_formula_vs_oracle", _mx(conn.T - T_oracle), t_scale)

    decomp = I.principal_decomposition(shape, rng=rng)
    q["cluster_gap"] = float(decomp.gap) if np.isfinite(decomp.gap) else float("nan")
    if decomp.ambiguous:
        rec.skip("t_principal_vs_formula", f"principal normals separated by {decomp.gap:.3e}")
    else:
        principal = G.connection_difference_principal(decomp, shape, ob)
        rec.rel("t_principal_vs_formula", _mx(principal.T - conn.T), max(t_scale, _mx(principal.T)))
    rec.rel("t_symmetry", conn.symmetry_defect(), t_scale)
    if decomp.ambiguous:
        rec.skip("covprincipal", f"principal normals separated by {decomp.gap:.3e}")
    else:
        rec.rel("covprincipal", *I.covprincipal_residual(shape, decomp))

    gterms = G.gauss_equation_terms(shape, riemann_I, model)
    rec.rel("gauss_equation", G.gauss_equation_residual(shape, riemann_I, model), _mx(*gterms.values()))

    aux = G.build_aux_tensors(shape, ob, riemann_I)
    routes = {r: G.gauss_image_curvature(r, shape, ob, conn, aux, riemann_I) for r in ("theorem", "kn", "nablaT")}
    oracle = Q.riemann(ob.III, "III")
    R_low = np.einsum("abec,ed->abcd", G.curvature_operator(riemann_I), ob.III.value)
    r_scale = _mx(oracle.components, R_low, *(c.components for c in routes.values()))
    for route, name in (("theorem", "r3_theorem_vs_oracle"), ("kn", "r3_kn_vs_oracle"), ("nablaT", "r3_nablat_vs_oracle")):
        rec.rel(name, _mx(routes[route].components - oracle.components), r_scale)
    pair = max(
        _mx(routes["theorem"].components - routes["kn"].components),
        _mx(routes["theorem"].components - routes["nablaT"].components),
        _mx(routes["kn"].components - routes["nablaT"].components),
    )
    rec.rel("r3_routes_pairwise", pair, r_scale)

    T_form = conn.as_form()
    II_form = shape.II.value.transpose(1, 2, 0)
    sum_jj = sum(G.generalized_kn(Jj, Jj, ob.III.value) for Jj in aux.J)
    tensors = {
        "R_I": riemann_I.components,
        "R3_oracle": oracle.components,
        **{f"R3_{r}": c.components for r, c in routes.items()},
        "KN(T,T)": G.generalized_kn(T_form, T_form, ob.III.value),
        "KN(II,II)": G.generalized_kn(II_form, II_form, np.eye(shape.m)),
        "sum KN(J,J)": sum_jj,
    }
    worst, worst_name = 0.0, ""
    for name, S in tensors.items():
        defects = Q.Curv4(S, ob.III.value).symmetry_defects()
        r = relative_residual(max(defects.values()), _mx(S), rec.tol("curvature_symmetries"))
        if r >= worst:
            worst, worst_name = r, name
    rec.ratio("curvature_symmetries", worst, f"worst tensor {worst_name}")

    rec.rel("p_antisymmetry", aux.p_antisymmetry_defect(), _mx(aux.P))

    sterms = G.gauss_image_scalar_formula(model, shape, ob, conn, aux)
    s_formula = sterms["total"]
    s_contr = G.gauss_image_scalar("contraction", curvature=routes["theorem"])
    s_oracle = Q.ricci_scalar(oracle)[1]
    q["scalar_III"] = s_formula
    q["scalar_III_oracle"] = s_oracle
    s_scale = _mx(*sterms.values(), s_contr, s_oracle)
    rec.rel("scalar_formula_vs_contraction", abs(s_formula - s_contr), s_scale)
    rec.rel("scalar_formula_vs_oracle", abs(s_formula - s_oracle), s_scale)

    rotation = I.random_rotation_field(shape.m, u, geom.xi.order, rng)
    mixed = _state_from_geometry(I.mix_normal_frame(geom, rotation), riemann_I=riemann_I)
    pairs = {
        "W": (ob.W.value, mixed.obata.W.value),
        "III": (ob.III.value, mixed.obata.III.value),
        "T": (conn.T, mixed.conn.T),
        "R3": (routes["theorem"].components, mixed.curvature["theorem"].components),
    }
    worst, worst_name = 0.0, ""
    for name, (a, b) in pairs.items():
        r = relative_residual(_mx(a - b), _mx(a, b), rec.tol("frame_independence"))
        if r >= worst:
            worst, worst_name = r, name
    rec.ratio("frame_independence", worst, f"worst quantity {worst_name}")
