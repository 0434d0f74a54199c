"""Extrinsic geometry of an immersion at a parameter point, in jet arithmetic.

Index conventions for the arrays stored here (``n`` parameters, ``m``
normals, ``D`` chart coordinates):

* ``dx[a, :]``       tangent vector ``d_a x``
* ``xi[j, :]``       j-th unit normal (tangent to the model)
* ``II[j, a, b]``    ``<II(d_a, d_b), xi_j>``
* ``A[j, c, b]``     ``(A_j)^c_b``, so ``A_j d_b = A[j, :, b]``
* ``s[a, j, l]``     ``<nabla^perp_a xi_j, xi_l>``
* ``gamma[c, a, b]`` Christoffel symbols of the induced metric
* ``nabla_A[a, j, c, b]`` components of ``(nabla_a A_j)``, including the
  normal-connection correction ``- sum_l s[a, j, l] A_l``

The correction term makes every frame-summed quantity equal to its value
in a parallel normal frame, without ever transporting a frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import jet as J
from .expr import Node, eval_jet, parse_validated
from .spaceform import AmbientModel, ambient_inner, check_on_model

G_EIG_FLOOR = 1e-10
W_REL_FLOOR = 1e-8
GAP_THRESHOLD = 1e-6


class ImmersionError(ValueError):
    """The differential of the immersion is rank deficient at the point."""


@dataclass
class GeometryJet:
    u0: np.ndarray
    model: AmbientModel
    x: J.Jet  # (D,)
    dx: J.Jet  # (n, D), order K-1
    ddx: J.Jet  # (n, n, D), order K-2
    xi: J.Jet  # (m, D), order K-1
    g: J.Jet  # (n, n), order K-1
    pivots: tuple = ()

    @property
    def n(self) -> int:
        return self.dx.shape[0]

    @property
    def m(self) -> int:
        return self.xi.shape[0]

    @property
    def order(self) -> int:
        return self.x.order

    def frame_defects(self) -> dict[str, float]:
        sig = self.model.signature
        xi0, dx0, x0 = self.xi.value, self.dx.value, self.x.value

        def gram(a, b):
            return (np.atleast_2d(a) * sig) @ np.atleast_2d(b).T

        out = {
            "tangent_normal": float(np.max(np.abs(gram(dx0, xi0)))),
            "normal_orthonormal": float(np.max(np.abs(gram(xi0, xi0) - np.eye(self.m)))),
        }
        if self.model.is_quadric:
            out["radial_tangent"] = float(np.max(np.abs(gram(x0, dx0))))
            out["radial_normal"] = float(np.max(np.abs(gram(x0, xi0))))
        return out


@dataclass
class ShapeData:
    g: J.Jet
    ginv: J.Jet
    II: J.Jet
    A: J.Jet
    s: J.Jet
    H: J.Jet
    gamma: J.Jet
    nabla_A: J.Jet
    normal_curvature: np.ndarray  # R^perp[a, b, j, l] at the base point
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def self_adjoint_defect(self) -> float:
        gA = np.einsum("cd,jdb->jcb", self.g.value, self.A.value)
        return float(np.max(np.abs(gA - gA.transpose(0, 2, 1))))

    def mean_curvature_operator(self) -> np.ndarray:
        """``A_H`` with ``H = tr_I II``."""
        return np.einsum("j,jcb->cb", self.H.value, self.A.value)


@dataclass
class PrincipalDecomp:
    proj: np.ndarray  # (s, n, n) g-orthogonal projectors
    dims: np.ndarray  # (s,)
    lam: np.ndarray  # (s, m): lam[i, j] = lambda_i(xi_j)
    spread: float  # largest within-cluster deviation
    gap: float  # smallest distance between distinct principal normals
    ambiguous: bool

    @property
    def s(self) -> int:
        return self.proj.shape[0]

    @property
    def eta(self) -> np.ndarray:
        """Principal normal vectors in the ``xi`` frame."""
        return self.lam


def _as_asts(coords, n: int) -> list[Node]:
    return [parse_validated(c, n) if isinstance(c, str) else c for c in coords]


def evaluate_geometry(coords, model: AmbientModel, u0, order: int = 4, on_model_tol: float = 1e-9) -> GeometryJet:
    """Jets of the immersion, its tangent frame and a normal frame at ``u0``."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    n = u0.shape[0]
    D = model.chart_dim
    m = model.dim - n
    if len(coords) != D:
        raise ValueError(f"{len(coords)} coordinate expressions for a chart of dimension {D}")
    if m < 1:
        raise ValueError(f"codimension must be positive (n={n}, space form dimension {model.dim})")
    if order < 2:
        raise ValueError("geometry needs jets of order >= 2")
    asts = _as_asts(coords, n)
    x = J.stack([eval_jet(a, u0, order) for a in asts])
    check_on_model(model, x.value, on_model_tol)

    dx = J.stack([x.diff(a) for a in range(n)])
    ddx = J.stack([dx.diff(a) for a in range(n)], axis=1)  # ddx[a, b] = d_b d_a x
    g = ambient_inner(model, dx, dx)
    eig = np.linalg.eigvalsh(g.value)
    if eig[0] < G_EIG_FLOOR:
        raise ImmersionError(f"immersion is rank deficient: least eigenvalue of g is {eig[0]:.3e}")

    xi, pivots = _normal_frame(model, x.truncate(order - 1), dx, m)
    return GeometryJet(u0, model, x, dx, ddx, xi, g, pivots)


def _normal_frame(model: AmbientModel, x: J.Jet, dx: J.Jet, m: int) -> tuple[J.Jet, tuple]:
    """Pivoted Gram-Schmidt of the chart axes against span{x?, d_a x}."""
    D, n, order = model.chart_dim, dx.n, dx.order
    basis = J.stack([x] + list(dx)) if model.is_quadric else dx
    gram_inv = J.inv(ambient_inner(model, basis, basis))
    sig = model.signature
    # residuals of every chart axis: e_i - B^T G^-1 <B, e_i>
    coef = J.contract("pq,qi->pi", gram_inv, basis * sig)
    resid = J.eye(D, n, order) - J.contract("pi,pk->ik", coef, basis)

    chosen: list[J.Jet] = []
    pivots = []
    remaining = list(range(D))
    for _ in range(m):
        best, best_norm, best_vec = None, -np.inf, None
        for i in remaining:
            r = resid[i]
            for e in chosen:
                r = r - ambient_inner(model, r, e) * e
            nrm = float(ambient_inner(model, r.value, r.value))
            if nrm > best_norm * (1 + 1e-12):
                best, best_norm, best_vec = i, nrm, r
        if best_norm <= 1e-24:
            raise ImmersionError("could not complete the normal frame")
        remaining.remove(best)
        pivots.append(best)
        chosen.append(best_vec / J.sqrt(ambient_inner(model, best_vec, best_vec)))
    return J.stack(chosen), tuple(pivots)


def mix_normal_frame(geom: GeometryJet, rotation: J.Jet) -> GeometryJet:
    """Replace the normal frame by ``rotation @ xi`` (``rotation`` orthogonal)."""
    return replace(geom, xi=J.contract("jl,lk->jk", rotation, geom.xi))


def random_rotation_field(m: int, u0, order: int, rng: np.random.Generator) -> J.Jet:
    """A point-dependent orthogonal matrix field (Cayley transform of a skew field)."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    n = u0.shape[0]
    raw = rng.normal(size=(n + 1, m, m))
    skew = 0.5 * (raw - raw.transpose(0, 2, 1))
    S = J.Jet.constant(skew[0], n, order)
    for a in range(n):
        du = J.Jet.variable(a, u0, order) - u0[a]
        S = S + du * skew[a + 1]
    I = J.eye(m, n, order)
    return J.matmul(J.inv(I - S), I + S)


def shape_operators(geom: GeometryJet) -> ShapeData:
    model = geom.model
    g = geom.g
    ginv = J.inv(g)
    II = ambient_inner(model, geom.xi, geom.ddx)  # (m, n, n)
    A = J.contract("cd,jdb->jcb", ginv, II)
    gamma = J.contract("cd,dab->cab", ginv, ambient_inner(model, geom.dx, geom.ddx))

    dxi = geom.xi.grad().transpose(2, 0, 1)  # dxi[a, j] = d_a xi_j
    s = ambient_inner(model, dxi, geom.xi)
    s = 0.5 * (s - s.transpose(0, 2, 1))  # <d xi_j, xi_l> + <xi_j, d xi_l> = 0 exactly
    H = J.trace(A)

    dA = A.grad().transpose(3, 0, 1, 2)  # dA[a, j, c, b] = d_a A_j^c_b
    nabla_A = (
        dA
        + J.contract("cae,jeb->ajcb", gamma, A)
        - J.contract("jce,eab->ajcb", A, gamma)
        - J.contract("ajl,lcb->ajcb", s, A)
    )
    return ShapeData(g, ginv, II, A, s, H, gamma, nabla_A, _normal_curvature(s))


def _normal_curvature(s: J.Jet) -> np.ndarray:
    ds = s.grad().value  # ds[b, j, l, a] = d_a s[b, j, l]
    s0 = s.value
    d = np.einsum("bjla->abjl", ds)
    r = d - d.transpose(1, 0, 2, 3)
    r += np.einsum("bjk,akl->abjl", s0, s0) - np.einsum("ajk,bkl->abjl", s0, s0)
    return r


def normal_flatness(shape: ShapeData) -> float:
    """Max-norm of the normal curvature components (0 for hypersurfaces)."""
    if shape.m == 1:
        return 0.0
    return float(np.max(np.abs(shape.normal_curvature)))


def codazzi_tensor(shape: ShapeData) -> np.ndarray:
    """``C[j, a, b, c] = <(nabla_a A_j) d_b, d_c>``."""
    return np.einsum("ce,ajeb->jabc", shape.g.value, shape.nabla_A.value)


def codazzi_residual(shape: ShapeData, geom: GeometryJet | None = None) -> float:
    c = codazzi_tensor(shape)
    swap_ab = np.max(np.abs(c - c.transpose(0, 2, 1, 3)))
    swap_bc = np.max(np.abs(c - c.transpose(0, 1, 3, 2)))
    return float(max(swap_ab, swap_bc))


def relative_nullity(W, threshold: float = W_REL_FLOOR) -> int:
    """Number of (near-)zero eigenvalues of the Obata operator."""
    w = np.sort(np.real(np.linalg.eigvals(np.asarray(W, dtype=float))))
    top = np.max(np.abs(w)) if w.size else 0.0
    if top <= 1e-300:
        return int(w.size)
    return int(np.sum(w <= threshold * top))


def principal_decomposition(
    shape: ShapeData,
    gap_threshold: float = GAP_THRESHOLD,
    rng: np.random.Generator | None = None,
    separation: float = 1e-3,
) -> PrincipalDecomp:
    """Joint eigenspaces of the Weingarten operators at the base point."""
    rng = np.random.default_rng(0) if rng is None else rng
    g = shape.g.value
    A = shape.A.value
    c = rng.normal(size=shape.m)
    gC = np.einsum("j,cd,jdb->cb", c, g, A)
    _, U = scipy.linalg.eigh(0.5 * (gC + gC.T), g)  # g-orthonormal columns
    lam_vec = np.einsum("cu,cd,jde,eu->uj", U, g, A, U)  # lambda of each eigvector per A_j

    clusters: list[list[int]] = []
    for u in range(U.shape[1]):
        for cl in clusters:
            if np.max(np.abs(lam_vec[cl[0]] - lam_vec[u])) <= gap_threshold:
                cl.append(u)
                break
        else:
            clusters.append([u])
    proj = np.array([sum(np.outer(U[:, u], U[:, u]) @ g for u in cl) for cl in clusters])
    lam = np.array([lam_vec[cl].mean(axis=0) for cl in clusters])
    spread = max(float(np.max(np.abs(lam_vec[cl] - lam[i]))) for i, cl in enumerate(clusters))
    gap = np.inf
    for i in range(len(clusters)):
        for k in range(i + 1, len(clusters)):
            gap = min(gap, float(np.linalg.norm(lam[i] - lam[k])))
    return PrincipalDecomp(proj, np.array([len(cl) for cl in clusters]), lam, spread, gap, bool(gap < separation))


def projector_derivatives(shape: ShapeData, decomp: PrincipalDecomp) -> np.ndarray:
    """``dP[a, k, j] = P_k (d_a P_j) P_j`` for k != j, from first-order perturbation.

    Differentiating ``A_l P_j = lambda_jl P_j`` and sandwiching with ``P_k``
    gives ``P_k (d A_l) P_j = (lambda_jl - lambda_kl) P_k (d P_j) P_j``;
    the normal index is solved in the least-squares sense.
    """
    dA = np.einsum("jcba->ajcb", shape.A.grad().value)  # plain partials
    s, n = decomp.s, shape.n
    P, lam = decomp.proj, decomp.lam
    out = np.zeros((n, s, s, n, n))
    for j in range(s):
        for k in range(s):
            if j == k:
                continue
            diff = lam[j] - lam[k]
            weight = diff / (diff @ diff)
            sandwich = np.einsum("ce,ajef,fb->ajcb", P[k], dA, P[j])
            out[:, k, j] = np.einsum("j,ajcb->acb", weight, sandwich)
    return out


def covprincipal_residual(shape: ShapeData, decomp: PrincipalDecomp) -> tuple[float, float]:
    """Defect of the principal-curvature expansion of ``nabla A``; returns (abs, scale).

    Probes are coordinate vectors projected into the clusters.  The
    eigenvalue derivative is taken along a parallel normal frame:
    ``X(lambda_j(xi_l)) = d_X lambda_jl - sum_m s[X, l, m] lambda_jm``.
    """
    g = shape.g.value
    P, lam, dims = decomp.proj, decomp.lam, decomp.dims
    nA = shape.nabla_A.value  # [a, l, c, b]
    gamma = shape.gamma.value
    dA = np.einsum("jcba->ajcb", shape.A.grad().value)
    s0 = shape.s.value
    dP = projector_derivatives(shape, decomp)
    worst, scale = 0.0, float(np.max(np.abs(nA))) if nA.size else 0.0
    for j in range(decomp.s):
        for k in range(decomp.s):
            # lhs[a, l, c, b] = <(nabla_a A_l) P_j d_b, P_k d_c>
            lhs = np.einsum("ec,ef,alfg,gb->alcb", P[k], g, nA, P[j])
            if j != k:
                cov = dP[:, k, j] + np.einsum("ce,eaf,fb->acb", P[k], gamma, P[j])  # P_k nabla_a(P_j .)
                conn = np.einsum("ec,ef,afb->acb", P[k], g, cov)
                rhs = np.einsum("l,acb->alcb", lam[j] - lam[k], conn)
            else:
                dlam = np.einsum("ce,alec->al", P[j], dA) / dims[j]
                dlam_par = dlam - np.einsum("alm,m->al", s0, lam[j])
                yz = np.einsum("ec,ef,fb->cb", P[j], g, P[j])
                rhs = np.einsum("al,cb->alcb", dlam_par, yz)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst, scale
