"""Obata operator, third fundamental form and the curvature of the Gauss image.

Operators are stored as mixed-index matrices ``M[e, c]`` (row = output
component).  Families of operators indexed by two tangent directions,
like ``R(d_a, d_b)`` or ``P(d_a, d_b)``, are arrays ``op[a, b, e, c]``.
Vector-valued bilinear forms such as ``T`` are ``h[a, b, e]``: the ``e``
component of ``h(d_a, d_b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import jet as J
from .immersion import W_REL_FLOOR, PrincipalDecomp, ShapeData, projector_derivatives
from .intrinsic import Curv4
from .spaceform import AmbientModel, spaceform_curvature_tensor


class RegularityError(ValueError):
    """The Obata operator is (numerically) singular at the point."""

    def __init__(self, message: str, w_min: float, w_max: float):
        self.w_min = w_min
        self.w_max = w_max
        super().__init__(message)


class ClusterAmbiguityError(ValueError):
    pass


@dataclass
class ObataData:
    W: J.Jet  # mixed (n, n)
    W_inv: J.Jet
    III: J.Jet  # lowered (n, n)
    w: np.ndarray  # eigenvalues, ascending
    U: np.ndarray  # g-orthonormal eigenvectors (columns)

    @property
    def V(self) -> np.ndarray:
        """III-orthonormal eigenvectors ``U_mu / sqrt(w_mu)`` (columns)."""
        return self.U / np.sqrt(self.w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def sigma(self, k: int) -> float:
        """k-th elementary symmetric polynomial of the eigenvalues."""
        return float(np.poly(self.w)[k] * (-1) ** k) if k <= self.n else 0.0

    @property
    def det(self) -> float:
        return float(np.prod(self.w))

    def inv_sqrt(self) -> np.ndarray:
        """Symmetric positive ``W^(-1/2)`` (self-adjoint for g)."""
        return self.U @ np.diag(self.w**-0.5) @ np.linalg.inv(self.U)


@dataclass
class ConnDiff:
    T: np.ndarray  # T[c, a, b] = component c of T(d_a, d_b)
    jet: J.Jet | None = None

    def as_form(self) -> np.ndarray:
        """``h[a, b, c]`` layout for Kulkarni-Nomizu products."""
        return self.T.transpose(1, 2, 0)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.T - self.T.transpose(0, 2, 1))))


@dataclass
class AuxTensors:
    P: np.ndarray  # op[a, b, e, c]
    L: np.ndarray  # op[a, b, e, c]
    J: np.ndarray  # J[j, a, b, e]
    W_inv_sqrt: np.ndarray
    N: np.ndarray  # N_X: N[a, e, c] = sum_j A_j (nabla_a A_j)

    def p_antisymmetry_defect(self) -> float:
        return float(np.max(np.abs(self.P + self.P.transpose(1, 0, 2, 3))))


def obata(shape: ShapeData, rel_floor: float = W_REL_FLOOR) -> ObataData:
    A = shape.A
    W = J.contract("jce,jeb->cb", A, A)
    g0 = shape.g.value
    III = J.contract("ce,eb->cb", shape.g.truncate(W.order), W)
    III0 = 0.5 * (III.value + III.value.T)
    w, U = scipy.linalg.eigh(III0, g0)
    w_max = float(max(abs(w[-1]), 0.0))
    if w[0] < rel_floor * w_max or w_max == 0.0:
        raise RegularityError(
            f"Obata operator is singular: smallest eigenvalue {w[0]:.3e} (largest {w_max:.3e})", float(w[0]), w_max
        )
    return ObataData(W, J.inv(W), III, w, U)


def obata_identity_terms(obata_data: ObataData, shape: ShapeData, ricci_I: np.ndarray, k: float) -> dict:
    n = shape.n
    ric_op = np.linalg.solve(shape.g.value, ricci_I)
    return {
        "W": obata_data.W.value,
        "k(n-1)Id": k * (n - 1) * np.eye(n),
        "A_H": shape.mean_curvature_operator(),
        "Ric_op": ric_op,
    }


def obata_identity_residual(obata_data: ObataData, shape: ShapeData, ricci_I, k: float) -> float:
    """Max-norm of ``W - k(n-1) Id - A_H + Ric_op``."""
    t = obata_identity_terms(obata_data, shape, np.asarray(ricci_I), k)
    return float(np.max(np.abs(t["W"] - t["k(n-1)Id"] - t["A_H"] + t["Ric_op"])))


def connection_difference(shape: ShapeData, obata_data: ObataData) -> ConnDiff:
    """``T(X, Y) = W^-1 sum_j A_j (nabla_X A_j) Y`` with first-derivative jets."""
    N = J.contract("jde,ajeb->dab", shape.A, shape.nabla_A)
    T = J.contract("cd,dab->cab", obata_data.W_inv, N)
    return ConnDiff(T.value, T)


def connection_difference_principal(decomp: PrincipalDecomp, shape: ShapeData, obata_data: ObataData) -> ConnDiff:
    """``T`` assembled from principal normals and cluster projectors.

    Diagonal blocks carry ``X(log |eta_j|) <Y_j, Z_j>``; off-diagonal blocks
    carry ``<eta_j - eta_k, eta_k> / |eta_k|^2 * <nabla_X Y_j, Z_k>``.
    """
    if decomp.ambiguous:
        raise ClusterAmbiguityError(f"principal normals separated by only {decomp.gap:.3e}")
    n = shape.n
    P, lam, dims = decomp.proj, decomp.lam, decomp.dims
    gamma = shape.gamma.value
    dW = np.einsum("cba->acb", obata_data.W.grad().value)  # d_a W^c_b
    dP = projector_derivatives(shape, decomp)
    T = np.zeros((n, n, n))  # T[a, c, b] while assembling
    for j in range(decomp.s):
        w_j = lam[j] @ lam[j]
        dlog = np.einsum("ce,aec->a", P[j], dW) / dims[j] / (2.0 * w_j)
        T += np.einsum("a,cb->acb", dlog, P[j])
        for k in range(decomp.s):
            if k == j:
                continue
            coef = (lam[j] - lam[k]) @ lam[k] / (lam[k] @ lam[k])
            cov = dP[:, k, j] + np.einsum("ce,eaf,fb->acb", P[k], gamma, P[j])
            T += coef * cov
    return ConnDiff(T.transpose(1, 0, 2))


def generalized_kn(h, k, inner) -> np.ndarray:
    """Kulkarni-Nomizu product of two vector-valued symmetric bilinear forms.

    ``h[a, b, e]`` is the ``e`` component of ``h(d_a, d_b)``; ``inner`` is
    the inner product on the value space.  Scalar forms may be passed as
    2-d arrays with ``inner`` a scalar or omitted.
    """
    h, k = np.asarray(h, dtype=float), np.asarray(k, dtype=float)
    if h.ndim == 2:
        h = h[..., None]
    if k.ndim == 2:
        k = k[..., None]
    inner = np.atleast_2d(np.asarray(1.0 if inner is None else inner, dtype=float))
    if h.shape != k.shape or h.shape[-1] != inner.shape[0] or h.shape[0] != h.shape[1]:
        raise ValueError(f"dimension mismatch: h {h.shape}, k {k.shape}, inner {inner.shape}")
    hk = np.einsum("ace,ef,bdf->abcd", h, inner, k)  # g(h(X1,X3), k(X2,X4))
    kh = np.einsum("bde,ef,acf->abcd", h, inner, k)  # g(h(X2,X4), k(X1,X3))
    return 0.5 * (hk - hk.transpose(0, 1, 3, 2) + kh - kh.transpose(0, 1, 3, 2))


def curvature_operator(riemann_I: Curv4) -> np.ndarray:
    """``R(d_a, d_b)`` as matrices ``op[a, b, e, c]``."""
    return riemann_I.raised().transpose(0, 1, 3, 2)


def build_aux_tensors(shape: ShapeData, obata_data: ObataData, riemann_I: Curv4, literal: bool = False) -> AuxTensors:
    """P, L, J_j and N_X at the base point.

    The curvature of the endomorphism field acts by commutator,
    ``R(X,Y).A = R(X,Y) A - A R(X,Y)``.  ``literal=True`` instead composes
    ``A R(X,Y) A`` plainly; it exists only for the sphere comparison.
    """
    A = shape.A.value
    nA = shape.nabla_A.value  # [a, j, c, b]
    R = curvature_operator(riemann_I)
    W_inv = obata_data.W_inv.value
    RA = np.einsum("abef,jfc->abjec", R, A)
    if literal:
        act = RA
    else:
        act = RA - np.einsum("jef,abfc->abjec", A, R)
    L = np.einsum("hg,jge,abjec->abhc", W_inv, A, act)
    bracket = np.einsum("ajef,bjfc->abec", nA, nA)
    bracket = bracket - bracket.transpose(1, 0, 2, 3)
    P = L + np.einsum("hg,abgc->abhc", W_inv, bracket)
    W_is = obata_data.inv_sqrt()
    Jj = np.einsum("ef,ajfb->jabe", W_is, nA)
    N = np.einsum("jde,ajeb->adb", A, nA)
    return AuxTensors(P, L, Jj, W_is, N)


def _lower(op: np.ndarray, metric: np.ndarray) -> np.ndarray:
    return np.einsum("abec,ed->abcd", op, metric)


def gauss_image_curvature(
    route: str,
    shape: ShapeData,
    obata_data: ObataData,
    conn: ConnDiff,
    aux: AuxTensors,
    riemann_I: Curv4,
) -> Curv4:
    """``III(R^III(X, Y) Z, V)`` by one of the routes ``theorem``, ``kn``, ``nablaT``."""
    III = obata_data.III.value
    R = curvature_operator(riemann_I)
    T_form = conn.as_form()
    if route == "theorem":
        S = _lower(R + aux.P, III) + generalized_kn(T_form, T_form, III)
    elif route == "kn":
        S = _lower(R + aux.L, III) + generalized_kn(T_form, T_form, III)
        for Jj in aux.J:
            S = S - generalized_kn(Jj, Jj, III)
    elif route == "nablaT":
        if conn.jet is None or conn.jet.order < 1:
            raise ValueError("the nablaT route needs T with first-derivative jets")
        S = _lower(R + _nabla_t_operator(conn, shape.gamma.value), III)
    else:
        raise ValueError(f"unknown curvature route {route!r}")
    return Curv4(S, III, "III")


def _nabla_t_operator(conn: ConnDiff, gamma: np.ndarray) -> np.ndarray:
    """``(nabla_X T)(Y, Z) - (nabla_Y T)(X, Z) + T(X, T(Y, Z)) - T(Y, T(X, Z))``."""
    T = conn.T
    dT = conn.jet.grad().value  # dT[c, a, b, e] = d_e T^c_ab
    nT = np.einsum("cabe->ecab", dT)
    nT += np.einsum("cef,fab->ecab", gamma, T)
    nT -= np.einsum("fea,cfb->ecab", gamma, T)
    nT -= np.einsum("feb,caf->ecab", gamma, T)
    # D[x, y, c, z]
    D = np.einsum("xcyz->xycz", nT) - np.einsum("ycxz->xycz", nT)
    TT = np.einsum("cxf,fyz->xycz", T, T)
    D += TT - TT.transpose(1, 0, 2, 3)
    return D


def gauss_image_scalar_formula(
    model: AmbientModel, shape: ShapeData, obata_data: ObataData, conn: ConnDiff, aux: AuxTensors
) -> dict:
    """Each term of the closed-form scalar curvature; ``total`` is their sum.

    Traces against III are taken literally: ``tr_III B = sum_nu <B V_nu, V_nu>``
    over the III-orthonormal eigenvectors ``V_nu``.
    """
    n = shape.n
    g = shape.g.value
    III = obata_data.III.value
    V = obata_data.V
    T = conn.T
    A_H = shape.mean_curvature_operator()
    sigma = obata_data.sigma(n - 1) / obata_data.det
    tr_AH = float(np.einsum("cu,cd,de,eu->", V, g, A_H, V))
    # T(V_mu, V_nu) components: TV[c, mu, nu]
    TV = np.einsum("cab,au,bv->cuv", T, V, V)
    norm_T = float(np.einsum("cuv,cd,duv->", TV, III, TV))
    tr_T = np.einsum("cuu->c", TV)
    norm_trT = float(tr_T @ III @ tr_T)
    # tr_c P(X, Y) = sum_a [P(d_a, X) Y]^a
    trc_P = np.einsum("abac->bc", aux.P)
    tr_trc_P = float(np.einsum("bc,bu,cu->", trc_P, V, V))
    terms = {
        "k(n-1)sigma": model.k * (n - 1) * sigma,
        "tr_III(A_H)": tr_AH,
        "-n": -float(n),
        "|T|^2": norm_T,
        "-|tr T|^2": -norm_trT,
        "tr_III tr_c P": tr_trc_P,
    }
    terms["total"] = sum(terms.values())
    return terms


def gauss_image_scalar(route: str, **inputs) -> float:
    """Scalar curvature of III by ``formula`` or by ``contraction`` of a Curv4."""
    if route == "formula":
        return gauss_image_scalar_formula(
            inputs["model"], inputs["shape"], inputs["obata"], inputs["conn"], inputs["aux"]
        )["total"]
    if route == "contraction":
        curv: Curv4 = inputs["curvature"]
        Minv = np.linalg.inv(curv.metric)
        return float(np.einsum("abcd,ad,bc->", curv.components, Minv, Minv))
    raise ValueError(f"unknown scalar route {route!r}")


def gauss_equation_terms(shape: ShapeData, riemann_I: Curv4, model: AmbientModel) -> dict:
    g = shape.g.value
    II = shape.II.value.transpose(1, 2, 0)  # [a, b, j]
    return {
        "Rbar": spaceform_curvature_tensor(model, g),
        "R": riemann_I.components,
        "KN(II,II)": generalized_kn(II, II, np.eye(shape.m)),
    }


def gauss_equation_residual(shape: ShapeData, riemann_I: Curv4, model: AmbientModel) -> float:
    t = gauss_equation_terms(shape, riemann_I, model)
    return float(np.max(np.abs(t["Rbar"] - t["R"] - t["KN(II,II)"])))
