"""Space forms of curvature k realized in a flat chart.

Euclidean space is its own chart.  The sphere of curvature ``k > 0`` is
the quadric ``<x, x> = 1/k`` in Euclidean ``R^(d+1)``; hyperbolic space of
curvature ``k < 0`` is the upper sheet of ``<x, x> = 1/k`` in Minkowski
space with signature ``(-, +, ..., +)``.  In every case the ambient
covariant derivative is the flat derivative followed by projection onto
the quadric's tangent space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jet as J

ON_MODEL_TOL = 1e-9

KINDS = ("euclidean", "sphere", "hyperbolic")


class OffModelError(ValueError):
    pass


@dataclass(frozen=True)
class AmbientModel:
    kind: str
    k: float
    dim: int  # dimension d = n + m of the space form

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ambient kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ValueError("space form dimension must be positive")
        if self.kind == "euclidean" and self.k != 0:
            raise ValueError("euclidean ambient requires k = 0")
        if self.kind == "sphere" and not self.k > 0:
            raise ValueError("sphere ambient requires k > 0")
        if self.kind == "hyperbolic" and not self.k < 0:
            raise ValueError("hyperbolic ambient requires k < 0")

    @property
    def is_quadric(self) -> bool:
        return self.kind != "euclidean"

    @property
    def chart_dim(self) -> int:
        return self.dim + (1 if self.is_quadric else 0)

    @property
    def signature(self) -> np.ndarray:
        sig = np.ones(self.chart_dim)
        if self.kind == "hyperbolic":
            sig[0] = -1.0
        return sig

    @classmethod
    def euclidean(cls, dim: int) -> AmbientModel:
        return cls("euclidean", 0.0, dim)

    @classmethod
    def sphere(cls, dim: int, k: float = 1.0) -> AmbientModel:
        return cls("sphere", float(k), dim)

    @classmethod
    def hyperbolic(cls, dim: int, k: float = -1.0) -> AmbientModel:
        return cls("hyperbolic", float(k), dim)


def _check_dim(model: AmbientModel, v, what: str = "vector") -> None:
    shape = v.shape if isinstance(v, J.Jet) else np.shape(v)
    if not shape or shape[-1] != model.chart_dim:
        raise ValueError(f"{what} has dimension {shape[-1] if shape else 0}, chart dimension is {model.chart_dim}")


def ambient_inner(model: AmbientModel, v, w):
    """Signature-weighted dot product over the last axis; jets allowed."""
    _check_dim(model, v)
    _check_dim(model, w)
    sig = model.signature
    if isinstance(v, J.Jet) or isinstance(w, J.Jet):
        vs = v * sig if isinstance(v, J.Jet) else np.asarray(v) * sig
        lead = "abcdefg"[: (v.ndim if isinstance(v, J.Jet) else np.ndim(v)) - 1]
        lead_w = "hijklmn"[: (w.ndim if isinstance(w, J.Jet) else np.ndim(w)) - 1]
        return J.contract(f"{lead}z,{lead_w}z->{lead}{lead_w}", vs, w)
    return np.einsum("...i,...i->...", np.asarray(v) * sig, w)


def constraint_residual(model: AmbientModel, x) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(model, x, "point")
    if not model.is_quadric:
        return 0.0
    return float(abs(ambient_inner(model, x, x) - 1.0 / model.k))


def check_on_model(model: AmbientModel, x, tol: float = ON_MODEL_TOL) -> None:
    r = constraint_residual(model, x)
    if r > tol:
        raise OffModelError(f"point is off the {model.kind} model: residual {r:.3e} > {tol:.1e}")
    if model.kind == "hyperbolic" and np.asarray(x)[0] <= 0:
        raise OffModelError("point lies on the lower sheet of the hyperboloid")


def tangent_project(model: AmbientModel, x, v, tol: float = ON_MODEL_TOL) -> np.ndarray:
    """Remove the radial component of ``v`` at ``x`` (identity for euclidean)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dim(model, x, "point")
    _check_dim(model, v)
    if not model.is_quadric:
        return v.copy()
    check_on_model(model, x, tol)
    return v - (ambient_inner(model, v, x) / ambient_inner(model, x, x)) * x


def spaceform_curvature(model: AmbientModel, inner, X, Y, Z) -> np.ndarray:
    """``k (<Y,Z> X - <X,Z> Y)`` for coordinate vectors under metric ``inner``."""
    inner = np.asarray(inner, dtype=float)
    X, Y, Z = (np.asarray(a, dtype=float) for a in (X, Y, Z))
    return model.k * ((Y @ inner @ Z) * X - (X @ inner @ Z) * Y)


def spaceform_curvature_tensor(model: AmbientModel, inner) -> np.ndarray:
    """(0,4) components ``<Rbar(d_a, d_b) d_c, d_d>``."""
    g = np.asarray(inner, dtype=float)
    return model.k * (np.einsum("bc,ad->abcd", g, g) - np.einsum("ac,bd->abcd", g, g))
