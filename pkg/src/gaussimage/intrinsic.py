"""Coordinate Levi-Civita geometry of a metric given as jets.

This is the independent oracle: it only ever sees metric components and
their partial derivatives, never shape operators.

Conventions: ``R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``;
``R[d, c, a, b]`` is the ``d`` component of ``R(d_a, d_b) d_c``; the (0,4)
tensor is ``S[a, b, c, d] = metric(R(d_a, d_b) d_c, d_d)``, so the unit
2-sphere has ``S(X, Y, Y, X) = 1`` for orthonormal ``X, Y`` and scalar
curvature 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jet as J

METRIC_EIG_FLOOR = 1e-10


class SingularMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Curv4:
    """Dense (0,4) curvature-type tensor lowered with ``metric``."""

    components: np.ndarray
    metric: np.ndarray
    tag: str = "I"

    @property
    def n(self) -> int:
        return self.components.shape[0]

    def raised(self) -> np.ndarray:
        """(1,3) view ``op[a, b, c, e]``: the ``e`` component of ``R(d_a, d_b) d_c``."""
        return np.einsum("abcd,ed->abce", self.components, np.linalg.inv(self.metric))

    @classmethod
    def from_operator(cls, op: np.ndarray, metric: np.ndarray, tag: str) -> Curv4:
        """Lower an operator family ``op[a, b, e, c]`` (matrix of ``R(d_a, d_b)``)."""
        return cls(np.einsum("abec,ed->abcd", op, metric), np.asarray(metric), tag)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components))) if self.components.size else 0.0

    def symmetry_defects(self) -> dict[str, float]:
        """Absolute defects of the algebraic curvature identities."""
        s = self.components
        return {
            "antisym_12": float(np.max(np.abs(s + s.transpose(1, 0, 2, 3)))),
            "antisym_34": float(np.max(np.abs(s + s.transpose(0, 1, 3, 2)))),
            "pair": float(np.max(np.abs(s - s.transpose(2, 3, 0, 1)))),
            "bianchi": float(np.max(np.abs(s + s.transpose(1, 2, 0, 3) + s.transpose(2, 0, 1, 3)))),
        }


@dataclass(frozen=True)
class MetricField:
    """Maps a parameter point to the jets of the metric components there."""

    evaluate: Callable[[np.ndarray, int], J.Jet]
    n: int

    def at(self, u, order: int = 2) -> J.Jet:
        return self.evaluate(np.asarray(u, dtype=float), order)

    @classmethod
    def from_expressions(cls, entries: list[list[str]]) -> MetricField:
        """Metric whose components are DSL expressions (upper triangle mirrored)."""
        from .expr import eval_jet, parse_validated

        n = len(entries)
        asts = [[parse_validated(entries[min(a, b)][max(a, b)], n) for b in range(n)] for a in range(n)]

        def evaluate(u, order):
            return J.stack([J.stack([eval_jet(asts[a][b], u, order) for b in range(n)]) for a in range(n)])

        return cls(evaluate, n)


def _check_metric(g0: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(0.5 * (g0 + g0.T))
    if eig[0] < METRIC_EIG_FLOOR * max(1.0, eig[-1]):
        raise SingularMetricError(f"metric is singular or indefinite: least eigenvalue {eig[0]:.3e}")


def christoffel(metric: J.Jet) -> J.Jet:
    """``Gamma[c, a, b]`` of the Levi-Civita connection, one order below ``metric``."""
    if metric.order < 1:
        raise ValueError("Christoffel symbols need metric jets of order >= 1")
    _check_metric(metric.value)
    dg = metric.grad()  # dg[a, b, e] = d_e g_ab
    ginv = J.inv(metric.truncate(metric.order - 1))
    # lowered: L[d, a, b] = (d_a g_db + d_b g_da - d_d g_ab) / 2
    lowered = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    return J.contract("cd,dab->cab", ginv, lowered)


def riemann_from_christoffel(gamma: J.Jet) -> np.ndarray:
    """``R[d, c, a, b]`` at the base point from Christoffel jets of order >= 1."""
    dgam = gamma.grad()  # dgam[d, b, c, a] = d_a Gamma^d_bc
    g0 = gamma.value
    d_a_gamma_bc = np.einsum("dbca->dcab", dgam.value)  # d_a Gamma^d_{bc}
    r = d_a_gamma_bc - d_a_gamma_bc.transpose(0, 1, 3, 2)
    r += np.einsum("dae,ebc->dcab", g0, g0) - np.einsum("dbe,eac->dcab", g0, g0)
    return r


def riemann(metric: J.Jet, tag: str = "I") -> Curv4:
    if metric.order < 2:
        raise ValueError("curvature needs metric jets of order >= 2")
    r = riemann_from_christoffel(christoffel(metric))
    g0 = metric.value
    # S[a,b,c,d] = g_de R^e_{cab}
    return Curv4(np.einsum("ecab,ed->abcd", r, g0), g0, tag)


def ricci_scalar(curv: Curv4) -> tuple[np.ndarray, float]:
    """``Ric(X, Y) = tr(V -> R(V, X) Y)`` and its metric trace."""
    op = curv.raised()  # op[a, b, c, e]
    ric = np.einsum("abca->bc", op)
    scalar = float(np.einsum("bc,bc->", np.linalg.inv(curv.metric), ric))
    return ric, scalar
