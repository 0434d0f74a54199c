"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` carries every partial derivative ``d^alpha f(u0)`` with
``|alpha| <= order`` of a (possibly array-valued) function of ``n``
variables.  Coefficients are raw derivatives, not divided by ``alpha!``;
the factorials only appear inside the product weights and the
univariate composition kernel.

The coefficient axis is always the last axis of ``Jet.coeffs``; every
leading axis is an ordinary array axis, so a 3x3 matrix of functions is
one ``Jet`` with ``coeffs.shape == (3, 3, M)``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 4


class DomainError(ArithmeticError):
    """A function was evaluated outside its domain at the base point."""


@dataclass(frozen=True)
class _Tables:
    n: int
    order: int
    index: tuple  # multi-indices in graded order
    pos: dict
    left: np.ndarray  # product pairs: coefficient positions of factors
    right: np.ndarray
    accum: np.ndarray  # (pairs, M) Leibniz weights scattered to outputs
    shift: tuple  # shift[i][k] = pos(index[k] + e_i) for |index[k]| < order
    fact: np.ndarray  # alpha! per multi-index


def _multi_indices(n: int, degree: int):
    """Multi-indices of total ``degree`` in descending lexicographic order."""
    if n == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _multi_indices(n - 1, degree - first):
            yield (first,) + rest


@functools.lru_cache(maxsize=None)
def tables(n: int, order: int) -> _Tables:
    if n < 1:
        raise ValueError("a jet needs at least one variable")
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
    index = tuple(a for d in range(order + 1) for a in _multi_indices(n, d))
    pos = {a: i for i, a in enumerate(index)}
    left, right, out, weight = [], [], [], []
    for k, gamma in enumerate(index):
        for alpha in itertools.product(*(range(g + 1) for g in gamma)):
            beta = tuple(g - a for g, a in zip(gamma, alpha))
            left.append(pos[alpha])
            right.append(pos[beta])
            out.append(k)
            weight.append(math.prod(math.comb(g, a) for g, a in zip(gamma, alpha)))
    accum = np.zeros((len(out), len(index)))
    accum[np.arange(len(out)), out] = weight
    shift = []
    lower = [a for a in index if sum(a) < order]
    for i in range(n):
        e = tuple(int(j == i) for j in range(n))
        shift.append(np.array([pos[tuple(x + y for x, y in zip(a, e))] for a in lower], dtype=int))
    fact = np.array([math.prod(math.factorial(x) for x in a) for a in index], dtype=float)
    return _Tables(n, order, index, pos, np.array(left), np.array(right), accum, tuple(shift), fact)


def n_coeffs(n: int, order: int) -> int:
    return math.comb(n + order, order)


class Jet:
    """Array of truncated Taylor expansions sharing one base point."""

    __slots__ = ("coeffs", "n", "order")
    __array_priority__ = 100

    def __init__(self, coeffs, n: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != n_coeffs(n, order):
            raise ValueError(
                f"coefficient axis has length {coeffs.shape[-1]}, "
                f"expected {n_coeffs(n, order)} for n={n}, order={order}"
            )
        self.coeffs = coeffs
        self.n = n
        self.order = order

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, n: int, order: int) -> Jet:
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (n_coeffs(n, order),))
        c[..., 0] = value
        return cls(c, n, order)

    @classmethod
    def variable(cls, i: int, base, order: int) -> Jet:
        """The coordinate function ``u_i`` (0-based ``i``) expanded at ``base``."""
        base = np.atleast_1d(np.asarray(base, dtype=float))
        n = base.shape[-1]
        c = np.zeros(n_coeffs(n, order))
        c[0] = base[i]
        if order >= 1:
            c[tables(n, order).pos[tuple(int(j == i) for j in range(n))]] = 1.0
        return cls(c, n, order)

    @classmethod
    def zeros(cls, shape, n: int, order: int) -> Jet:
        return cls(np.zeros(tuple(shape) + (n_coeffs(n, order),)), n, order)

    # -- basic accessors ---------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def derivative(self, alpha) -> np.ndarray:
        """Raw partial derivative ``d^alpha`` at the base point."""
        return self.coeffs[..., tables(self.n, self.order).pos[tuple(alpha)]]

    def gradient(self) -> np.ndarray:
        """First derivatives, shape ``self.shape + (n,)``."""
        t = tables(self.n, self.order)
        idx = [t.pos[tuple(int(j == i) for j in range(self.n))] for i in range(self.n)]
        return self.coeffs[..., idx]

    def __repr__(self) -> str:
        return f"Jet(n={self.n}, order={self.order}, shape={self.shape})"

    def __len__(self) -> int:
        return self.shape[0]

    def __getitem__(self, key) -> Jet:
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Ellipsis indexing is not supported on jets")
        return Jet(self.coeffs[key + (Ellipsis,)], self.n, self.order)

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., : n_coeffs(self.n, order)], self.n, order)

    def diff(self, i: int) -> Jet:
        """Partial derivative along variable ``i`` (0-based); order drops by one."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        t = tables(self.n, self.order)
        return Jet(self.coeffs[..., t.shift[i]], self.n, self.order - 1)

    def grad(self) -> Jet:
        """All first partials as a jet with a new trailing array axis of length n."""
        parts = [self.diff(i).coeffs for i in range(self.n)]
        return Jet(np.stack(parts, axis=-2), self.n, self.order - 1)

    def reshape(self, *shape) -> Jet:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.n, self.order)

    def transpose(self, *axes) -> Jet:
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], tuple):
            axes = axes[0]
        return Jet(self.coeffs.transpose(tuple(axes) + (self.ndim,)), self.n, self.order)

    @property
    def T(self) -> Jet:
        return self.transpose()

    def swapaxes(self, a: int, b: int) -> Jet:
        return Jet(np.swapaxes(self.coeffs, a % self.ndim, b % self.ndim), self.n, self.order)

    def sum(self, axis=None) -> Jet:
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (axis % self.ndim,)
        else:
            axis = tuple(a % self.ndim for a in axis)
        return Jet(self.coeffs.sum(axis=axis), self.n, self.order)

    def taylor(self) -> np.ndarray:
        """Taylor coefficients ``d^alpha f / alpha!``."""
        return self.coeffs / tables(self.n, self.order).fact

    def __call__(self, du) -> np.ndarray:
        """Evaluate the truncated Taylor polynomial at displacement ``du``."""
        du = np.asarray(du, dtype=float)
        mono = np.array([np.prod(du ** np.array(a)) for a in tables(self.n, self.order).index])
        return self.taylor() @ mono

    # -- arithmetic ----------------------------------------------------
    def _coerce(self, other):
        """Return (self_coeffs, other_coeffs_or_array, n, order, other_is_jet)."""
        if isinstance(other, Jet):
            if other.n != self.n:
                raise ValueError(f"jets over different variable counts: {self.n} vs {other.n}")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order), order, True
        return self, np.asarray(other, dtype=float), self.order, False

    def __add__(self, other) -> Jet:
        a, b, order, is_jet = self._coerce(other)
        if is_jet:
            return Jet(a.coeffs + b.coeffs, self.n, order)
        c = np.array(np.broadcast_to(a.coeffs, np.broadcast_shapes(a.coeffs.shape, b.shape + (1,))))
        c[..., 0] += b
        return Jet(c, self.n, order)

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(-self.coeffs, self.n, self.order)

    def __sub__(self, other) -> Jet:
        return self + (-other)

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __mul__(self, other) -> Jet:
        a, b, order, is_jet = self._coerce(other)
        if is_jet:
            return Jet(_mul(a.coeffs, b.coeffs, self.n, order), self.n, order)
        return Jet(a.coeffs * b[..., None], self.n, order)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> Jet:
        return reciprocal(self) * other

    def __pow__(self, p) -> Jet:
        return power(self, p)

    def __matmul__(self, other) -> Jet:
        return matmul(self, other)

    def __rmatmul__(self, other) -> Jet:
        return matmul(other, self)


def _mul(a: np.ndarray, b: np.ndarray, n: int, order: int) -> np.ndarray:
    t = tables(n, order)
    return (a[..., t.left] * b[..., t.right]) @ t.accum


def stack(jets, axis: int = 0) -> Jet:
    jets = list(jets)
    order = min(j.order for j in jets)
    n = jets[0].n
    ndim = jets[0].ndim + 1
    coeffs = np.stack([j.truncate(order).coeffs for j in jets], axis=axis % ndim)
    return Jet(coeffs, n, order)


def as_jet(x, n: int, order: int) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet.constant(x, n, order)


def contract(subscripts: str, a, b) -> Jet | np.ndarray:
    """``np.einsum`` for two operands, either of which may be a jet."""
    a_jet, b_jet = isinstance(a, Jet), isinstance(b, Jet)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if not (a_jet or b_jet):
        return np.einsum(subscripts, a, b)
    if a_jet and b_jet:
        if a.n != b.n:
            raise ValueError("jets over different variable counts")
        order = min(a.order, b.order)
        t = tables(a.n, order)
        ga = a.truncate(order).coeffs[..., t.left]
        gb = b.truncate(order).coeffs[..., t.right]
        prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", ga, gb, optimize=True)
        return Jet(prod @ t.accum, a.n, order)
    if a_jet:
        return Jet(np.einsum(f"{sa}Z,{sb}->{out}Z", a.coeffs, np.asarray(b, dtype=float)), a.n, a.order)
    return Jet(np.einsum(f"{sa},{sb}Z->{out}Z", np.asarray(a, dtype=float), b.coeffs), b.n, b.order)


def matmul(a, b) -> Jet:
    """Matrix product over the last two array axes (1-d operands act as vectors)."""
    letters = "abcdefgh"
    ad = a.ndim if isinstance(a, Jet) else np.ndim(a)
    bd = b.ndim if isinstance(b, Jet) else np.ndim(b)
    if ad == 1 and bd == 1:
        return contract("i,i->", a, b)
    if ad == 1:
        return contract("i,ij->j", a, b)
    if bd == 1:
        lead = letters[: ad - 2]
        return contract(f"{lead}ij,j->{lead}i", a, b)
    if ad != bd:
        raise ValueError("matmul on jets requires operands with equal rank")
    lead = letters[: ad - 2]
    return contract(f"{lead}ij,{lead}jk->{lead}ik", a, b)


# -- univariate composition -------------------------------------------

def compose(f: Jet, derivs) -> Jet:
    """Apply a scalar function elementwise given its derivatives at ``f.value``.

    ``derivs[k]`` is the k-th derivative of the outer function evaluated at
    the base values, shaped like ``f.shape``; ``len(derivs) >= f.order + 1``.
    """
    order, n = f.order, f.n
    h = f.coeffs.copy()
    h[..., 0] = 0.0
    out = np.zeros_like(f.coeffs)
    out[..., 0] = derivs[0]
    hk = None
    for k in range(1, order + 1):
        hk = h if hk is None else _mul(hk, h, n, order)
        out += (np.asarray(derivs[k]) / math.factorial(k))[..., None] * hk
    return Jet(out, n, order)


def _falling(p: float, k: int) -> float:
    return math.prod(p - i for i in range(k))


def _check(mask, what: str):
    if np.any(mask):
        raise DomainError(what)


def power_derivs(a: np.ndarray, p: float, order: int):
    return [_falling(p, k) * a ** (p - k) for k in range(order + 1)]


def reciprocal(f: Jet) -> Jet:
    a = f.value
    _check(a == 0.0, "division by zero at the base point")
    return compose(f, [(-1.0) ** k * math.factorial(k) / a ** (k + 1) for k in range(f.order + 1)])


def power(f: Jet, p) -> Jet:
    """``f**p``: repeated multiplication for integers, ``exp(p log f)`` otherwise."""
    if isinstance(p, Jet):
        raise TypeError("jet exponents are not supported")
    p = float(p)
    if p.is_integer() and abs(p) <= 64:
        k = int(abs(p))
        result = Jet.constant(np.ones(f.shape), f.n, f.order)
        base = f
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return reciprocal(result) if p < 0 else result
    return exp(log(f) * p)


def sqrt(f: Jet) -> Jet:
    a = f.value
    _check(a < 0.0, "sqrt of a negative number")
    _check((a == 0.0) & (f.order > 0), "sqrt is not differentiable at zero")
    return compose(f, power_derivs(a, 0.5, f.order))


def exp(f: Jet) -> Jet:
    e = np.exp(f.value)
    return compose(f, [e] * (f.order + 1))


def log(f: Jet) -> Jet:
    a = f.value
    _check(a <= 0.0, "log of a nonpositive number")
    d = [np.log(a)] + [(-1.0) ** (k - 1) * math.factorial(k - 1) / a**k for k in range(1, f.order + 1)]
    return compose(f, d)


def sin(f: Jet) -> Jet:
    s, c = np.sin(f.value), np.cos(f.value)
    cycle = [s, c, -s, -c]
    return compose(f, [cycle[k % 4] for k in range(f.order + 1)])


def cos(f: Jet) -> Jet:
    s, c = np.sin(f.value), np.cos(f.value)
    cycle = [c, -s, -c, s]
    return compose(f, [cycle[k % 4] for k in range(f.order + 1)])


def sinh(f: Jet) -> Jet:
    s, c = np.sinh(f.value), np.cosh(f.value)
    return compose(f, [s if k % 2 == 0 else c for k in range(f.order + 1)])


def cosh(f: Jet) -> Jet:
    s, c = np.sinh(f.value), np.cosh(f.value)
    return compose(f, [c if k % 2 == 0 else s for k in range(f.order + 1)])


def _poly_chain(t: np.ndarray, dpoly: np.polynomial.Polynomial, order: int):
    """Derivatives of g(a) when g' = dpoly(g); returns g^(k) for k = 1..order."""
    out, p = [], dpoly
    for _ in range(order):
        out.append(p(t))
        p = p.deriv() * dpoly
    return out


def tan(f: Jet) -> Jet:
    a = f.value
    _check(np.isclose(np.cos(a), 0.0, atol=1e-300), "tan at a pole")
    t = np.tan(a)
    return compose(f, [t] + _poly_chain(t, np.polynomial.Polynomial([1.0, 0.0, 1.0]), f.order))


def tanh(f: Jet) -> Jet:
    t = np.tanh(f.value)
    return compose(f, [t] + _poly_chain(t, np.polynomial.Polynomial([1.0, 0.0, -1.0]), f.order))


def atan(f: Jet) -> Jet:
    a = np.asarray(f.value)
    d = [np.arctan(a)]
    if f.order:
        # derivatives of 1/(1+t^2) from a univariate jet in t
        flat = a.reshape(-1)
        c = np.zeros((flat.size, f.order))
        c[:, 0] = flat
        if f.order > 1:
            c[:, 1] = 1.0
        t = Jet(c, 1, f.order - 1)
        q = reciprocal(t * t + 1.0)
        d += [q.coeffs[:, k].reshape(a.shape) for k in range(f.order)]
    return compose(f, d)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "sinh": sinh,
    "cosh": cosh,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "atan": atan,
}


# -- linear algebra on jet matrices --------------------------------------

def inv(a: Jet) -> Jet:
    """Inverse of a jet matrix by the terminating Neumann series around its value."""
    a0 = a.value
    a0inv = np.linalg.inv(a0)
    h = a - a0
    step = -matmul(a0inv, h)
    eye = np.broadcast_to(np.eye(a0.shape[-1]), a0.shape)
    total = Jet.constant(eye, a.n, a.order)
    term = total
    for _ in range(a.order):
        term = matmul(step, term)
        total = total + term
    return matmul(total, a0inv)


def trace(a: Jet) -> Jet:
    return Jet(np.trace(a.coeffs, axis1=-3, axis2=-2), a.n, a.order)


def eye(dim: int, n: int, order: int) -> Jet:
    return Jet.constant(np.eye(dim), n, order)
