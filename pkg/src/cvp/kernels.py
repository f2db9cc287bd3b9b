"""Lagrangian kernels with closed-form second-variation data.

Every kernel is an immutable :class:`KernelSpec`.  The vectorised methods
(``value``, ``block``, ``bound``) accept coordinate arrays of shape
``(..., m)`` and broadcast, which is what assembly uses.  The module-level
functions (:func:`eval_lagrangian`, :func:`second_variation_block`,
:func:`curvature_norm_bound`) are the single-pair front end.

Jet fibers are ordered ``[a_x, u_x, a_y, u_y]`` for ``fiber_dim == 2`` and
``[a_x, a_y]`` for scalar jets, so that
``[U(x); U(y)]^T B(x, y) [V(x); V(y)]`` is the mixed jet derivative of ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

INV_SQRT_PI = 1.0 / math.sqrt(math.pi)

#: Ratio between the surrogate norm and the Euclidean pair norm, at most.
SURROGATE_FACTOR = 2.0

#: Distance at which a unit Gaussian profile has decayed by e^{-6.25}.
GAUSS_WIDTH = 2.5

_SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class Point:
    """A point of the ambient space, given in a single chart."""

    coords: tuple
    chart_id: int = 0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coords, dtype=float)))
        if not c:
            raise ValueError("a point needs at least one coordinate")
        if not all(math.isfinite(v) for v in c):
            raise ValueError(f"non-finite coordinates {c}")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return len(self.coords)


def signed_difference(x, y, period=None):
    """``x - y``, wrapped into ``[-T/2, T/2]`` when a period is given.

    The wrapped value is computed from ``|x - y|`` so that swapping the
    arguments flips the sign exactly.
    """
    raw = np.subtract(x, y)
    if period is None:
        return raw
    a = np.mod(np.abs(raw), period)
    a = np.where(a > 0.5 * period, period - a, a)
    return np.where(raw < 0, -a, a)


@dataclass(frozen=True)
class KernelSpec:
    """A Lagrangian kernel ``L`` together with its parameter ``s``.

    Parameters
    ----------
    name
        Family identifier.
    ambient_dim
        Dimension ``m`` of the ambient space.
    fiber_dim
        1 for scalar jets, 2 for scalar plus one vector direction.
    params
        Named real parameters, frozen after construction.
    s
        The positive constant subtracted in ``ell``.
    support
        ``"line"`` (all of the ambient line) or ``"axis"`` (the first
        coordinate axis of the plane).
    width
        Distance over which the kernel profile decays by ``e^{-6.25}``.
    translation_invariant
        Whether ``L`` depends on the line difference only.
    """

    name: str
    ambient_dim: int
    fiber_dim: int
    params: Mapping[str, float]
    s: float
    support: str
    width: float
    translation_invariant: bool = False

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"s must be positive, got {self.s}")
        if self.fiber_dim not in (1, 2):
            raise ValueError(f"fiber_dim must be 1 or 2, got {self.fiber_dim}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    # -- family interface -------------------------------------------------

    def value(self, X, Y, period=None):
        raise NotImplementedError

    def block(self, X, Y, period=None):
        raise NotImplementedError

    def bound(self, X, Y, period=None):
        """Closed-form curvature norm, or ``None`` if the family has none."""
        return None

    def symbol(self, p):
        raise NotImplementedError(f"{self.name} has no Fourier symbol")

    def density(self, x):
        """Density of the minimising measure against ``dx``; ``None`` if 1."""
        return None

    def reach(self, x):
        """Interval of line coordinates carrying the mass of ``L(x, .) dmu``."""
        x = np.asarray(x, dtype=float)
        return x - 2 * self.width, x + 2 * self.width

    @property
    def vector_direction(self):
        """Ambient direction moved by the vector jet component."""
        if self.fiber_dim == 1:
            return None
        e = np.zeros(self.ambient_dim)
        e[-1] = 1.0
        return e

    # -- helpers ----------------------------------------------------------

    def check_support(self, X):
        X = np.asarray(X, dtype=float)
        if self.support == "axis" and np.any(np.abs(X[..., 1:]) > _SUPPORT_TOL):
            raise ValueError(f"{self.name}: second variation is defined on the axis only")

    def _check_period(self, period):
        if period is not None and not self.translation_invariant:
            raise ValueError(f"{self.name} is not translation invariant; no periodic grid")


def _line_r(X, Y, period):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return signed_difference(X[..., 0], Y[..., 0], period)


def _fill(L, pattern):
    """``L[..., None, None] * pattern`` with a constant pattern."""
    return L[..., None, None] * np.asarray(pattern, dtype=float)


class Gauss1D(KernelSpec):
    """Unit Gaussian on the line, optionally with a tangential vector fiber."""

    def value(self, X, Y, period=None):
        r = _line_r(X, Y, period)
        return INV_SQRT_PI * np.exp(-r * r)

    def block(self, X, Y, period=None):
        r = _line_r(X, Y, period)
        L = INV_SQRT_PI * np.exp(-r * r)
        if self.fiber_dim == 1:
            return _fill(L, np.ones((2, 2)))
        B = np.empty(L.shape + (4, 4))
        d1 = -2.0 * r * L
        d2 = 2.0 * r * L
        d11 = (4.0 * r * r - 2.0) * L
        d12 = -d11
        for i in (0, 2):
            for j in (0, 2):
                B[..., i, j] = L
            B[..., i, 1] = B[..., 1, i] = d1
            B[..., i, 3] = B[..., 3, i] = d2
        B[..., 1, 1] = d11
        B[..., 3, 3] = d11
        B[..., 1, 3] = B[..., 3, 1] = d12
        return B

    def bound(self, X, Y, period=None):
        if self.fiber_dim == 1:
            return self.value(X, Y, period)
        return None

    def symbol(self, p):
        p = np.asarray(p, dtype=float)
        return np.exp(-0.25 * p * p)

    @property
    def vector_direction(self):
        return None if self.fiber_dim == 1 else np.ones(1)


class Exp1D(KernelSpec):
    """``exp(-|x - y|)`` on the line."""

    def value(self, X, Y, period=None):
        return np.exp(-np.abs(_line_r(X, Y, period)))

    def block(self, X, Y, period=None):
        return _fill(self.value(X, Y, period), np.ones((2, 2)))

    def bound(self, X, Y, period=None):
        return self.value(X, Y, period)

    def symbol(self, p):
        p = np.asarray(p, dtype=float)
        return 2.0 / (1.0 + p * p)


_HYPER_PATTERN = np.array(
    [[1.0, 0.0, 1.0, 0.0],
     [0.0, 2.0, 0.0, 0.0],
     [1.0, 0.0, 1.0, 0.0],
     [0.0, 0.0, 0.0, 2.0]]
)


class Hyperplane2D(KernelSpec):
    """Gaussian along the axis times ``(1 + y^2)(1 + y'^2)``."""

    def value(self, X, Y, period=None):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        r = _line_r(X, Y, period)
        f = (1.0 + X[..., 1] ** 2) * (1.0 + Y[..., 1] ** 2)
        return INV_SQRT_PI * np.exp(-r * r) * f

    def block(self, X, Y, period=None):
        self.check_support(X)
        self.check_support(Y)
        r = _line_r(X, Y, period)
        return _fill(INV_SQRT_PI * np.exp(-r * r), _HYPER_PATTERN)

    def bound(self, X, Y, period=None):
        r = _line_r(X, Y, period)
        return 2.0 * INV_SQRT_PI * np.exp(-r * r)


class NontrivialWeight2D(KernelSpec):
    """Gaussian along the axis times ``e^{2yy'}(1 + x^2y^2)(1 + x'^2y'^2)``."""

    def value(self, X, Y, period=None):
        self._check_period(period)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        r = X[..., 0] - Y[..., 0]
        f = (1.0 + (X[..., 0] * X[..., 1]) ** 2) * (1.0 + (Y[..., 0] * Y[..., 1]) ** 2)
        return INV_SQRT_PI * np.exp(-r * r) * (np.exp(2.0 * X[..., 1] * Y[..., 1]) * f)

    def block(self, X, Y, period=None):
        self._check_period(period)
        self.check_support(X)
        self.check_support(Y)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x, xp = np.broadcast_arrays(X[..., 0], Y[..., 0])
        K = INV_SQRT_PI * np.exp(-(x - xp) ** 2)
        B = np.zeros(K.shape + (4, 4))
        for i in (0, 2):
            for j in (0, 2):
                B[..., i, j] = K
        # the e^{2yy'} factor couples the two normal directions
        B[..., 1, 1] = 2.0 * x * x * K
        B[..., 3, 3] = 2.0 * xp * xp * K
        B[..., 1, 3] = B[..., 3, 1] = 2.0 * K
        return B

    def bound(self, X, Y, period=None):
        self._check_period(period)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x, xp = X[..., 0], Y[..., 0]
        K = INV_SQRT_PI * np.exp(-(x - xp) ** 2)
        return 2.0 * np.maximum(np.maximum(x * x, xp * xp), 1.0) * K


class Inhomogeneous1D(KernelSpec):
    """``exp(alpha x^2 - (x - y)^2 + alpha y^2)`` minimised by ``c e^{beta x^2} dx``."""

    @property
    def alpha(self):
        return self.params["alpha"]

    def value(self, X, Y, period=None):
        self._check_period(period)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x, y = X[..., 0], Y[..., 0]
        return np.exp(self.alpha * (x * x + y * y) - (x - y) ** 2)

    def block(self, X, Y, period=None):
        return _fill(self.value(X, Y, period), np.ones((2, 2)))

    def bound(self, X, Y, period=None):
        return self.value(X, Y, period)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return self.params["c"] * np.exp(self.params["beta"] * x * x)

    def reach(self, x):
        # L(x, y) h(y) is a Gaussian in y centred at (1 - alpha) x with
        # variance (1 - alpha) / 2
        x = np.asarray(x, dtype=float)
        q = 1.0 - self.alpha
        half = 2 * self.width * math.sqrt(q)
        return q * x - half, q * x + half


def inhomogeneous_constants(alpha: float) -> tuple[float, float]:
    """Return ``(beta, c)`` for the non-homogeneous family."""
    alpha = float(alpha)
    if not alpha < 1:
        raise ValueError(f"alpha must be < 1, got {alpha}")
    beta = -alpha * (2.0 - alpha) / (1.0 - alpha)
    c = math.sqrt((1.0 - alpha - beta) / math.pi)
    return beta, c


_FAMILIES = {
    "gauss1d": dict(cls=Gauss1D, m=1, support="line", s=1.0, width=GAUSS_WIDTH, ti=True),
    "exp1d": dict(cls=Exp1D, m=1, support="line", s=2.0, width=6.25, ti=True),
    "hyperplane2d": dict(cls=Hyperplane2D, m=2, support="axis", s=1.0, width=GAUSS_WIDTH, ti=True),
    "nontrivial_weight2d": dict(cls=NontrivialWeight2D, m=2, support="axis", s=1.0,
                                width=GAUSS_WIDTH, ti=False),
    "inhomogeneous1d": dict(cls=Inhomogeneous1D, m=1, support="line", s=1.0,
                            width=GAUSS_WIDTH, ti=False),
}

KERNEL_NAMES = tuple(_FAMILIES)


def builtin_kernel(name: str, params: Mapping[str, float] | None = None) -> KernelSpec:
    """Construct one of the built-in kernels.

    Recognised parameters: ``s`` (any family), ``fiber_dim`` (``gauss1d``
    only, 1 or 2) and ``alpha`` (``inhomogeneous1d``, default 0.5).

    Examples
    --------
    >>> builtin_kernel("inhomogeneous1d", {"alpha": 0.5}).params["beta"]
    -1.5
    """
    if name not in _FAMILIES:
        raise ValueError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
    fam = _FAMILIES[name]
    params = dict(params or {})
    allowed = {"s"}
    fiber_dim = 2 if fam["m"] == 2 else 1
    if name == "gauss1d":
        allowed.add("fiber_dim")
        fiber_dim = int(params.pop("fiber_dim", 1))
        if fiber_dim not in (1, 2):
            raise ValueError(f"gauss1d fiber_dim must be 1 or 2, got {fiber_dim}")
    derived = {}
    if name == "inhomogeneous1d":
        allowed |= {"alpha", "beta", "c"}
        alpha = float(params.pop("alpha", 0.5))
        beta, c = inhomogeneous_constants(alpha)
        # derived values are recomputed, never trusted from input
        params.pop("beta", None)
        params.pop("c", None)
        derived = {"alpha": alpha, "beta": beta, "c": c}
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    s = float(params.pop("s", fam["s"]))
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    stored = dict(derived)
    if name == "gauss1d":
        stored["fiber_dim"] = fiber_dim
    return fam["cls"](
        name=name,
        ambient_dim=fam["m"],
        fiber_dim=fiber_dim,
        params=stored,
        s=s,
        support=fam["support"],
        width=fam["width"],
        translation_invariant=fam["ti"],
    )


def _coords(k: KernelSpec, x) -> np.ndarray:
    c = np.asarray(x.coords if isinstance(x, Point) else x, dtype=float).reshape(-1)
    if c.size != k.ambient_dim:
        raise ValueError(f"{k.name} expects {k.ambient_dim} coordinate(s), got {c.size}")
    if not np.all(np.isfinite(c)):
        raise ValueError("non-finite coordinates")
    return c


def eval_lagrangian(k: KernelSpec, x, y, period=None) -> float:
    """``L(x, y)`` for a single pair of points."""
    return float(k.value(_coords(k, x), _coords(k, y), period))


@dataclass(frozen=True)
class SecondVariationBlock:
    block: np.ndarray

    def pair(self, U, V) -> float:
        """``U^T B V`` for stacked fibers ``U = [U(x); U(y)]``."""
        return float(np.asarray(U, dtype=float) @ self.block @ np.asarray(V, dtype=float))


def second_variation_block(k: KernelSpec, x, y, period=None) -> SecondVariationBlock:
    B = np.array(k.block(_coords(k, x), _coords(k, y), period), dtype=float)
    B.setflags(write=False)
    return SecondVariationBlock(B)


def surrogate_norm(B, gx=None, gy=None):
    """Spectral norm of ``G^{-1/2} B G^{-1/2}`` per pair.

    ``G`` is the block-diagonal fiber metric at the two points (scalar slot 1,
    vector slots ``g``).  This dominates the supremum over the pair norm
    ``|U_x| + |U_y|`` and exceeds it by at most :data:`SURROGATE_FACTOR`.
    """
    B = np.asarray(B, dtype=float)
    if gx is not None or gy is not None:
        d = B.shape[-1] // 2
        scale = np.ones(B.shape[:-1])
        for off, g in ((0, gx), (d, gy)):
            if g is None:
                continue
            g = np.asarray(g, dtype=float)
            if g.shape[-2:] != (d - 1, d - 1):
                raise ValueError("fiber metric has the wrong shape")
            if d - 1 != 1:
                raise NotImplementedError("only one vector direction is supported")
            scale[..., off + 1] = 1.0 / np.sqrt(g[..., 0, 0])
        B = B * scale[..., :, None] * scale[..., None, :]
    ev = np.linalg.eigvalsh(B)
    return np.max(np.abs(ev), axis=-1)


def pair_bound(k: KernelSpec, X, Y, period=None, gx=None, gy=None):
    """Vectorised curvature norm: closed form when available, else surrogate."""
    if gx is None and gy is None:
        b = k.bound(X, Y, period)
        if b is not None:
            return np.asarray(b, dtype=float)
    return surrogate_norm(k.block(X, Y, period), gx, gy)


def curvature_norm_bound(k: KernelSpec, x, y, period=None, gx=None, gy=None) -> float:
    """Supremum of ``|U^T B V|`` over unit pair norms, or its surrogate."""
    X, Y = _coords(k, x), _coords(k, y)
    k.check_support(X)
    k.check_support(Y)
    return float(pair_bound(k, X, Y, period, gx, gy))
