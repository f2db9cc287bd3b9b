"""Uniform quadrature grids representing the support measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TRUNCATED = "truncated_line"
PERIODIC = "periodic_line"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Quadrature nodes and masses on a line (possibly embedded in the plane).

    ``weights`` is the product of the rule's ``base_weights`` and the
    accumulated ``density``; keeping the two apart makes repeated density
    application exact.
    """

    points: np.ndarray          # (n, m) ambient coordinates
    base_weights: np.ndarray    # (n,) quadrature masses of the rule
    topology: str
    domain: tuple               # (a, b); (0, T) when periodic
    rule: str
    density: np.ndarray         # (n,) accumulated density
    density_tag: str | None = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim == 1:
            pts = _frozen(pts[:, None])
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "base_weights", _frozen(self.base_weights))
        object.__setattr__(self, "density", _frozen(self.density))
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        n = pts.shape[0]
        if self.base_weights.shape != (n,) or self.density.shape != (n,):
            raise ValueError("weights and density must have one entry per point")
        if self.topology not in (TRUNCATED, PERIODIC):
            raise ValueError(f"unknown topology {self.topology!r}")
        if not np.all(self.weights > 0):
            raise ValueError("quadrature weights must be positive")
        if n > 1 and not np.all(np.diff(pts[:, 0]) > 0):
            raise ValueError("points must be strictly ordered along the line")
        w = self.weights
        w.setflags(write=False)
        object.__setattr__(self, "_weights", w)

    @property
    def weights(self) -> np.ndarray:
        try:
            return self._weights
        except AttributeError:
            return self.base_weights * self.density

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def line(self) -> np.ndarray:
        """Coordinates along the line."""
        return self.points[:, 0]

    @property
    def periodic(self) -> bool:
        return self.topology == PERIODIC

    @property
    def period(self) -> float | None:
        return self.domain[1] - self.domain[0] if self.periodic else None

    @property
    def spacing(self) -> float:
        a, b = self.domain
        if self.periodic or self.rule == "midpoint":
            return (b - a) / self.n
        return (b - a) / (self.n - 1)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def with_ambient_dim(self, m: int) -> "DiscreteMeasure":
        """Embed the line as the first coordinate axis of ``R^m``."""
        pts = np.zeros((self.n, m))
        pts[:, 0] = self.line
        return replace(self, points=pts)


def _embed(x, ambient_dim):
    pts = np.zeros((x.size, ambient_dim))
    pts[:, 0] = x
    return pts


def build_line_grid(domain, n: int, rule: str = "trapezoid", ambient_dim: int = 1) -> DiscreteMeasure:
    """Uniform grid on ``[a, b]`` with composite trapezoid or midpoint weights.

    >>> m = build_line_grid([0, 1], 2)
    >>> m.line.tolist(), m.weights.tolist()
    ([0.0, 1.0], [0.5, 0.5])
    """
    a, b = (float(v) for v in domain)
    n = int(n)
    if n < 2:
        raise ValueError(f"need n >= 2 nodes, got {n}")
    if not a < b:
        raise ValueError(f"empty domain [{a}, {b}]")
    if rule == "trapezoid":
        x = np.linspace(a, b, n)
        w = np.full(n, (b - a) / (n - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
    elif rule == "midpoint":
        step = (b - a) / n
        x = a + (np.arange(n) + 0.5) * step
        w = np.full(n, step)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return DiscreteMeasure(_embed(x, ambient_dim), w, TRUNCATED, (a, b), rule, np.ones(n))


def build_periodic_grid(length: float, n: int, ambient_dim: int = 1) -> DiscreteMeasure:
    """``n`` equispaced nodes on ``[0, T)``, each of mass ``T/n``."""
    T = float(length)
    n = int(n)
    if n < 2:
        raise ValueError(f"need n >= 2 nodes, got {n}")
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"period must be positive, got {T}")
    x = np.arange(n) * (T / n)
    return DiscreteMeasure(_embed(x, ambient_dim), np.full(n, T / n), PERIODIC, (0.0, T),
                           "periodic", np.ones(n))


def apply_density(m: DiscreteMeasure, density, tag: str | None = None) -> DiscreteMeasure:
    """Multiply the measure by a strictly positive density sampled at the nodes."""
    d = np.broadcast_to(np.asarray(density, dtype=float), (m.n,))
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("density must be finite and strictly positive at every node")
    if tag is None:
        new_tag = m.density_tag
    else:
        new_tag = tag if m.density_tag is None else f"{m.density_tag}*{tag}"
    return replace(m, density=m.density * d, density_tag=new_tag)


def integrate(m: DiscreteMeasure, values) -> float:
    """``sum_i values_i w_i``, exactly rounded (so independent of node order)."""
    v = np.asarray(values, dtype=float)
    if v.shape != (m.n,):
        raise ValueError(f"expected {m.n} values, got shape {v.shape}")
    return math.fsum(v * m.weights)


def separation(m: DiscreteMeasure, x, y):
    """Distance along the line, taken modulo the period on periodic grids."""
    d = np.abs(np.subtract(x, y))
    if m.periodic:
        T = m.period
        d = np.mod(d, T)
        d = np.minimum(d, T - d)
    return d
