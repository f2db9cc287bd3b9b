"""Jets ``(a, u)`` on a line grid and the constructions built from them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .measure import DiscreteMeasure


@dataclass(frozen=True)
class Jet:
    """Scalar component per node plus ``fiber_dim - 1`` vector components."""

    scalar: np.ndarray
    vector: np.ndarray

    def __post_init__(self):
        s = np.array(self.scalar, dtype=float).reshape(-1)
        v = np.array(self.vector, dtype=float)
        if v.ndim == 1:
            v = v.reshape(s.size, -1)
        if v.shape[0] != s.size or v.shape[1] > 1:
            raise ValueError(f"vector part must have shape ({s.size}, 0|1), got {v.shape}")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "scalar", s)
        object.__setattr__(self, "vector", v)

    @property
    def n(self) -> int:
        return self.scalar.size

    @property
    def fiber_dim(self) -> int:
        return 1 + self.vector.shape[1]

    @classmethod
    def zeros(cls, n: int, fiber_dim: int) -> "Jet":
        return cls(np.zeros(n), np.zeros((n, fiber_dim - 1)))

    @classmethod
    def scalar_only(cls, a) -> "Jet":
        a = np.asarray(a, dtype=float)
        return cls(a, np.zeros((a.size, 0)))

    def to_dofs(self, nodes=None) -> np.ndarray:
        """Flatten in (node, component) order, optionally on a node subset."""
        stacked = np.column_stack([self.scalar, self.vector])
        if nodes is not None:
            stacked = stacked[np.asarray(nodes)]
        return stacked.reshape(-1).copy()

    @classmethod
    def from_dofs(cls, dofs, fiber_dim: int, n: int | None = None, nodes=None) -> "Jet":
        """Inverse of :meth:`to_dofs`; nodes outside ``nodes`` are zero."""
        d = np.asarray(dofs, dtype=float).reshape(-1, fiber_dim)
        if nodes is not None:
            if n is None:
                raise ValueError("n is required together with nodes")
            full = np.zeros((n, fiber_dim))
            full[np.asarray(nodes)] = d
            d = full
        return cls(d[:, 0], d[:, 1:])


@dataclass(frozen=True)
class FiberMetric:
    """Positive-definite metric on the vector fiber, one matrix per node."""

    g: np.ndarray  # (n, d-1, d-1)

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValueError(f"metric must have shape (n, k, k), got {g.shape}")
        if g.shape[1]:
            if not np.allclose(g, np.swapaxes(g, 1, 2), rtol=0, atol=0):
                raise ValueError("metric must be symmetric")
            if np.any(np.linalg.eigvalsh(g) <= 0):
                raise ValueError("metric must be positive definite at every node")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def identity(cls, n: int, fiber_dim: int, scale: float = 1.0) -> "FiberMetric":
        k = fiber_dim - 1
        return cls(np.broadcast_to(scale * np.eye(k), (n, k, k)))

    @property
    def fiber_dim(self) -> int:
        return 1 + self.g.shape[1]

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.g, np.broadcast_to(np.eye(self.g.shape[1]), self.g.shape)))


def jet_pointwise_inner(u: Jet, v: Jet, g: FiberMetric | None = None) -> np.ndarray:
    """``b b~ + g(v, v~)`` at every node."""
    if u.n != v.n or u.fiber_dim != v.fiber_dim:
        raise ValueError("jets live on different grids or fibers")
    if g is None:
        g = FiberMetric.identity(u.n, u.fiber_dim)
    if g.g.shape[0] != u.n or g.fiber_dim != u.fiber_dim:
        raise ValueError("metric does not match the jets")
    return u.scalar * v.scalar + np.einsum("ni,nij,nj->n", u.vector, g.g, v.vector)


def _derivative(m: DiscreteMeasure, f) -> np.ndarray:
    """Second-order finite-difference derivative along the line."""
    f = np.asarray(f, dtype=float)
    if f.shape != (m.n,):
        raise ValueError(f"expected {m.n} values, got shape {f.shape}")
    if m.n < 3:
        raise ValueError("finite differences need at least 3 nodes")
    step = m.spacing
    if m.periodic:
        return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * step)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * step)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * step)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * step)
    return out


def gradient(m: DiscreteMeasure, f) -> np.ndarray:
    return _derivative(m, f)


def divergence(m: DiscreteMeasure, v) -> np.ndarray:
    """``(1/h) (h v)'`` with ``h`` the density carried by ``m``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    h = m.density
    return _derivative(m, h * v) / h


def antiderivative_field(m: DiscreteMeasure, a) -> np.ndarray:
    """Vector field ``A`` with ``div A = a``, vanishing at the leftmost node.

    Computed as ``(1/h) * cumtrapz(a h)``.  When ``a`` has zero mean against
    the measure, ``A`` returns to zero at the right end.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (m.n,):
        raise ValueError(f"expected {m.n} values, got shape {a.shape}")
    h = m.density
    return cumulative_trapezoid(a * h, m.line, initial=0.0) / h


def inner_solution_from_vector(v, m: DiscreteMeasure) -> Jet:
    """The inner solution ``(div v, v)``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    return Jet(divergence(m, v), v[:, None])


# -- CSV -------------------------------------------------------------------


def jet_to_csv(m: DiscreteMeasure, jet: Jet) -> str:
    cols = ["x"] + [f"x{i}" for i in range(1, m.ambient_dim)] + ["scalar"]
    cols += [f"vector{i}" for i in range(jet.vector.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i in range(m.n):
        row = list(m.points[i]) + [jet.scalar[i]] + list(jet.vector[i])
        w.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def read_jet_csv(path, m: DiscreteMeasure, fiber_dim: int) -> Jet:
    """Read ``x, scalar[, vector0]`` columns; rows must match the grid nodes."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != m.n:
        raise ValueError(f"{path}: expected {m.n} rows, found {len(rows)}")
    try:
        x = np.array([float(r["x"]) for r in rows])
        s = np.array([float(r["scalar"]) for r in rows])
        if fiber_dim == 2:
            v = np.array([float(r.get("vector0") or 0.0) for r in rows])[:, None]
        else:
            v = np.zeros((m.n, 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed jet CSV ({exc})") from None
    if not np.allclose(x, m.line, rtol=0, atol=1e-9 * max(1.0, float(np.max(np.abs(m.line))))):
        raise ValueError(f"{path}: node coordinates do not match the grid")
    return Jet(s, v)
