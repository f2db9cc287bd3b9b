"""Discrete Euler-Lagrange data, the adapted weight and the assembled forms.

Jet degrees of freedom live on a subset of the quadrature nodes (by default
:func:`interior_nodes`); quadrature always runs over every node.  Assembly is
split into fixed row blocks, so the floating-point reduction order does not
depend on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError
from .jets import FiberMetric, Jet
from .kernels import KernelSpec, _coords, pair_bound
from .measure import DiscreteMeasure

DEFAULT_MAX_DOF = 8192
ROW_BLOCK = 32


def max_dof_cap() -> int:
    env = os.environ.get("CVP_MAX_DOF")
    if env is None or env.strip() == "":
        return DEFAULT_MAX_DOF
    try:
        cap = int(env)
    except ValueError:
        raise ValueError(f"CVP_MAX_DOF must be an integer, got {env!r}") from None
    if cap < 1:
        raise ValueError(f"CVP_MAX_DOF must be positive, got {cap}")
    return cap


def _map_rows(n, fn, workers):
    spans = [(s, min(s + ROW_BLOCK, n)) for s in range(0, n, ROW_BLOCK)]
    if workers is None or workers <= 1 or len(spans) == 1:
        return [fn(*sp) for sp in spans]
    with ThreadPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(lambda sp: fn(*sp), spans))


def _check_measure(k: KernelSpec, m: DiscreteMeasure):
    if m.ambient_dim != k.ambient_dim:
        raise ValueError(
            f"{k.name} lives in dimension {k.ambient_dim}, grid carries {m.ambient_dim}"
        )


# -- Euler-Lagrange -----------------------------------------------------------


def compute_ell(k: KernelSpec, m: DiscreteMeasure, x) -> float:
    """Quadrature value of ``ell(x) = int L(x, y) dmu(y) - s``."""
    _check_measure(k, m)
    X = _coords(k, x)
    vals = k.value(X[None, :], m.points, m.period)
    return math.fsum(vals * m.weights) - k.s


def ell_values(k: KernelSpec, m: DiscreteMeasure, workers: int = 1) -> np.ndarray:
    """``ell`` at every node."""
    _check_measure(k, m)
    X, w = m.points, m.weights

    def rows(i0, i1):
        L = k.value(X[i0:i1, None, :], X[None, :, :], m.period)
        return np.sum(L * w, axis=1)

    return np.concatenate(_map_rows(m.n, rows, workers)) - k.s


def interior_nodes(k: KernelSpec, m: DiscreteMeasure) -> np.ndarray:
    """Node indices whose kernel reach stays inside a truncated domain.

    On periodic grids every node qualifies.  Otherwise a node is kept when
    the window ``k.reach(x)`` (two kernel widths about the mass of
    ``L(x, .) dmu``) lies inside ``[a, b]``.
    """
    if m.periodic:
        return np.arange(m.n)
    a, b = m.domain
    lo, hi = k.reach(m.line)
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    return np.flatnonzero((lo >= a - tol) & (hi <= b + tol))


@dataclass(frozen=True)
class ELResidual:
    max_abs: float
    per_node: np.ndarray   # |ell| at every node
    ell: np.ndarray        # signed ell at every node
    interior: np.ndarray   # boolean mask of nodes entering max_abs


def el_residual(k: KernelSpec, m: DiscreteMeasure, workers: int = 1) -> ELResidual:
    ell = ell_values(k, m, workers)
    mask = np.zeros(m.n, dtype=bool)
    mask[interior_nodes(k, m)] = True
    per = np.abs(ell)
    max_abs = float(np.max(per[mask])) if mask.any() else float("nan")
    return ELResidual(max_abs, per, ell, mask)


# -- weight ------------------------------------------------------------------


def compute_weight(k: KernelSpec, m: DiscreteMeasure, metric: FiberMetric | None = None,
                   workers: int = 1) -> np.ndarray:
    """``h(x_i) = 1 + sum_j w_j |d2 L(x_i, x_j)|`` at every node.

    A non-identity fiber metric forces the surrogate norm, since the
    closed forms are stated for the identity metric.
    """
    _check_measure(k, m)
    X, w = m.points, m.weights
    g = None
    if metric is not None and k.fiber_dim == 2:
        if metric.g.shape[0] != m.n:
            raise ValueError("metric must have one matrix per node")
        if not metric.is_identity():
            g = metric.g

    def rows(i0, i1):
        gx = None if g is None else g[i0:i1, None]
        gy = None if g is None else g[None, :]
        b = pair_bound(k, X[i0:i1, None, :], X[None, :, :], m.period, gx, gy)
        return np.sum(b * w, axis=1)

    return 1.0 + np.concatenate(_map_rows(m.n, rows, workers))


# -- assembled forms ---------------------------------------------------------


@dataclass(frozen=True)
class AssembledOperator:
    """Symmetric matrix of the bilinear form on the jet dofs of ``nodes``."""

    matrix: np.ndarray
    fiber_dim: int
    nodes: np.ndarray
    n_nodes: int

    @property
    def n_dof(self) -> int:
        return self.matrix.shape[0]

    def form(self, u, v) -> float:
        return float(np.asarray(u) @ self.matrix @ np.asarray(v))


def _resolve_nodes(nodes, n):
    if nodes is None:
        return np.arange(n)
    nodes = np.asarray(nodes, dtype=int).reshape(-1)
    if nodes.size == 0:
        raise ValueError("no jet nodes selected")
    if np.any(np.diff(nodes) <= 0) or nodes[0] < 0 or nodes[-1] >= n:
        raise ValueError("jet nodes must be strictly increasing valid indices")
    return nodes


def _check_cap(n_dof, cap):
    cap = max_dof_cap() if cap is None else int(cap)
    if n_dof > cap:
        raise ResourceLimitError(
            f"{n_dof} degrees of freedom exceed the dense cap of {cap} (set CVP_MAX_DOF to raise it)"
        )


def assemble_bilinear(k: KernelSpec, m: DiscreteMeasure, nodes=None, workers: int = 1,
                      max_dof: int | None = None) -> AssembledOperator:
    """Assemble ``A`` with ``U^T A V`` the discrete second-variation form.

    ``U^T A V = 1/2 sum_{p,q} w_p w_q [U_p; U_q]^T B(x_p, x_q) [V_p; V_q]
    - s sum_p w_p a_p b_p`` with jets vanishing off ``nodes``.  ``nodes``
    defaults to :func:`interior_nodes`.
    """
    _check_measure(k, m)
    if nodes is None:
        nodes = interior_nodes(k, m)
    P = _resolve_nodes(nodes, m.n)
    d = k.fiber_dim
    _check_cap(P.size * d, max_dof)
    X, w, T = m.points, m.weights, m.period
    XP, wP = X[P], w[P]

    def rows(i0, i1):
        Xi = XP[i0:i1, None, :]
        wi = wP[i0:i1]
        B1 = k.block(Xi, X[None, :, :], T)          # B(x_i, x_q)
        B2 = k.block(X[None, :, :], Xi, T)          # B(x_q, x_i)
        B2 = np.broadcast_to(B2, B1.shape)
        diag = np.sum((B1[..., :d, :d] + B2[..., d:, d:]) * w[None, :, None, None], axis=1)
        off = (B1[:, P, :d, d:] + B2[:, P, d:, :d]) * wP[None, :, None, None]
        off = 0.5 * wi[:, None, None, None] * off
        loc = np.arange(i1 - i0)
        off[loc, i0 + loc] += 0.5 * wi[:, None, None] * diag
        off[loc, i0 + loc, 0, 0] -= k.s * wi
        return np.transpose(off, (0, 2, 1, 3)).reshape((i1 - i0) * d, P.size * d)

    A = np.concatenate(_map_rows(P.size, rows, workers), axis=0)
    A = 0.5 * (A + A.T)
    A.setflags(write=False)
    return AssembledOperator(A, d, P, m.n)


@dataclass(frozen=True)
class AdaptedSpace:
    """Weighted Gram form ``<<U, V>> = sum_i h_i w_i <U_i, V_i>_g``."""

    h: np.ndarray          # weight at the jet nodes
    weights: np.ndarray    # quadrature masses at the jet nodes
    blocks: np.ndarray     # (n_nodes, d, d) per-node Gram blocks
    fiber_dim: int
    nodes: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.blocks.shape[0] * self.fiber_dim

    @property
    def matrix(self) -> np.ndarray:
        n, d = self.blocks.shape[0], self.fiber_dim
        H = np.zeros((n, d, n, d))
        idx = np.arange(n)
        H[idx, :, idx, :] = self.blocks
        return H.reshape(n * d, n * d)

    @property
    def dof_h(self) -> np.ndarray:
        return np.repeat(self.h, self.fiber_dim)

    def apply(self, u) -> np.ndarray:
        """``H u`` using the block structure."""
        n, d = self.blocks.shape[0], self.fiber_dim
        U = np.asarray(u, dtype=float).reshape(n, d)
        return np.einsum("nij,nj->ni", self.blocks, U).reshape(-1)

    def solve(self, r) -> np.ndarray:
        """``H^{-1} r``."""
        n, d = self.blocks.shape[0], self.fiber_dim
        R = np.asarray(r, dtype=float).reshape(n, d)
        return np.linalg.solve(self.blocks, R[..., None])[..., 0].reshape(-1)

    def inner(self, u, v) -> float:
        return float(np.asarray(u, dtype=float) @ self.apply(v))

    def norm(self, u) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))


def assemble_gram(m: DiscreteMeasure, h, g: FiberMetric | None = None, nodes=None,
                  fiber_dim: int | None = None) -> AdaptedSpace:
    """Block-diagonal Gram form: ``h_i w_i`` on scalars, ``h_i w_i g_i`` on vectors."""
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape != (m.n,):
        raise ValueError(f"expected {m.n} weight values, got {h.shape}")
    if not np.all(h >= 1.0):
        raise ValueError("the adapted weight must satisfy h >= 1")
    if g is None:
        d = 1 if fiber_dim is None else int(fiber_dim)
        g = FiberMetric.identity(m.n, d)
    elif fiber_dim is not None and g.fiber_dim != fiber_dim:
        raise ValueError("metric fiber dimension does not match")
    d = g.fiber_dim
    if g.g.shape[0] != m.n:
        raise ValueError("metric must have one matrix per node")
    P = _resolve_nodes(nodes, m.n)
    hw = h[P] * m.weights[P]
    blocks = np.zeros((P.size, d, d))
    blocks[:, 0, 0] = hw
    blocks[:, 1:, 1:] = hw[:, None, None] * g.g[P]
    hP = h[P].copy()
    wPc = m.weights[P].copy()
    for a in (hP, wPc, blocks):
        a.setflags(write=False)
    return AdaptedSpace(hP, wPc, blocks, d, P)


@dataclass(frozen=True)
class Problem:
    """A kernel on a grid with its assembled operator and Gram form."""

    kernel: KernelSpec
    measure: DiscreteMeasure
    operator: AssembledOperator
    space: AdaptedSpace
    weight: np.ndarray      # h at every node
    metric: FiberMetric

    @property
    def nodes(self) -> np.ndarray:
        return self.operator.nodes

    def jet_dofs(self, jet: Jet) -> np.ndarray:
        return jet.to_dofs(self.nodes)

    def jet_from_dofs(self, dofs) -> Jet:
        return Jet.from_dofs(dofs, self.kernel.fiber_dim, self.measure.n, self.nodes)


def build_problem(k: KernelSpec, m: DiscreteMeasure, metric: FiberMetric | None = None,
                  nodes=None, workers: int = 1, max_dof: int | None = None) -> Problem:
    if metric is None:
        metric = FiberMetric.identity(m.n, k.fiber_dim)
    if metric.fiber_dim != k.fiber_dim:
        raise ValueError("metric fiber dimension does not match the kernel")
    if nodes is None:
        nodes = interior_nodes(k, m)
    op = assemble_bilinear(k, m, nodes, workers, max_dof)
    h = compute_weight(k, m, metric, workers)
    sp = assemble_gram(m, h, metric, op.nodes)
    return Problem(k, m, op, sp, h, metric)
