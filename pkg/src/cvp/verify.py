"""Independent oracles for the discretised operators.

None of these reuse the eigen-solver path of :mod:`cvp.spectral`: the Fourier
oracle sums a cosine transform directly, the positivity report calls the
generalised LAPACK driver, and the minimiser check uses the closed-form
integrand rather than the kernel module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import KernelSpec, inhomogeneous_constants
from .measure import DiscreteMeasure
from .operator import AdaptedSpace, AssembledOperator, _map_rows


@dataclass(frozen=True)
class OracleReport:
    name: str
    max_rel_err: float
    details: dict = field(default_factory=dict)
    passed: bool | None = None

    def __post_init__(self):
        if not self.max_rel_err >= 0:
            raise ValueError("max_rel_err must be non-negative")

    def to_dict(self) -> dict:
        out = {"name": self.name, "max_rel_err": self.max_rel_err}
        if self.passed is not None:
            out["passed"] = self.passed
        out["details"] = self.details
        return out


# -- circulant Fourier oracle --------------------------------------------------


@dataclass(frozen=True)
class FourierSpectrum:
    """Mode-by-mode eigenvalues of a circulant ``Delta_N``.

    ``discrete[q]`` belongs to the momentum ``momenta[q]``; ``continuum`` is
    the infinite-line value at the same momentum.
    """

    momenta: np.ndarray
    discrete: np.ndarray
    continuum: np.ndarray
    el_defect: float

    @property
    def sorted_eigenvalues(self) -> np.ndarray:
        return np.sort(self.discrete)


def fourier_spectrum_oracle(k: KernelSpec, m: DiscreteMeasure) -> FourierSpectrum:
    """Eigenvalues of the circulant operator by a direct cosine sum.

    Uses the row ``c_j = w L(x_0, x_j) / h`` with ``h = 1 + sum_j w L``.
    The ``s`` correction cancels exactly when the discrete Euler-Lagrange
    equation holds; its defect is returned as ``el_defect``.
    """
    if not k.translation_invariant or k.ambient_dim != 1 or k.fiber_dim != 1:
        raise ValueError("the Fourier oracle needs a translation-invariant scalar kernel on the line")
    if not m.periodic:
        raise ValueError("the Fourier oracle needs a periodic grid")
    if not np.allclose(m.weights, m.weights[0], rtol=0, atol=0):
        raise ValueError("the Fourier oracle needs uniform weights")
    n, T = m.n, m.period
    w = float(m.weights[0])
    x = m.line
    row = np.asarray(k.value(x[:1, None], x[:, None], T), dtype=float) * w
    S = math.fsum(row)
    h = 1.0 + S
    c = row / h
    q = np.arange(n)
    phase = np.outer(q, q) % n
    discrete = np.cos(2.0 * np.pi * phase / n) @ c
    qs = np.where(q <= n // 2, q, q - n)
    p = 2.0 * np.pi * qs / T
    continuum = np.asarray(k.symbol(p), dtype=float) / (1.0 + float(k.symbol(0.0)))
    return FourierSpectrum(p, discrete, continuum, abs(S - k.s))


def compare_sorted(computed, oracle, scale=None) -> float:
    """Max deviation of sorted spectra, relative to ``scale`` (default max |oracle|)."""
    a = np.sort(np.asarray(computed, dtype=float))
    b = np.sort(np.asarray(oracle, dtype=float))
    if a.shape != b.shape:
        raise ValueError("spectra have different lengths")
    if scale is None:
        scale = float(np.max(np.abs(b))) if b.size else 1.0
    if scale == 0.0:
        return float(np.max(np.abs(a - b)))
    return float(np.max(np.abs(a - b)) / scale)


# -- positivity --------------------------------------------------------------


def positivity_report(op: AssembledOperator, sp: AdaptedSpace, rel_tol: float = 1e-10,
                      upper: float = 2.0) -> OracleReport:
    """Extreme pencil eigenvalues from ``scipy.linalg.eigh(A, H)``.

    Passes when ``lambda_min >= -rel_tol * lambda_max`` and
    ``lambda_max <= upper + rel_tol``.
    """
    lam = scipy.linalg.eigh(op.matrix, sp.matrix, eigvals_only=True)
    lo, hi = float(lam[0]), float(lam[-1])
    scale = max(abs(hi), abs(lo), np.finfo(float).tiny)
    margin = lo / scale
    psd = lo >= -rel_tol * max(hi, 0.0)
    bounded = hi <= upper + rel_tol
    violation = max(0.0, -margin, (hi - upper) / upper)
    return OracleReport(
        "positivity",
        violation,
        {"lambda_min": lo, "lambda_max": hi, "margin": margin,
         "psd": bool(psd), "bounded": bool(bounded), "upper": upper},
        bool(psd and bounded),
    )


# -- minimiser identity -------------------------------------------------------


def mehler_parameters(rho: float) -> tuple[float, float]:
    """``(alpha, beta)`` of the non-homogeneous family matching Mehler ``rho``."""
    rho = float(rho)
    if not 0 < rho:
        raise ValueError("rho must be positive")
    return 1.0 - rho, (rho * rho - 1.0) / rho


def identity_probes(alpha: float, m: DiscreteMeasure, n_random: int = 10, seed: int = 0,
                    width: float = 2.5) -> np.ndarray:
    """Interior nodes plus ``n_random`` seeded off-grid points in the same window."""
    q = 1.0 - alpha
    a, b = m.domain
    half = 2 * width * math.sqrt(q)
    lo = (a + half) / q
    hi = (b - half) / q
    x = m.line
    nodes = x[(x >= lo - 1e-12) & (x <= hi + 1e-12)]
    if nodes.size == 0:
        raise ValueError("grid too narrow for the identity check")
    lo, hi = max(lo, a), min(hi, b)
    rng = np.random.default_rng(seed)
    extra = rng.uniform(lo, hi, size=n_random)
    return np.concatenate([nodes, extra])


def minimizer_identity_check(alpha: float, m: DiscreteMeasure, n_random: int = 10,
                             seed: int = 0, workers: int = 1) -> OracleReport:
    """Max error of ``int L(x, y) h(y) dy - 1`` over probe points.

    ``m`` is a plain line grid (Lebesgue quadrature).  The integrand is the
    closed form ``c exp(alpha x^2 - (x - y)^2 + (alpha + beta) y^2)``.
    """
    beta, c = inhomogeneous_constants(alpha)
    probes = identity_probes(alpha, m, n_random, seed)
    y = m.line
    w = m.base_weights

    def rows(i0, i1):
        x = probes[i0:i1, None]
        f = c * np.exp(alpha * x * x - (x - y) ** 2 + (alpha + beta) * y * y)
        return np.sum(f * w, axis=1) - 1.0

    err = np.abs(np.concatenate(_map_rows(probes.size, rows, workers)))
    return OracleReport(
        "minimizer_identity",
        float(err.max()),
        {"alpha": float(alpha), "beta": beta, "c": c, "n_probes": int(probes.size),
         "n_grid_probes": int(probes.size - n_random),
         "decay_rate": alpha + beta - 1.0},
    )


# -- brute-force quadratic form -----------------------------------------------


def pair_blocks(k: KernelSpec, m: DiscreteMeasure) -> np.ndarray:
    """``B(x_p, x_q)`` for every node pair, shape ``(n, n, 2d, 2d)``."""
    X = m.points
    return np.asarray(k.block(X[:, None, :], X[None, :, :], m.period), dtype=float)


class QuadraticFormOracle:
    """Direct double sum of the second-variation form for full-grid jets.

    Each of the ``(2d)^2`` block entries becomes a dense ``n x n`` matrix
    ``w_p w_q B_ab(x_p, x_q)``; the four pair slots (x-x, x-y, y-x, y-y) are
    contracted separately.  Calling with absolute values of everything gives
    the sum of absolute values of all elementary terms, used as the scale
    for relative errors.
    """

    def __init__(self, k: KernelSpec, m: DiscreteMeasure, blocks=None):
        self.k, self.m, self.d = k, m, k.fiber_dim
        B = pair_blocks(k, m) if blocks is None else np.asarray(blocks)
        w = m.weights
        self.Bw = np.moveaxis(B, (2, 3), (0, 1)) * np.outer(w, w)   # (2d, 2d, n, n)
        self.absBw = np.abs(self.Bw)
        self.w = w

    def _form(self, Bw, U, V, local):
        d = self.d
        total = 0.0
        for a in range(2 * d):
            ua = U[:, a % d]
            for b in range(2 * d):
                vb = V[:, b % d]
                M = Bw[a, b]
                if a < d and b < d:
                    total += (ua * vb) @ M.sum(axis=1)
                elif a < d:
                    total += ua @ M @ vb
                elif b < d:
                    total += vb @ M @ ua
                else:
                    total += (ua * vb) @ M.sum(axis=0)
        return 0.5 * total + local

    def __call__(self, U, V) -> tuple[float, float]:
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        n, d = self.m.n, self.d
        if U.shape != (n, d) or V.shape != (n, d):
            raise ValueError(f"jets must have shape ({n}, {d})")
        loc = self.k.s * self.w * U[:, 0] * V[:, 0]
        value = self._form(self.Bw, U, V, -math.fsum(loc))
        scale = self._form(self.absBw, np.abs(U), np.abs(V), math.fsum(np.abs(loc)))
        return float(value), float(scale)


def quadratic_form_oracle(k: KernelSpec, m: DiscreteMeasure, U, V, blocks=None) -> tuple[float, float]:
    """One-shot :class:`QuadraticFormOracle` evaluation: ``(value, scale)``."""
    return QuadraticFormOracle(k, m, blocks)(U, V)
