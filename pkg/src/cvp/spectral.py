"""Spectral calculus of the pencil ``(A, H)``.

``Delta_N = H^{-1} A`` is self-adjoint in the Gram form ``<<., .>>``.  Its
eigenvectors are computed by reducing the pencil with the per-node Cholesky
factors of ``H``; modes with ``lambda <= eps`` form the (numerical) kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, IndefiniteGramError, NumericalError
from .operator import AdaptedSpace, AssembledOperator

DEFAULT_REL_CUTOFF = 1e-8
_DOMAIN_TOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs ``A e = lambda H e`` with ``E^T H E = I``.

    Attributes
    ----------
    eigenvalues
        Non-decreasing.
    eigenvectors
        Columns are the modes.
    cutoff
        Modes with ``eigenvalue <= cutoff`` are treated as kernel.
    A, space
        The pencil, kept so residuals can be formed independently.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cutoff: float
    A: np.ndarray
    space: AdaptedSpace

    @property
    def H(self) -> np.ndarray:
        return self.space.matrix

    @property
    def retained(self) -> np.ndarray:
        return self.eigenvalues > self.cutoff

    @property
    def n_retained(self) -> int:
        return int(np.count_nonzero(self.retained))

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def coefficients(self, u) -> np.ndarray:
        """``<<e_k, u>>`` for every mode."""
        return self.eigenvectors.T @ self.space.apply(u)

    def synthesize(self, c) -> np.ndarray:
        return self.eigenvectors @ np.asarray(c, dtype=float)

    def norm(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return self.space.norm(u)

    def delta(self, u) -> np.ndarray:
        """``H^{-1} A u`` through the assembled matrices."""
        return self.space.solve(self.A @ np.asarray(u, dtype=float))


def _block_cholesky(sp: AdaptedSpace):
    try:
        return np.linalg.cholesky(sp.blocks)
    except np.linalg.LinAlgError:
        raise IndefiniteGramError("Gram form is not positive definite") from None


def decompose(op: AssembledOperator, sp: AdaptedSpace, eps: float | None = None,
              rel_cutoff: float = DEFAULT_REL_CUTOFF) -> SpectralDecomposition:
    """Full eigensystem of ``(A, H)``; ``eps`` defaults to ``rel_cutoff * lambda_max``."""
    if op.n_dof != sp.n_dof or op.fiber_dim != sp.fiber_dim:
        raise ValueError("operator and Gram form have different degrees of freedom")
    if eps is not None and not eps >= 0:
        raise ValueError(f"cutoff must be non-negative, got {eps}")
    n, d = sp.blocks.shape[0], sp.fiber_dim
    Lc = _block_cholesky(sp)
    Linv = np.linalg.inv(Lc)                                  # (n, d, d)
    A4 = op.matrix.reshape(n, d, n, d)
    C = np.einsum("iac,icje,jbe->iajb", Linv, A4, Linv, optimize=True).reshape(n * d, n * d)
    C = 0.5 * (C + C.T)
    try:
        lam, Q = scipy.linalg.eigh(C)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from None
    if not np.all(np.isfinite(lam)):
        raise NumericalError("non-finite eigenvalues")
    E = np.einsum("ica,ick->iak", Linv, Q.reshape(n, d, -1)).reshape(n * d, -1)
    # one Gram-Schmidt sweep against the H inner product
    HE = np.einsum("iab,ibk->iak", sp.blocks, E.reshape(n, d, -1)).reshape(n * d, -1)
    M = E.T @ HE
    M = 0.5 * (M + M.T)
    try:
        R = np.linalg.cholesky(M).T
    except np.linalg.LinAlgError:
        raise NumericalError("eigenvectors lost H-orthogonality") from None
    E = scipy.linalg.solve_triangular(R, E.T, trans="T", lower=False).T
    lam_max = float(lam[-1])
    if eps is None:
        eps = rel_cutoff * max(lam_max, 0.0)
    lam.setflags(write=False)
    E.setflags(write=False)
    return SpectralDecomposition(lam, E, float(eps), op.matrix, sp)


def _unbounded_at_zero(f) -> bool:
    with np.errstate(all="ignore"):
        try:
            v = f(np.zeros(1))
        except ZeroDivisionError:
            return True
    return not np.all(np.isfinite(np.asarray(v, dtype=float)))


def apply_function(dec: SpectralDecomposition, f, w) -> np.ndarray:
    """``sum_{lambda_k > eps} f(lambda_k) <<e_k, w>> e_k``.

    ``f`` must accept an array of eigenvalues.  If ``f`` is unbounded at 0
    then ``w`` may carry no more than ``1e-10 * |w|`` on the kernel modes.
    """
    c = dec.coefficients(w)
    ret = dec.retained
    with np.errstate(all="ignore"):
        fv = np.asarray(f(dec.eigenvalues[ret]), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise DomainError("f is not finite on the retained spectrum")
    if _unbounded_at_zero(f):
        kernel_mass = float(np.linalg.norm(c[~ret]))
        if kernel_mass > _DOMAIN_TOL * float(np.linalg.norm(c)):
            raise DomainError(
                f"vector has kernel mass {kernel_mass:.3g}; outside the domain of f"
            )
    return dec.eigenvectors[:, ret] @ (fv * c[ret])


def sobolev_norm(dec: SpectralDecomposition, u, k: int) -> float:
    """Norm with spectral weight ``lambda^{-k}``; ``k = 0`` is the Gram norm."""
    k = int(k)
    if k < 0:
        raise ValueError("k must be non-negative")
    c = dec.coefficients(u)
    if k == 0:
        return float(np.linalg.norm(c))
    ret = dec.retained
    kernel_mass = float(np.linalg.norm(c[~ret]))
    if kernel_mass > _DOMAIN_TOL * float(np.linalg.norm(c)):
        raise DomainError(f"vector has kernel mass {kernel_mass:.3g}; k >= 1 needs none")
    lam = dec.eigenvalues[ret]
    return float(np.linalg.norm(c[ret] * lam ** (-0.5 * k)))


def kernel_projection(dec: SpectralDecomposition, u) -> np.ndarray:
    """Gram-orthogonal projection onto ``span{e_k : lambda_k <= eps}``."""
    c = dec.coefficients(u)
    ker = ~dec.retained
    return dec.eigenvectors[:, ker] @ c[ker]


@dataclass(frozen=True)
class SolveResult:
    solution: np.ndarray
    residual_rel: float
    discarded_fraction: float
    retained_modes: int
    rhs: np.ndarray               # w / h restricted to the retained span

    def report(self) -> dict:
        return {
            "residual_rel": self.residual_rel,
            "discarded_fraction": self.discarded_fraction,
            "retained_modes": self.retained_modes,
        }


def solve_linearized(dec: SpectralDecomposition, sp: AdaptedSpace, w) -> SolveResult:
    """Weak solution ``u = sum_{lambda > eps} lambda^{-1} <<e, w/h>> e``.

    ``residual_rel`` is measured through the assembled matrices,
    ``|H^{-1} A u - w_ret| / |w_ret|`` in the Gram norm.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != sp.n_dof:
        raise ValueError(f"expected {sp.n_dof} dofs, got {w.size}")
    what = w / sp.dof_h
    c = dec.coefficients(what)
    ret = dec.retained
    total = float(np.linalg.norm(c))
    kept = float(np.linalg.norm(c[ret]))
    if total == 0.0 or kept <= 1e-14 * total:
        raise NumericalError("the inhomogeneity lies entirely in the kernel")
    E = dec.eigenvectors[:, ret]
    u = E @ (c[ret] / dec.eigenvalues[ret])
    what_ret = E @ c[ret]
    r = dec.delta(u) - what_ret
    residual = dec.norm(r) / dec.norm(what_ret)
    return SolveResult(u, float(residual), math.sqrt(max(total**2 - kept**2, 0.0)) / total,
                       int(ret.sum()), what_ret)
