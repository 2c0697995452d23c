"""Center-stable splitting of the linear part with projections and bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = ["SpectralSplit", "split", "DefectiveMatrixError"]


class DefectiveMatrixError(ValueError):
    pass


@dataclass
class SpectralSplit:
    A: np.ndarray
    Ac: np.ndarray          # center block, in the center eigenbasis
    As: np.ndarray          # stable block, in the stable eigenbasis
    Pc: np.ndarray          # projections in the original coordinates
    Ps: np.ndarray
    nu: float
    beta: float
    Mc: float
    Ms: float
    center_dim: int
    stable_dim: int
    center_unstable: bool
    gap: float = field(init=False)

    def __post_init__(self):
        # diagnostic only; admissibility of the gap is the caller's judgment
        self.gap = self.nu + self.beta


def _real_block(A, V, Vinv, mask) -> np.ndarray:
    cols = np.where(mask)[0]
    block = (Vinv @ A @ V)[np.ix_(cols, cols)]
    if np.max(np.abs(block.imag)) > 1e-8 * max(1.0, np.max(np.abs(block.real))):
        # pair complex eigenvalues into a real block via a real basis
        basis = V[:, cols]
        B = np.hstack([basis.real, basis.imag])
        # orthonormalise and express A in that real invariant subspace
        Q, _ = np.linalg.qr(B)
        rank = np.linalg.matrix_rank(Q.T @ B, tol=1e-10)
        Q = Q[:, :rank]
        return (Q.T @ A @ Q).real
    return block.real


def split(A, tol: float = 1e-8) -> SpectralSplit:
    """Split A into center and stable blocks by eigenvalue classification.

    Eigenvalues with real part below -tol are stable; the rest are center,
    flagged center-unstable when any real part exceeds +tol.  Growth bound
    data (Mc, nu, Ms, beta) is estimated by sampling the semigroups.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    dim = A.shape[0]
    lam, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e8:
        raise DefectiveMatrixError(
            f"matrix is too far from diagonalizable (eigenbasis condition "
            f"number {cond:.2e}); growth bounds of the split would degenerate")
    stable_mask = lam.real < -tol
    center_mask = ~stable_mask
    Vinv = np.linalg.inv(V)
    Pc = (V @ np.diag(center_mask.astype(float)) @ Vinv).real
    Ps = (V @ np.diag(stable_mask.astype(float)) @ Vinv).real
    cdim, sdim = int(center_mask.sum()), int(stable_mask.sum())
    Ac = _real_block(A, V, Vinv, center_mask) if cdim else np.zeros((0, 0))
    As = _real_block(A, V, Vinv, stable_mask) if sdim else np.zeros((0, 0))
    center_unstable = bool(np.any(lam.real[center_mask] > tol)) if cdim else False

    nu = float(np.max(np.abs(lam.real[center_mask]))) if cdim else 0.0
    beta = float(-np.max(lam.real[stable_mask])) if sdim else np.inf
    Mc = 1.0
    if cdim:
        for t in np.linspace(-10.0, 10.0, 201):
            Mc = max(Mc, np.linalg.norm(expm(Ac * t), 2) / np.exp(nu * abs(t)))
    Ms = 1.0
    if sdim:
        for t in np.linspace(0.0, 10.0, 101):
            Ms = max(Ms, np.linalg.norm(expm(As * t), 2) / np.exp(-beta * t))
    return SpectralSplit(A=A, Ac=Ac, As=As, Pc=Pc, Ps=Ps, nu=nu, beta=beta,
                         Mc=float(Mc), Ms=float(Ms), center_dim=cdim,
                         stable_dim=sdim, center_unstable=center_unstable)
