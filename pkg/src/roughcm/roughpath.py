"""Grid-sampled Hölder rough paths.

A rough path is stored as node samples of the first level W together with
per-cell increments of the second level WW.  Second-level values over
non-adjacent node pairs are reconstructed through Chen's relation, so the
Chen identity holds by construction and only per-cell data is ever stored.

All Hölder quantities are grid seminorms: suprema over node pairs.
"""
from __future__ import annotations

import csv
import json
import math

import numpy as np

__all__ = [
    "Grid",
    "RoughPath",
    "CovarianceFactorizationError",
    "lift_smooth",
    "lift_brownian",
    "lift_fbm",
    "shift",
    "restrict",
    "unit_block",
    "concat",
    "coarsen",
    "distance",
    "validate",
]


class CovarianceFactorizationError(RuntimeError):
    """Cholesky factorization of a sample covariance failed."""

    def __init__(self, n_nodes: int):
        super().__init__(
            f"covariance matrix at {n_nodes} nodes is not numerically "
            "positive definite; reduce the node count or the dyadic level"
        )
        self.n_nodes = n_nodes


class Grid:
    """Uniform grid on [t0, t1] with n cells."""

    def __init__(self, t0: float, t1: float, n: int):
        if n < 1:
            raise ValueError("grid needs at least one cell")
        if not t1 > t0:
            raise ValueError("grid endpoints must be increasing")
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.n = int(n)

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    def index(self, t: float) -> int:
        """Node index of a grid-aligned time t."""
        k = (t - self.t0) / self.h
        ki = round(k)
        if not (0 <= ki <= self.n) or abs(k - ki) > 1e-9 * max(1, abs(k)) + 1e-9:
            raise ValueError(f"time {t} is not a node of the grid")
        return ki

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and math.isclose(self.t0, other.t0, abs_tol=1e-12)
            and math.isclose(self.t1, other.t1, abs_tol=1e-12)
        )

    def __repr__(self) -> str:
        return f"Grid({self.t0}, {self.t1}, {self.n})"


class RoughPath:
    """Geometric or plain rough path (W, WW) sampled on a uniform grid.

    W has shape (n+1, d): first-level node samples, normalised so W[0] = 0.
    WW has shape (n, d, d): second-level increments over adjacent cells,
    convention WW[k][a, b] = int_{t_k}^{t_{k+1}} W^a_{t_k, r} dW^b_r.
    """

    def __init__(self, gamma: float, grid: Grid, W: np.ndarray, WW: np.ndarray,
                 geometric: bool = False):
        if not (1 / 3 < gamma <= 1 / 2):
            raise ValueError("gamma must lie in (1/3, 1/2]")
        W = np.asarray(W, dtype=float)
        WW = np.asarray(WW, dtype=float)
        if W.ndim != 2 or W.shape[0] != grid.n + 1:
            raise ValueError("W must have shape (n+1, d)")
        d = W.shape[1]
        if WW.shape != (grid.n, d, d):
            raise ValueError("WW must have shape (n, d, d)")
        self.gamma = float(gamma)
        self.grid = grid
        self.W = W - W[0]
        self.WW = WW
        self.geometric = bool(geometric)
        self._prefix = None

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def n(self) -> int:
        return self.grid.n

    def increment(self, i: int, j: int) -> np.ndarray:
        """First-level increment W_{t_i, t_j}."""
        return self.W[j] - self.W[i]

    def _prefix_second(self) -> np.ndarray:
        """P[j] = WW_{t_0, t_j}, built by composing cells via Chen."""
        if self._prefix is None:
            P = np.empty((self.n + 1, self.d, self.d))
            P[0] = 0.0
            for k in range(self.n):
                P[k + 1] = P[k] + self.WW[k] + np.outer(self.W[k], self.W[k + 1] - self.W[k])
            self._prefix = P
        return self._prefix

    def second(self, i: int, j: int) -> np.ndarray:
        """Second-level increment WW_{t_i, t_j}, reconstructed via Chen."""
        if not 0 <= i <= j <= self.n:
            raise ValueError("node indices out of range")
        P = self._prefix_second()
        return P[j] - P[i] - np.outer(self.W[i], self.W[j] - self.W[i])

    def holder_norms(self) -> tuple[float, float]:
        """Grid seminorms (|W|_gamma, |WW|_{2 gamma}) over all node pairs."""
        dt = _pair_gaps(self.grid)
        w = _pair_increment_norms(self.W)
        ww = _pair_second_norms(self)
        return float(np.max(w / dt**self.gamma)), float(np.max(ww / dt ** (2 * self.gamma)))

    def to_json(self) -> str:
        doc = {
            "gamma": self.gamma,
            "t0": self.grid.t0,
            "t1": self.grid.t1,
            "n": self.grid.n,
            "d": self.d,
            "W": self.W.tolist(),
            "WW": self.WW.tolist(),
            "geometric": self.geometric,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RoughPath":
        doc = json.loads(text)
        grid = Grid(doc["t0"], doc["t1"], doc["n"])
        return cls(doc["gamma"], grid, np.array(doc["W"]), np.array(doc["WW"]),
                   geometric=doc["geometric"])

    def to_csv(self, path: str) -> None:
        """Node samples of the first level, for plotting."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"W{a}" for a in range(self.d)])
            for t, row in zip(self.grid.nodes, self.W):
                writer.writerow([t] + list(row))


def _pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n + 1, k=1)


def _pair_gaps(grid: Grid) -> np.ndarray:
    ii, jj = _pair_index(grid.n)
    return (jj - ii) * grid.h


def _pair_increment_norms(Y: np.ndarray) -> np.ndarray:
    """Euclidean norms of Y_{t_j} - Y_{t_i} over all node pairs i < j."""
    ii, jj = _pair_index(Y.shape[0] - 1)
    diff = Y[jj] - Y[ii]
    return np.linalg.norm(diff.reshape(diff.shape[0], -1), axis=1)


def _pair_second_norms(rp: RoughPath) -> np.ndarray:
    P = rp._prefix_second()
    ii, jj = _pair_index(rp.n)
    vals = P[jj] - P[ii] - np.einsum("ka,kb->kab", rp.W[ii], rp.W[jj] - rp.W[ii])
    return np.linalg.norm(vals.reshape(vals.shape[0], -1), axis=1)


def lift_smooth(samples: np.ndarray, target: Grid, gamma: float) -> RoughPath:
    """Lift fine node samples of a path in R^d to a geometric rough path.

    The iterated integral per target cell is the composite trapezoid sum over
    the fine samples, which equals the canonical lift of the piecewise-linear
    interpolant.  Requires at least 8 fine sub-nodes per target cell.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < samples.shape[1]:
        samples = samples.T
    m = samples.shape[0] - 1
    if m % target.n != 0 or m // target.n < 8:
        raise ValueError("samples must resolve at least 8 sub-nodes per target cell")
    fine = _piecewise_linear_lift(samples, target, gamma)
    return coarsen(fine, m // target.n)


def _piecewise_linear_lift(samples: np.ndarray, span: Grid, gamma: float) -> RoughPath:
    """Canonical lift at the sample resolution: WW = (1/2) dW (x) dW per cell."""
    m = samples.shape[0] - 1
    grid = Grid(span.t0, span.t1, m)
    dW = np.diff(samples, axis=0)
    WW = 0.5 * np.einsum("ka,kb->kab", dW, dW)
    return RoughPath(gamma, grid, samples, WW, geometric=True)


def coarsen(rp: RoughPath, factor: int) -> RoughPath:
    """Chen-compose cells in groups of `factor`."""
    if rp.n % factor != 0:
        raise ValueError("cell count must be divisible by the coarsening factor")
    n = rp.n // factor
    W = rp.W[::factor]
    WW = np.empty((n, rp.d, rp.d))
    for k in range(n):
        WW[k] = rp.second(k * factor, (k + 1) * factor)
    return RoughPath(rp.gamma, Grid(rp.grid.t0, rp.grid.t1, n), W, WW,
                     geometric=rp.geometric)


def lift_brownian(seed: int, grid: Grid, d: int = 1, refinement: int = 16,
                  gamma: float = 0.45) -> RoughPath:
    """Stratonovich lift of a Brownian realisation, deterministic given seed.

    For d = 1 the second level is forced by geometricity, WW = (1/2) dW^2
    per cell.  For d > 1 the path is sampled on a grid refined by
    `refinement`, lifted as a piecewise-linear path and coarsened via Chen,
    so the Levy area carries the bias of the linear interpolant only.
    """
    if d < 1 or refinement < 1:
        raise ValueError("d and refinement must be positive")
    rng = np.random.default_rng(seed)
    if d == 1:
        dW = rng.normal(0.0, math.sqrt(grid.h), size=(grid.n, 1))
        W = np.vstack([np.zeros((1, 1)), np.cumsum(dW, axis=0)])
        WW = 0.5 * np.einsum("ka,kb->kab", dW, dW)
        return RoughPath(gamma, grid, W, WW, geometric=True)
    m = grid.n * refinement
    dW = rng.normal(0.0, math.sqrt(grid.h / refinement), size=(m, d))
    W = np.vstack([np.zeros((1, d)), np.cumsum(dW, axis=0)])
    fine = _piecewise_linear_lift(W, grid, gamma)
    return coarsen(fine, refinement)


def lift_fbm(seed: int, hurst: float, grid: Grid, dyadic_level: int = 3,
             gamma: float | None = None) -> RoughPath:
    """Exact-covariance fractional Brownian lift.

    Samples fBm at the grid refined dyadically by 2**dyadic_level via a
    Cholesky factor of the exact covariance, then lifts the piecewise-linear
    interpolant and coarsens via Chen.
    """
    if not (1 / 3 < hurst <= 1 / 2):
        raise ValueError("hurst must lie in (1/3, 1/2]")
    if gamma is None:
        gamma = min(hurst, 0.5) - 0.03 if hurst < 0.37 else min(hurst, 0.5)
        gamma = max(gamma, 1 / 3 + 1e-6)
    refinement = 2**dyadic_level
    m = grid.n * refinement
    t = (grid.nodes[-1] - grid.t0) * np.arange(1, m + 1) / m
    tt, ss = np.meshgrid(t, t, indexing="ij")
    cov = 0.5 * (tt ** (2 * hurst) + ss ** (2 * hurst) - np.abs(tt - ss) ** (2 * hurst))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceFactorizationError(m) from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(m)
    W = np.concatenate([[0.0], L @ z])[:, None]
    fine = _piecewise_linear_lift(W, grid, gamma)
    return coarsen(fine, refinement)


def shift(rp: RoughPath, tau: float) -> RoughPath:
    """Time shift: (Theta_tau W)_t = W_{t + tau} - W_tau on [t0-tau, t1-tau].

    The node samples are re-based so the path vanishes at its first node;
    all increments and second-level values agree with the shift definition.
    """
    if not (rp.grid.t0 <= tau <= rp.grid.t1):
        raise ValueError("tau must lie inside the stored window")
    rp.grid.index(tau)  # raises unless tau is grid-aligned
    grid = Grid(rp.grid.t0 - tau, rp.grid.t1 - tau, rp.grid.n)
    return RoughPath(rp.gamma, grid, rp.W, rp.WW, geometric=rp.geometric)


def restrict(rp: RoughPath, a: float, b: float) -> RoughPath:
    """Sub-path over the grid-aligned window [a, b], same time labels."""
    i, j = rp.grid.index(a), rp.grid.index(b)
    if i >= j:
        raise ValueError("window must contain at least one cell")
    grid = Grid(a, b, j - i)
    return RoughPath(rp.gamma, grid, rp.W[i:j + 1], rp.WW[i:j], geometric=rp.geometric)


def unit_block(rp: RoughPath, k: int) -> RoughPath:
    """The block of rp over [k, k+1], shifted to live on [0, 1]."""
    return restrict(shift(rp, float(k)), 0.0, 1.0)


def concat(rp1: RoughPath, rp2: RoughPath) -> RoughPath:
    """Glue two paths with rp1.t1 == rp2.t0 via Chen (cellwise storage)."""
    if not math.isclose(rp1.grid.t1, rp2.grid.t0, abs_tol=1e-12):
        raise ValueError("paths must be adjacent in time")
    if abs(rp1.grid.h - rp2.grid.h) > 1e-12:
        raise ValueError("paths must share the grid step")
    if rp1.gamma != rp2.gamma or rp1.d != rp2.d:
        raise ValueError("paths must share gamma and dimension")
    grid = Grid(rp1.grid.t0, rp2.grid.t1, rp1.n + rp2.n)
    W = np.vstack([rp1.W, rp1.W[-1] + rp2.W[1:]])
    WW = np.concatenate([rp1.WW, rp2.WW])
    return RoughPath(rp1.gamma, grid, W, WW,
                     geometric=rp1.geometric and rp2.geometric)


def distance(rp1: RoughPath, rp2: RoughPath) -> float:
    """Rough path distance: summed Hölder suprema of the level differences."""
    if rp1.grid != rp2.grid or rp1.gamma != rp2.gamma or rp1.d != rp2.d:
        raise ValueError("paths must share grid, gamma and dimension")
    dt = _pair_gaps(rp1.grid)
    ii, jj = _pair_index(rp1.n)
    dW = (rp1.W[jj] - rp1.W[ii]) - (rp2.W[jj] - rp2.W[ii])
    first = np.linalg.norm(dW, axis=1) / dt**rp1.gamma
    P1, P2 = rp1._prefix_second(), rp2._prefix_second()
    v1 = P1[jj] - P1[ii] - np.einsum("ka,kb->kab", rp1.W[ii], rp1.W[jj] - rp1.W[ii])
    v2 = P2[jj] - P2[ii] - np.einsum("ka,kb->kab", rp2.W[ii], rp2.W[jj] - rp2.W[ii])
    dWW = v1 - v2
    second = np.linalg.norm(dWW.reshape(dWW.shape[0], -1), axis=1) / dt ** (2 * rp1.gamma)
    return float(np.max(first) + np.max(second))


def validate(rp: RoughPath) -> dict:
    """Diagnostic report: Chen defect, geometry defect, Hölder seminorms."""
    chen = _chen_defect(rp)
    geometry = 0.0
    if rp.geometric:
        dW = np.diff(rp.W, axis=0)
        sym = 0.5 * (rp.WW + np.swapaxes(rp.WW, 1, 2))
        target = 0.5 * np.einsum("ka,kb->kab", dW, dW)
        geometry = float(np.max(np.abs(sym - target))) if rp.n else 0.0
    h1, h2 = rp.holder_norms()
    return {
        "chen_defect_max": chen,
        "geometry_defect_max": geometry,
        "holder_norm_1": h1,
        "holder_norm_2": h2,
    }


def _chen_defect(rp: RoughPath) -> float:
    """Max over node triples s < u < t of the Chen identity defect."""
    P = rp._prefix_second()
    worst = 0.0
    for u in range(1, rp.n):
        ii = np.arange(0, u)
        jj = np.arange(u + 1, rp.n + 1)
        if not len(ii) or not len(jj):
            continue
        # WW_{i,j} - WW_{i,u} - WW_{u,j} - W_{i,u} (x) W_{u,j} over the grid
        Wiu = rp.W[u] - rp.W[ii]          # (I, d)
        Wuj = rp.W[jj] - rp.W[u]          # (J, d)
        WWij = (P[jj][None, :] - P[ii][:, None]
                - np.einsum("ia,ijb->ijab", rp.W[ii], rp.W[jj][None, :] - rp.W[ii][:, None]))
        WWiu = P[u] - P[ii] - np.einsum("ia,ib->iab", rp.W[ii], Wiu)
        WWuj = P[jj] - P[u] - np.einsum("a,jb->jab", rp.W[u], Wuj)
        defect = WWij - WWiu[:, None] - WWuj[None, :] - np.einsum("ia,jb->ijab", Wiu, Wuj)
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst
