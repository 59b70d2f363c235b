"""Grids on [0,1]^d, covariance kernels, tapering weights, and lifts.

The continuous object is a covariance kernel k on [0,1]^d x [0,1]^d.  All
estimation happens on the endpoint-aligned uniform grid x_i = i/(L-1); the
discretized operator is the matrix C[i, j] = k(x_i, x_j) together with the
quadrature weight h = L^{-d} that converts matrix quantities to operator
quantities (operator norm = h * matrix norm, operator trace = h * trace).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import UsageError

__all__ = [
    "Grid",
    "SquaredExponential",
    "Matern",
    "Periodic",
    "Permuted",
    "PiecewiseConstant",
    "KernelSpec",
    "CovMatrix",
    "build_grid",
    "eval_kernel",
    "discretize",
    "fisher_yates_permutation",
    "kernel_label",
    "taper_weight",
    "taper_weight_sumform",
    "lift_matrix_norm_check",
]


# ---------------------------------------------------------------- grid ----


@dataclass(frozen=True)
class Grid:
    """Uniform endpoint-aligned grid on [0,1]^d.

    Point number i carries coordinates (i_1/(L-1), ..., i_d/(L-1)) where the
    multi-index (i_1, ..., i_d) runs in row-major order (last axis fastest).
    """

    d: int
    L: int
    points: np.ndarray  # (n, d) read-only float64

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def h(self) -> float:
        """Quadrature weight L^-d; h * n = 1 exactly in exact arithmetic."""
        return float(self.L) ** (-self.d)


def build_grid(d: int, L: int) -> Grid:
    """Build the uniform grid with L points per axis in d dimensions."""
    if d < 1:
        raise UsageError(f"grid dimension must be >= 1, got d={d}")
    if L < 2:
        raise UsageError(f"grid needs L >= 2 points per axis, got L={L}")
    n = int(L) ** int(d)  # exact Python integer, no silent overflow
    if n >= 2**63:
        raise UsageError(f"grid size L^d = {n} does not fit the int64 index type")
    axis = np.arange(L, dtype=np.float64) / (L - 1)
    if d == 1:
        pts = axis[:, None].copy()
    else:
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    pts.setflags(write=False)
    return Grid(d=d, L=L, points=pts)


# ------------------------------------------------------------- kernels ----


@dataclass(frozen=True)
class SquaredExponential:
    """k(x,y) = exp(-|x-y|^2 / (2 lengthscale^2))."""

    lengthscale: float

    def __post_init__(self) -> None:
        if not self.lengthscale > 0:
            raise UsageError(f"lengthscale must be > 0, got {self.lengthscale}")


_MATERN_SMOOTHNESS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class Matern:
    """Matern kernel at half-integer smoothness (closed forms, no Bessel)."""

    lengthscale: float
    smoothness: float = 1.5

    def __post_init__(self) -> None:
        if not self.lengthscale > 0:
            raise UsageError(f"lengthscale must be > 0, got {self.lengthscale}")
        if self.smoothness not in _MATERN_SMOOTHNESS:
            raise UsageError(
                f"matern smoothness must be one of {_MATERN_SMOOTHNESS}, "
                f"got {self.smoothness}"
            )


@dataclass(frozen=True)
class Periodic:
    """k(x,y) = exp(-2 sin^2(pi |x-y| / period) / lengthscale^2)."""

    lengthscale: float
    period: float

    def __post_init__(self) -> None:
        if not self.lengthscale > 0:
            raise UsageError(f"lengthscale must be > 0, got {self.lengthscale}")
        if not self.period > 0:
            raise UsageError(f"period must be > 0, got {self.period}")


@dataclass(frozen=True)
class Permuted:
    """Base kernel scrambled by a seeded permutation of the grid indices.

    This is an index-level notion: the matrix is B[pi, :][:, pi] for the
    discretized base matrix B, so there is no pointwise k(x, y) to evaluate.
    """

    base: "KernelSpec"
    seed: int

    def __post_init__(self) -> None:
        if isinstance(self.base, Permuted):
            raise UsageError("permutation of a permuted kernel is not allowed")


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """Lift of an M x M matrix to a kernel constant on M equal cells.

    The cells are realized as M equal blocks of consecutive grid indices
    (for d=1 these are exactly the intervals [c/M, (c+1)/M)); the grid must
    have L^d divisible by M so every cell holds the same number of points.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise UsageError(f"lift matrix must be square, got shape {v.shape}")
        if not np.array_equal(v, v.T):
            raise UsageError("lift matrix must be exactly symmetric")
        if not np.all(np.isfinite(v)):
            raise UsageError("lift matrix must be finite")
        eigs = np.linalg.eigvalsh(v)
        scale = float(np.max(np.abs(eigs))) if v.size else 0.0
        if eigs.size and eigs[0] < -1e-10 * scale:
            raise UsageError(
                f"lift matrix is not PSD: min eigenvalue {eigs[0]:.3e} "
                f"below -1e-10 * norm {scale:.3e}"
            )
        object.__setattr__(self, "values", v)

    @property
    def cells(self) -> int:
        return self.values.shape[0]


KernelSpec = Union[SquaredExponential, Matern, Periodic, Permuted, PiecewiseConstant]


def kernel_label(spec: KernelSpec) -> str:
    """Short stable name used in CSV columns and file names."""
    if isinstance(spec, SquaredExponential):
        return "se"
    if isinstance(spec, Matern):
        return "matern"
    if isinstance(spec, Periodic):
        return "periodic"
    if isinstance(spec, Permuted):
        return "permuted"
    if isinstance(spec, PiecewiseConstant):
        return "pwc"
    raise UsageError(f"unknown kernel spec {type(spec).__name__}")


# ------------------------------------------------------ kernel evaluation ----


def _matern_profile(r: np.ndarray, smoothness: float) -> np.ndarray:
    """Half-integer Matern correlation as a function of r = |x-y|/lengthscale."""
    if smoothness == 0.5:
        return np.exp(-r)
    if smoothness == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if smoothness == 2.5:
        s = np.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise UsageError(f"unsupported matern smoothness {smoothness}")


def _as_point(x, name: str) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if p.ndim != 1:
        raise UsageError(f"{name} must be a flat coordinate vector")
    return p


def _pwc_cell_of_point(x: float, M: int) -> int:
    # Cell c covers [c/M, (c+1)/M); the right endpoint 1.0 joins the last cell.
    return min(int(np.floor(x * M)), M - 1)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate k(x, y) for points x, y in [0,1]^d."""
    px = _as_point(x, "x")
    py = _as_point(y, "y")
    if px.shape != py.shape:
        raise UsageError(f"point shapes differ: {px.shape} vs {py.shape}")
    if isinstance(spec, Permuted):
        raise UsageError(
            "permuted kernels are index-level objects; use discretize, "
            "pointwise evaluation is undefined"
        )
    if isinstance(spec, PiecewiseConstant):
        if px.size != 1:
            raise UsageError("piecewise-constant lift evaluates points only for d=1")
        M = spec.cells
        return float(
            spec.values[_pwc_cell_of_point(px[0], M), _pwc_cell_of_point(py[0], M)]
        )
    dist = float(np.linalg.norm(px - py))
    if isinstance(spec, SquaredExponential):
        lam = spec.lengthscale
        return float(np.exp(-(dist * dist) / (2.0 * lam * lam)))
    if isinstance(spec, Matern):
        return float(_matern_profile(np.float64(dist / spec.lengthscale), spec.smoothness))
    if isinstance(spec, Periodic):
        s = np.sin(np.pi * dist / spec.period)
        return float(np.exp(-2.0 * s * s / (spec.lengthscale**2)))
    raise UsageError(f"unknown kernel spec {type(spec).__name__}")


# -------------------------------------------------------- discretization ----


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric matrix of kernel values at grid points plus the grid weight."""

    entries: np.ndarray
    grid_h: float

    def __post_init__(self) -> None:
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise UsageError(f"covariance matrix must be square, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise UsageError("covariance matrix has non-finite entries")
        if not np.array_equal(e, e.T):
            raise UsageError("covariance matrix must be exactly symmetric")
        if not self.grid_h > 0:
            raise UsageError(f"grid weight must be > 0, got {self.grid_h}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def fisher_yates_permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates shuffle of range(n) from a counter-based generator.

    The downward swap order is part of the reproducibility contract: the
    same (n, seed) gives the same permutation on every platform.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _pairwise_sqdist(points: np.ndarray) -> np.ndarray:
    # Accumulate per axis: keeps peak memory at one (n, n) block and makes the
    # result bitwise symmetric (each term is a product of exact negations).
    n = points.shape[0]
    d2 = np.zeros((n, n), dtype=np.float64)
    for k in range(points.shape[1]):
        diff = points[:, k][:, None] - points[:, k][None, :]
        d2 += diff * diff
    return d2


def _pwc_cells_for_grid(M: int, n: int) -> np.ndarray:
    if n % M != 0:
        raise UsageError(
            f"piecewise-constant lift needs the cell count to divide the grid: "
            f"L^d = {n} is not a multiple of M = {M}"
        )
    return np.repeat(np.arange(M, dtype=np.int64), n // M)


def discretize(spec: KernelSpec, grid: Grid) -> CovMatrix:
    """Evaluate the kernel on all grid point pairs.

    The output is exactly symmetric: every construction path below computes
    entry (i, j) and entry (j, i) from bitwise-identical expressions.
    """
    if isinstance(spec, Permuted):
        base = discretize(spec.base, grid)
        perm = fisher_yates_permutation(grid.n, spec.seed)
        return CovMatrix(entries=base.entries[np.ix_(perm, perm)], grid_h=grid.h)
    if isinstance(spec, PiecewiseConstant):
        cells = _pwc_cells_for_grid(spec.cells, grid.n)
        return CovMatrix(entries=spec.values[np.ix_(cells, cells)], grid_h=grid.h)
    d2 = _pairwise_sqdist(grid.points)
    if isinstance(spec, SquaredExponential):
        lam = spec.lengthscale
        entries = np.exp(-d2 / (2.0 * lam * lam))
    elif isinstance(spec, Matern):
        entries = _matern_profile(np.sqrt(d2) / spec.lengthscale, spec.smoothness)
    elif isinstance(spec, Periodic):
        s = np.sin(np.pi * np.sqrt(d2) / spec.period)
        entries = np.exp(-2.0 * s * s / (spec.lengthscale**2))
    else:
        raise UsageError(f"unknown kernel spec {type(spec).__name__}")
    return CovMatrix(entries=entries, grid_h=grid.h)


# ------------------------------------------------------------- tapering ----


def taper_weight(kappa: float, x, y) -> float:
    """Flat-top taper: 1 within kappa, linear ramp to 0 at 2*kappa, per axis."""
    if not kappa > 0:
        raise UsageError(f"taper radius must be > 0, got {kappa}")
    px = _as_point(x, "x")
    py = _as_point(y, "y")
    if px.shape != py.shape:
        raise UsageError(f"point shapes differ: {px.shape} vs {py.shape}")
    t = np.abs(px - py)
    w = np.clip((2.0 * kappa - t) / kappa, 0.0, 1.0)
    return float(np.prod(w))


def taper_weight_sumform(kappa: float, x, y) -> float:
    """Signed-sum form of the taper: kappa^-d sum over sigma in {1,2}^d."""
    if not kappa > 0:
        raise UsageError(f"taper radius must be > 0, got {kappa}")
    px = _as_point(x, "x")
    py = _as_point(y, "y")
    if px.shape != py.shape:
        raise UsageError(f"point shapes differ: {px.shape} vs {py.shape}")
    t = np.abs(px - py)
    d = t.size
    total = 0.0
    for sigma in itertools.product((1, 2), repeat=d):
        sign = -1.0 if sum(sigma) % 2 else 1.0
        term = 1.0
        for s_i, t_i in zip(sigma, t):
            term *= max(s_i * kappa - t_i, 0.0)
        total += sign * term
    return total / kappa**d


def taper_weight_matrix(kappa: float, grid: Grid) -> np.ndarray:
    """All-pairs taper weights on a grid, one (n, n) block per axis."""
    if not kappa > 0:
        raise UsageError(f"taper radius must be > 0, got {kappa}")
    n = grid.n
    w = np.ones((n, n), dtype=np.float64)
    for k in range(grid.d):
        t = np.abs(grid.points[:, k][:, None] - grid.points[:, k][None, :])
        w *= np.clip((2.0 * kappa - t) / kappa, 0.0, 1.0)
    return w


# ------------------------------------------------------------ lift check ----


def lift_matrix_norm_check(Sigma: np.ndarray, grid: Grid) -> tuple[float, float, float]:
    """Check the lift identity: operator norm of the lifted kernel = |Sigma|/M.

    Returns (lifted operator norm, |Sigma|/M, relative difference).  Exact on
    aligned grids because cell indicators are exactly representable there.
    """
    spec = PiecewiseConstant(values=np.asarray(Sigma, dtype=np.float64))
    M = spec.cells
    lifted = discretize(spec, grid)
    lift_norm = grid.h * float(np.max(np.abs(np.linalg.eigvalsh(lifted.entries))))
    block_norm = float(np.max(np.abs(np.linalg.eigvalsh(spec.values)))) / M
    denom = max(abs(block_norm), np.finfo(np.float64).tiny)
    return lift_norm, block_norm, abs(lift_norm - block_norm) / denom
