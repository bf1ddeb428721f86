"""Spectral data of the linear trap operator and of solver Jacobians.

The linear operator A = (-Lap)^s + |x|^2 has compact resolvent on the
truncated domain; its bottom eigenpair anchors the admissible lambda range.
Jacobian edge data (leftmost eigenvalues, nondegeneracy margin) feed the
continuation and homotopy monitors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg, eigsh, lobpcg, minres

from .core import (
    Field,
    Grid,
    GridError,
    fractional_multiplier,
    gaussian,
    window_fractional_apply,
    window_kernel_1d,
)
from .errors import NonConvergenceError
from .model import ModelParams, nonlinearity_derivative

OUTER_ITERATION_CAP = 500
INNER_CG_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenvalue with its L^2-normalized eigenvector (positive at the origin node)."""

    value: float
    vector: Field


def linear_apply(grid: Grid, s: float, values: np.ndarray) -> np.ndarray:
    """A v = (-Lap)^s v + |x|^2 v on grid-shaped real arrays."""
    return window_fractional_apply(grid, s, values) + grid.xsq * values


def linear_operator(grid: Grid, s: float, shift: float = 0.0) -> LinearOperator:
    """(A + shift) as a flat LinearOperator."""
    shape = grid.shape

    def matvec(x: np.ndarray) -> np.ndarray:
        v = x.reshape(shape)
        return (linear_apply(grid, s, v) + shift * v).ravel()

    n = grid.size
    return LinearOperator((n, n), matvec=matvec, dtype=np.float64)


def spectral_preconditioner(grid: Grid, s: float, shift: float = 1.0) -> LinearOperator:
    """Inverse of (-Lap)^s + shift, diagonal in Fourier space; SPD for shift > 0."""
    mult = fractional_multiplier(grid, s) + shift
    shape = grid.shape

    def matvec(x: np.ndarray) -> np.ndarray:
        return grid.ifft(grid.fft(x.reshape(shape)) / mult).real.ravel()

    n = grid.size
    return LinearOperator((n, n), matvec=matvec, dtype=np.float64)


def _grid_norm(grid: Grid, arr: np.ndarray) -> float:
    return float(np.sqrt(np.sum(arr * arr) * grid.weight))


def _fix_sign(grid: Grid, v: np.ndarray) -> np.ndarray:
    origin = (grid.M // 2,) * grid.N
    if v[origin] < 0:
        return -v
    return v


def lowest_eigenpairs(s: float, grid: Grid, k: int = 1, tol: float = 1e-10) -> list[EigenPair]:
    """The k lowest eigenpairs of A by inverse iteration with CG inner solves.

    Deflation against already-converged eigenvectors keeps the iteration on
    successive eigenspaces. Residual tolerance is in the grid L^2 norm.
    """
    op = linear_operator(grid, s)
    pre = spectral_preconditioner(grid, s, shift=1.0)
    w = grid.weight
    pairs: list[EigenPair] = []
    basis: list[np.ndarray] = []

    for j in range(k):
        # trap-adapted seed per level: gaussian times x^j has the right parity
        seed = gaussian(grid, width=1.0).values
        if j > 0:
            axis = grid.axis_nodes if grid.N == 1 else grid.axis_nodes[:, None]
            seed = seed * axis**j
        v = seed.ravel()
        v = v / _grid_norm(grid, v)

        converged = False
        for _ in range(OUTER_ITERATION_CAP):
            for b in basis:
                v = v - (np.sum(b * v) * w) * b
            rhs = v
            x, info = cg(op, rhs, M=pre, rtol=INNER_CG_RTOL, atol=0.0, maxiter=5000)
            if info != 0:
                raise NonConvergenceError(f"inner CG failed to converge (info={info})")
            for b in basis:
                x = x - (np.sum(b * x) * w) * b
            v = x / _grid_norm(grid, x)
            av = op @ v
            theta = float(np.sum(v * av) * w)
            residual = _grid_norm(grid, av - theta * v)
            if residual <= tol:
                converged = True
                break
        if not converged:
            raise NonConvergenceError(
                f"eigen iteration for level {j} exceeded {OUTER_ITERATION_CAP} iterations"
            )
        v = _fix_sign(grid, v.reshape(grid.shape)).ravel()
        basis.append(v)
        pairs.append(EigenPair(value=theta, vector=Field(grid, v.copy())))
    return pairs


@lru_cache(maxsize=128)
def _ground_eigenpair_cached(s: float, grid: Grid) -> EigenPair:
    return lowest_eigenpairs(s, grid, k=1)[0]


def ground_eigenpair(s: float, grid: Grid) -> EigenPair:
    """Bottom eigenpair of (-Lap)^s + |x|^2 on the grid; cached per (s, grid)."""
    return _ground_eigenpair_cached(float(s), grid)


_DENSE_FRACTIONAL_CACHE: dict[tuple[Grid, float], np.ndarray] = {}

DENSE_M_LIMIT = 512


def dense_fractional_matrix(grid: Grid, s: float) -> np.ndarray:
    """Dense Toeplitz matrix of the window-exact (-Lap)^s (N=1, M <= 512); cached."""
    if grid.N != 1:
        raise GridError("dense operator is restricted to N=1")
    if grid.M > DENSE_M_LIMIT:
        raise GridError(f"size-limit: dense operator needs M <= {DENSE_M_LIMIT}")
    key = (grid, float(s))
    mat = _DENSE_FRACTIONAL_CACHE.get(key)
    if mat is None:
        c = window_kernel_1d(grid.M, s)[: grid.M] * grid.h ** (-2.0 * s)
        mat = scipy.linalg.toeplitz(c)
        mat.setflags(write=False)
        _DENSE_FRACTIONAL_CACHE[key] = mat
    return mat


def dense_operator_matrix(grid: Grid, s: float, symmetrize: bool = True) -> np.ndarray:
    """Dense matrix of A = (-Lap)^s + |x|^2, symmetrized as (B + B^T)/2.

    Serves as the small-grid oracle for the matrix-free eigensolver; the raw
    asymmetry before symmetrization is pure rounding (here the Toeplitz
    construction is exactly symmetric).
    """
    mat = dense_fractional_matrix(grid, s) + np.diag(grid.xsq)
    if symmetrize:
        mat = 0.5 * (mat + mat.T)
    return mat


def jacobian_operator(u: Field, params: ModelParams) -> LinearOperator:
    """Jacobian of the Euler-Lagrange residual at u as a flat LinearOperator."""
    grid = u.grid
    s = params.s
    diag = grid.xsq - params.lam - nonlinearity_derivative(u.values, params.q)
    shape = grid.shape

    def matvec(x: np.ndarray) -> np.ndarray:
        v = x.reshape(shape)
        return (window_fractional_apply(grid, s, v) + diag * v).ravel()

    n = grid.size
    return LinearOperator((n, n), matvec=matvec, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SpectrumEdges:
    """Edge data of the Jacobian spectrum at a state.

    min_eig is the most negative eigenvalue, min_abs_eig the smallest
    magnitude among the leftmost eigenvalues (the nondegeneracy margin),
    morse_index_le2 the number of negative eigenvalues capped at 2.
    """

    min_eig: float
    min_abs_eig: float
    morse_index_le2: int
    eigenvalues: tuple[float, ...]
    vectors: np.ndarray | None = field(default=None, repr=False, compare=False)


def _default_edge_block(u: Field, k: int) -> np.ndarray:
    """Deterministic initial block: the state itself plus low trap modes."""
    grid = u.grid
    g = gaussian(grid, width=1.0).values
    axis = grid.axis_nodes if grid.N == 1 else grid.axis_nodes[:, None]
    cols = [g, axis * g, (grid.xsq - 0.5) * g, axis**3 * g]
    uv = u.values
    if np.max(np.abs(uv)) > 0:
        cols.insert(0, uv)  # at a ground state this spans the negative direction
    X = np.stack([c.ravel() for c in cols[:k]], axis=1)
    q, _ = np.linalg.qr(X)
    return q[:, :k]


def jacobian_spectrum_edges(
    u: Field,
    params: ModelParams,
    warm: np.ndarray | None = None,
    k: int = 3,
) -> SpectrumEdges:
    """Leftmost Jacobian eigenvalues plus a shift-invert polish of the interior edge.

    The k leftmost eigenvalues come from preconditioned LOBPCG (warm-startable
    along a continuation); the smallest-|value| candidate is refined by one
    inverse-iteration step with a MINRES solve so the nondegeneracy margin is
    trustworthy even when it is small. Falls back to Lanczos (ARPACK) if the
    block iteration stalls.
    """
    grid = u.grid
    op = jacobian_operator(u, params)
    pre = spectral_preconditioner(grid, params.s, shift=1.0 + abs(params.lam))

    if warm is not None and warm.shape == (grid.size, k):
        X = np.linalg.qr(warm)[0]
    else:
        X = _default_edge_block(u, k)

    vals = vecs = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # lobpcg warns instead of raising
        try:
            vals, vecs = lobpcg(op, X, M=pre, largest=False, tol=1e-7, maxiter=300)
        except Exception:
            vals = None
    if vals is None or not np.all(np.isfinite(vals)):
        v0 = gaussian(grid, width=1.0).values.ravel()
        vals, vecs = eigsh(op, k=k, which="SA", v0=v0, maxiter=10000)

    order = np.argsort(vals)
    vals = np.asarray(vals)[order]
    vecs = np.asarray(vecs)[:, order]

    idx = int(np.argmin(np.abs(vals)))
    refined = _shift_invert_refine(op, pre, vecs[:, idx], grid)
    if refined is not None and abs(refined) <= abs(vals[idx]) * (1.0 + 1e-6):
        interior = refined
    else:
        interior = float(vals[idx])

    negatives = int(np.sum(vals < 0.0))
    return SpectrumEdges(
        min_eig=float(vals[0]),
        min_abs_eig=abs(interior),
        morse_index_le2=min(2, negatives),
        eigenvalues=tuple(float(v) for v in vals),
        vectors=vecs,
    )


def _shift_invert_refine(
    op: LinearOperator, pre: LinearOperator, v: np.ndarray, grid: Grid
) -> float | None:
    """One inverse-iteration step at shift 0: solve J y = v, Rayleigh quotient of y."""
    y, info = minres(op, v, M=pre, rtol=1e-10, maxiter=2000)
    if info != 0:
        return None
    ny = np.linalg.norm(y)
    if not np.isfinite(ny) or ny == 0.0:
        return None
    y = y / ny
    return float(np.dot(y, op @ y))
