"""Ground-state solver: Nehari-quotient minimization, rescale, Newton polish.

The positive ground state at fixed (N, s, q, lambda), lambda < lambda_1, is
computed operationally as the minimizer of the Nehari quotient

    R(u) = (K + P - lambda*mass) / Q^(2/q)

followed by the Nehari rescale c^(q-2) = (K + P - lambda*mass)/Q (the unique
critical point of t -> Phi(t u) on the ray) and a Newton iteration on the
Euler-Lagrange residual, which is the accuracy authority.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import cg, minres

from .core import (
    Field,
    Grid,
    check_state_candidate,
    default_half_width,
    gaussian,
    make_grid,
    resample,
    window_fractional_apply,
    window_kinetic,
)
from .errors import NonConvergenceError, PositivityError, RegimeError
from .model import (
    ModelParams,
    action_from_observables,
    identity_residuals,
    nonlinearity,
    nonlinearity_derivative,
)
from .spectrum import (
    SpectrumEdges,
    dense_fractional_matrix,
    ground_eigenpair,
    jacobian_operator,
    jacobian_spectrum_edges,
    spectral_preconditioner,
)
from .core import observables as compute_observables

LAMBDA_MARGIN = 1e-6

# Resolution rule: the ground state develops a core whose inverse width
# scales like beta = (peak^(q-2) + lambda_1 - lambda)^(1/(2s)); identity
# residuals fall below ~1e-6 once the spectral cutoff pi*M/(2L) exceeds
# RESOLUTION_FACTOR * beta (calibrated by refinement at s = 0.5, q = 6).
# States at s = 1 have exponentially decaying spectra and need less headroom,
# but Gaussian tails demand the full half-width formula; for s < 1 window
# truncation and core resolution trade off, so L shrinks with -lambda.
RESOLUTION_FACTOR = 20.0
RESOLUTION_FACTOR_S1 = 14.0
AMPLITUDE_PREFACTOR = 7.0  # default peak^(q-2) guess before a solution exists
_MAX_HALF_WIDTH = 16.0
# quantized half-widths so continuation reuses grids (and their cached kernels)
_L_LADDER = tuple(float(_MAX_HALF_WIDTH * 0.82**k) for k in range(15))


def inner_scale(params: ModelParams, lam1: float, peak: float | None = None) -> float:
    """Estimated inverse core width of the ground state at these parameters."""
    if peak is not None:
        amp = peak ** (params.q - 2.0)
    else:
        amp = AMPLITUDE_PREFACTOR * max(1.0, lam1 - params.lam)
    return float((amp + lam1 - params.lam) ** (1.0 / (2.0 * params.s)))


def recommended_grid(
    params: ModelParams,
    lam1_hint: float | None = None,
    peak_hint: float | None = None,
) -> Grid:
    """Default grid for one solve at these parameters.

    For s = 1 the states decay like Gaussians and the half-width formula
    dominates. For s < 1 the core sharpens rapidly with -lambda while the
    algebraic tails are suppressed by (|x|^2 + |lambda|), so the window
    shrinks with lambda to keep the spectral cutoff above the core scale.
    """
    lam1 = lam1_hint if lam1_hint is not None else float(params.N)
    beta = inner_scale(params, lam1, peak_hint)
    if params.s == 1.0:
        L = default_half_width(params.lam, lam1) if params.N == 1 else max(
            8.0, 0.75 * default_half_width(params.lam, lam1)
        )
        sizes = (512, 1024, 2048, 4096) if params.N == 1 else (128, 256, 512)
        for M in sizes:
            if np.pi * M / (2.0 * L) >= RESOLUTION_FACTOR_S1 * beta:
                return make_grid(params.N, L, M)
        return make_grid(params.N, L, sizes[-1])
    if params.N == 2:
        return make_grid(2, 12.0, 128)
    for M in (1024, 2048, 4096):
        widest = np.pi * M / (2.0 * RESOLUTION_FACTOR * beta)
        if widest >= _MAX_HALF_WIDTH:
            return make_grid(1, _MAX_HALF_WIDTH, M)
    target = np.pi * 4096 / (2.0 * RESOLUTION_FACTOR * beta)
    ladder = [L for L in _L_LADDER if L <= target]
    L = ladder[0] if ladder else _L_LADDER[-1]
    return make_grid(1, L, 4096)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10              # Newton target on ||F||_2
    stage1_max: int = 2000
    stage1_rel_tol: float = 1e-12   # relative quotient decrease cutoff
    newton_max: int = 40
    krylov_rtol_floor: float = 1e-13
    dense_limit: int = 512          # dense Newton solves allowed for N=1, M <= this
    compute_edges: bool = True
    restart_widths: tuple[float, ...] = (1.0, 0.5, 0.25)


@dataclass(frozen=True)
class SolverLog:
    converged: bool
    stage1_iters: int
    newton_iters: int
    residual_history: tuple[float, ...]
    quotient: float
    warm_start: bool
    restarts: int
    boundary_ratio: float
    spectral_tail: float
    quad_fit: float  # max f_{k+1}/f_k^2 over the late Newton steps, NaN if too few
    notes: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class GroundState:
    u: Field
    params: ModelParams
    observables: object
    action: float
    identity_report: object
    residual_norm: float
    spectrum_edges: SpectrumEdges | None
    solver_log: SolverLog

    @property
    def mass(self) -> float:
        return self.observables.mass


class _Workspace:
    """Precomputed pieces for one (params, grid) solve family."""

    def __init__(self, params: ModelParams, grid: Grid):
        self.params = params
        self.grid = grid
        self.s = params.s
        self.q = params.q
        self.lam = params.lam
        self.xsq = grid.xsq
        self.weight = grid.weight

    def norm(self, arr: np.ndarray) -> float:
        return float(np.sqrt(np.sum(arr * arr) * self.weight))

    def apply_linear(self, arr: np.ndarray) -> np.ndarray:
        return window_fractional_apply(self.grid, self.s, arr) + self.xsq * arr

    def quadratic_form(self, arr: np.ndarray) -> float:
        """a(u) = K + P - lambda*mass."""
        K = window_kinetic(self.grid, self.s, arr)
        pm = float(np.sum((self.xsq - self.lam) * arr * arr) * self.weight)
        return K + pm

    def power_integral(self, arr: np.ndarray) -> float:
        return float(np.sum(np.abs(arr) ** self.q) * self.weight)

    def residual(self, arr: np.ndarray) -> tuple[np.ndarray, float]:
        r = self.apply_linear(arr) - self.lam * arr - nonlinearity(arr, self.q)
        return r, self.norm(r)

    def quotient(self, arr: np.ndarray) -> float:
        b = self.power_integral(arr)
        if b <= 0.0:
            return np.inf
        return self.quadratic_form(arr) / b ** (2.0 / self.q)


def _stage1_minimize(ws: _Workspace, w0: np.ndarray, opts: SolverOptions) -> tuple[np.ndarray, int, float]:
    """Projected preconditioned gradient descent on the Nehari quotient.

    Iterates are L^2-normalized (the quotient is scale invariant); the descent
    direction is preconditioned by (A - lambda + 1)^-1, applied by CG with a
    Fourier-diagonal preconditioner of its own.
    """
    grid, lam = ws.grid, ws.lam
    n = grid.size
    shape = grid.shape

    def shifted_apply(x: np.ndarray) -> np.ndarray:
        v = x.reshape(shape)
        return (ws.apply_linear(v) + (1.0 - lam) * v).ravel()

    from scipy.sparse.linalg import LinearOperator

    op = LinearOperator((n, n), matvec=shifted_apply, dtype=np.float64)
    pre = spectral_preconditioner(grid, ws.s, shift=1.0 + abs(lam))

    w = w0 / ws.norm(w0)
    R = ws.quotient(w)
    it = 0
    for it in range(1, opts.stage1_max + 1):
        a = ws.quadratic_form(w)
        b = ws.power_integral(w)
        g = ws.apply_linear(w) - lam * w - (a / b) * nonlinearity(w, ws.q)
        d, info = cg(op, g.ravel(), M=pre, rtol=1e-8, atol=0.0, maxiter=500)
        if info != 0:
            d = g.ravel()  # fall back to the raw gradient
        d = d.reshape(shape)
        tau = 1.0
        R_new, w_new = None, None
        for _ in range(10):
            cand = w - tau * d
            nc = ws.norm(cand)
            if nc > 0:
                cand = cand / nc
                Rc = ws.quotient(cand)
                if Rc < R:
                    R_new, w_new = Rc, cand
                    break
            tau *= 0.5
        if R_new is None:
            break  # stationary to line-search resolution
        drop = (R - R_new) / max(abs(R), 1e-300)
        w, R = w_new, R_new
        if drop < opts.stage1_rel_tol:
            break
    return w, it, R


def _nehari_rescale(ws: _Workspace, w: np.ndarray) -> np.ndarray:
    """Scale to the Nehari manifold: c^(q-2) = a(w)/b(w)."""
    a = ws.quadratic_form(w)
    b = ws.power_integral(w)
    if not (a > 0.0 and b > 0.0):
        raise NonConvergenceError("degenerate profile in Nehari rescale")
    c = (a / b) ** (1.0 / (ws.q - 2.0))
    return c * w


def _newton_solve_linear(ws: _Workspace, u: np.ndarray, rhs: np.ndarray, fn: float, opts: SolverOptions) -> np.ndarray:
    grid = ws.grid
    if grid.N == 1 and grid.M <= opts.dense_limit:
        J = dense_fractional_matrix(grid, ws.s) + np.diag(
            ws.xsq - ws.lam - nonlinearity_derivative(u, ws.q)
        )
        return scipy.linalg.solve(J, rhs, assume_a="sym")
    op = jacobian_operator(Field(grid, u), replace(ws.params))
    pre = spectral_preconditioner(grid, ws.s, shift=1.0 + abs(ws.lam))
    rtol = min(1e-4, max(opts.krylov_rtol_floor, 0.03 * fn))
    sol, info = minres(op, rhs.ravel(), M=pre, rtol=rtol, maxiter=4000)
    if info != 0:
        raise NonConvergenceError(f"Krylov Newton solve stalled (info={info})")
    return sol.reshape(grid.shape)


def _newton(ws: _Workspace, u0: np.ndarray, opts: SolverOptions) -> tuple[np.ndarray, list[float], bool]:
    u = u0
    r, fn = ws.residual(u)
    history = [fn]
    converged = fn <= opts.tol
    for _ in range(opts.newton_max):
        if fn <= opts.tol:
            converged = True
            break
        try:
            delta = _newton_solve_linear(ws, u, r, fn, opts)
        except NonConvergenceError:
            break
        tau = 1.0
        improved = False
        for _ in range(8):
            cand = u - tau * delta
            rc, fc = ws.residual(cand)
            if fc < fn:
                u, r, fn = cand, rc, fc
                history.append(fn)
                improved = True
                break
            tau *= 0.5
        if not improved:
            break  # stagnation; caller decides what to do
    else:
        converged = fn <= opts.tol
    return u, history, converged or fn <= opts.tol


def _quad_fit(history: list[float]) -> float:
    """max f_{k+1}/f_k^2 over the last steps with f_k above the rounding floor."""
    ratios = [
        b / a**2
        for a, b in zip(history[:-1], history[1:])
        if a >= 1e-9 and b > 0.0
    ]
    if not ratios:
        return float("nan")
    return float(max(ratios[-3:]))


def _sign_fix(arr: np.ndarray) -> np.ndarray:
    return -arr if abs(arr.min()) > arr.max() else arr


def _is_positive(arr: np.ndarray) -> bool:
    peak = np.max(np.abs(arr))
    if peak == 0.0:
        return False
    significant = np.abs(arr) > 1e-10 * peak
    return bool(np.all(arr[significant] > 0.0))


def check_lambda_admissible(params: ModelParams, grid: Grid) -> float | None:
    """lambda must sit below lambda_1 by a margin.

    Returns lambda_1 when it had to be computed. For lambda < 0 the check is
    free: the operator is positive semidefinite, so lambda_1 >= 0.
    """
    if not (2.0 < params.q < params.q_upper):
        raise RegimeError(
            f"q={params.q} outside the admissible range (2, {params.q_upper})"
        )
    if params.lam < -LAMBDA_MARGIN:
        return None
    lam1 = ground_eigenpair(params.s, grid).value
    if not params.lam < lam1 - LAMBDA_MARGIN:
        raise RegimeError(
            f"lambda-above-threshold: lambda={params.lam} must be < lambda_1-{LAMBDA_MARGIN} "
            f"(lambda_1={lam1:.12g})"
        )
    return lam1


def _ladder_grids(grid: Grid) -> list[Grid]:
    """Coarse-to-fine rungs (same half-width) for cold solves on big 1D grids."""
    if grid.N != 1 or grid.M <= 1024:
        return [grid]
    rungs = []
    m = 1024
    while m < grid.M:
        rungs.append(make_grid(1, grid.L, m))
        m *= 2
    rungs.append(grid)
    return rungs


def _cold_solve(
    params: ModelParams,
    grid: Grid,
    width: float,
    center,
    opts: SolverOptions,
) -> tuple[np.ndarray, list[float], bool, int, float]:
    """Full pipeline: stage 1 on the coarsest rung, Newton refinement upward."""
    rungs = _ladder_grids(grid)
    u = None
    history: list[float] = []
    stage1_iters, quotient = 0, np.nan
    converged = False
    for i, g in enumerate(rungs):
        ws = _Workspace(params, g)
        if i == 0:
            w0 = gaussian(g, width=width, center=center).values
            w, stage1_iters, quotient = _stage1_minimize(ws, w0, opts)
        else:
            w = resample(Field(rungs[i - 1], u), g).values
        u0 = _nehari_rescale(ws, w)
        u, hist, converged = _newton(ws, u0, opts)
        history.extend(hist)
    return u, history, converged, stage1_iters, quotient


def solve_ground_state(
    params: ModelParams,
    grid: Grid | None = None,
    opts: SolverOptions | None = None,
    initial: Field | None = None,
) -> GroundState:
    """Positive ground state at fixed parameters.

    With `initial` given (warm start), stage 1 is skipped: the profile is
    resampled if needed, Nehari-rescaled, and polished by Newton; on failure
    the solver falls back to the full cold pipeline. Cold solves run stage 1
    on a coarse rung and refine by Newton on doubled grids (the s < 1 states
    need fine grids that gradient descent should not pay for). Positivity
    failures trigger restarts from tighter Gaussians before giving up.
    """
    opts = opts or SolverOptions()
    if grid is None:
        grid = recommended_grid(params)
    check_lambda_admissible(params, grid)
    ws = _Workspace(params, grid)
    notes: list[str] = []

    best: tuple | None = None
    restarts = -1
    warm_starts: list[Field] = []
    if initial is not None:
        warm_starts.append(initial if initial.grid == grid else resample(initial, grid))

    for attempt in range(len(warm_starts) + len(opts.restart_widths)):
        restarts += 1
        warm = attempt < len(warm_starts)
        try:
            if warm:
                u0 = _nehari_rescale(ws, warm_starts[attempt].values)
                u, history, converged = _newton(ws, u0, opts)
                stage1_iters, quotient = 0, np.nan
            else:
                width = opts.restart_widths[attempt - len(warm_starts)]
                u, history, converged, stage1_iters, quotient = _cold_solve(
                    params, grid, width, 0.0, opts
                )
        except NonConvergenceError as exc:
            notes.append(f"attempt failed: {exc}")
            continue
        u = _sign_fix(u)
        positive = _is_positive(u)
        result = (u, history, converged, stage1_iters, quotient, warm)
        if converged and positive:
            best = result
            break
        if not positive:
            notes.append("positivity violation; restarting from a tighter start")
        else:
            notes.append(f"Newton stalled at ||F||={history[-1]:.3e}; restarting")
        if best is None or history[-1] < best[1][-1]:
            best = result

    if best is None:
        raise NonConvergenceError("no usable iterate produced")
    u, history, converged, stage1_iters, quotient, warm = best
    positive = _is_positive(u)
    if converged and not positive:
        raise PositivityError(
            "solver repeatedly converged to sign-changing states; "
            "likely an excited state at these parameters"
        )

    field_u = Field(grid, u)
    trunc = check_state_candidate(field_u, warn=False)
    obs = compute_observables(field_u, params)
    report = identity_residuals(field_u, params)
    edges = jacobian_spectrum_edges(field_u, params) if opts.compute_edges else None
    log = SolverLog(
        converged=bool(converged),
        stage1_iters=stage1_iters,
        newton_iters=max(0, len(history) - 1),
        residual_history=tuple(history),
        quotient=float(quotient),
        warm_start=warm,
        restarts=restarts,
        boundary_ratio=trunc.boundary_ratio,
        spectral_tail=trunc.spectral_tail,
        quad_fit=_quad_fit(history),
        notes=tuple(notes),
    )
    return GroundState(
        u=field_u,
        params=params,
        observables=obs,
        action=action_from_observables(obs, params),
        identity_report=report,
        residual_norm=history[-1],
        spectrum_edges=edges,
        solver_log=log,
    )


def align_sign(reference: Field, other: Field) -> Field:
    """Flip `other` if it is anti-aligned with `reference` in L^2."""
    ip = float(np.sum(reference.values * other.values))
    return Field(other.grid, -other.values) if ip < 0 else other


def l2_distance(a: Field, b: Field) -> float:
    return Field(a.grid, a.values - b.values).l2_norm()


@dataclass(frozen=True)
class UniquenessReport:
    """Multi-start evidence for (or against) ground-state uniqueness."""

    n_starts: int
    seed: int
    max_pairwise_distance: float
    masses: tuple[float, ...]
    failures: tuple[tuple[int, str], ...]
    logs: tuple[SolverLog, ...]
    solutions: tuple[GroundState, ...] = field(repr=False, default=())


def _worker_count() -> int:
    raw = os.environ.get("FRACGS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def uniqueness_probe(
    params: ModelParams,
    grid: Grid,
    n_starts: int,
    seed: int,
    opts: SolverOptions | None = None,
) -> UniquenessReport:
    """Solve from randomized positive bumps and report the max pairwise distance.

    Starts are Gaussians with width in [0.3, 3] and center in [-L/4, L/4]^N,
    drawn from a seeded generator; results are merged by start index so the
    report is deterministic regardless of the worker count (FRACGS_THREADS).
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed)
    start_specs = []
    for _ in range(n_starts):
        width = rng.uniform(0.3, 3.0)
        center = tuple(rng.uniform(-grid.L / 4.0, grid.L / 4.0, size=grid.N))
        start_specs.append((width, center))

    def run(idx: int) -> GroundState:
        check_lambda_admissible(params, grid)
        width, center = start_specs[idx]
        u, history, converged, it1, quot = _cold_solve(params, grid, width, center, opts)
        u = _sign_fix(u)
        if not (converged and _is_positive(u)):
            raise NonConvergenceError(
                f"start {idx}: ||F||={history[-1]:.3e}, positive={_is_positive(u)}"
            )
        fu = Field(grid, u)
        trunc = check_state_candidate(fu, warn=False)
        obs = compute_observables(fu, params)
        log = SolverLog(
            converged=True,
            stage1_iters=it1,
            newton_iters=len(history) - 1,
            residual_history=tuple(history),
            quotient=float(quot),
            warm_start=False,
            restarts=0,
            boundary_ratio=trunc.boundary_ratio,
            spectral_tail=trunc.spectral_tail,
            quad_fit=_quad_fit(history),
        )
        return GroundState(
            u=fu,
            params=params,
            observables=obs,
            action=action_from_observables(obs, params),
            identity_report=identity_residuals(fu, params),
            residual_norm=history[-1],
            spectrum_edges=None,
            solver_log=log,
        )

    results: dict[int, GroundState] = {}
    failures: list[tuple[int, str]] = []
    workers = min(_worker_count(), n_starts)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(run, i) for i in range(n_starts)}
        for i, fut in futures.items():
            try:
                results[i] = fut.result()
            except Exception as exc:  # recorded, not fatal
                failures.append((i, str(exc)))
    else:
        for i in range(n_starts):
            try:
                results[i] = run(i)
            except Exception as exc:
                failures.append((i, str(exc)))

    ordered = [results[i] for i in sorted(results)]
    max_dist = 0.0
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            uj = align_sign(ordered[i].u, ordered[j].u)
            max_dist = max(max_dist, l2_distance(ordered[i].u, uj))

    return UniquenessReport(
        n_starts=n_starts,
        seed=seed,
        max_pairwise_distance=max_dist,
        masses=tuple(gs.mass for gs in ordered),
        failures=tuple(failures),
        logs=tuple(gs.solver_log for gs in ordered),
        solutions=tuple(ordered),
    )
