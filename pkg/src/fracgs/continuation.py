"""Branch tracing in lambda, the mass curve, fold location, normalized solutions,
stability labels, the homotopy in the fractional order, and asymptotic checks.

The branch lambda -> u_lambda is swept directly in lambda (uniqueness makes the
mass a single-valued function of lambda; the fold lives in the mass only).
For s < 1 the states sharpen rapidly as lambda decreases, so each point is
solved on the grid the resolution policy recommends, warm-started from the
previous solution resampled onto it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .core import Field, Grid
from .errors import FoldError, NonConvergenceError, PositivityError, RegimeError, RootRangeError
from .groundstate import (
    GroundState,
    SolverOptions,
    align_sign,
    l2_distance,
    recommended_grid,
    solve_ground_state,
)
from .model import ModelParams, pohozaev_k
from .spectrum import ground_eigenpair, jacobian_spectrum_edges

SLOPE_TOL_FRACTION = 1e-3
NONDEGENERACY_FLOOR = 1e-6


@dataclass(frozen=True)
class BranchPoint:
    """One sampled point of the ground-state branch."""

    lam: float
    mass: float
    action: float
    kinetic: float
    potential: float
    power_q: float
    pohozaev_rel: float
    slope: float
    stability: str
    min_abs_eig: float


@dataclass(frozen=True, eq=False)
class MassCurve:
    """Sampled branch, ordered by decreasing lambda, with warm-start provenance."""

    points: tuple[BranchPoint, ...]
    N: int
    s: float
    q: float
    lam1: float
    phi1_power_q: float
    complete: bool
    fail_lam: float | None
    warm_log: tuple[tuple[float, int, bool], ...]  # (lambda, newton iters, warm?)
    grids: tuple[Grid, ...]
    opts: SolverOptions
    solutions: tuple[np.ndarray, ...] = field(repr=False, default=())

    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def masses(self) -> np.ndarray:
        return np.array([p.mass for p in self.points])

    def nearest_index(self, lam: float) -> int:
        return int(np.argmin(np.abs(self.lams() - lam)))

    def nearest_solution(self, lam: float) -> Field:
        i = self.nearest_index(lam)
        return Field(self.grids[i], self.solutions[i])

    @property
    def quality_violations(self) -> tuple[float, ...]:
        """Lambdas where the Pohozaev residual exceeded 1e-6 (grid-limited points)."""
        return tuple(p.lam for p in self.points if p.pohozaev_rel > 1e-6)


@dataclass(frozen=True)
class FoldResult:
    lam_star: float
    c0: float
    bracket_width: float
    unimodal: bool


def classify_stability(point: BranchPoint, slope_tol: float) -> str:
    """Slope rule: dM/dlambda < -tol -> stable, > tol -> unstable, else marginal.

    The mass vanishes at both branch ends, so the segment adjacent to
    lambda_1 carries negative slope and is the stable one.
    """
    return _label_from_slope(point.slope, slope_tol)


def _label_from_slope(slope: float, slope_tol: float) -> str:
    if not np.isfinite(slope):
        return "unknown"
    if slope < -slope_tol:
        return "stable"
    if slope > slope_tol:
        return "unstable"
    return "marginal"


def _branch_mesh(lam1: float, lam_min: float, points: int, delta0: float) -> np.ndarray:
    """Graded lambda mesh: 40% of the points in the top decade below lambda_1."""
    span = lam1 - lam_min
    n_top = int(round(0.4 * points))
    hinge = min(10.0 * delta0, 0.5 * span)
    seg1 = np.geomspace(delta0, hinge, n_top, endpoint=False)
    seg2 = np.geomspace(hinge, span, points - n_top)
    deltas = np.concatenate([seg1, seg2])
    return lam1 - deltas


def trace_branch(
    family: tuple[int, float, float],
    grid: Grid | None = None,
    lam_min: float = -40.0,
    points: int = 200,
    opts: SolverOptions | None = None,
    delta0: float = 1e-2,
) -> MassCurve:
    """Sweep the ground-state branch from lambda_1 - delta0 down to lam_min.

    The first point is cold-started from the bifurcation asymptotic amplitude
    on the linear eigenfunction; every later point is warm-started from its
    predecessor (resampled when the grid policy changes). A point that fails
    to converge aborts the sweep; the partial curve is returned flagged.
    """
    N, s, q = int(family[0]), float(family[1]), float(family[2])
    opts = opts or SolverOptions()
    solve_opts = replace(opts, compute_edges=False)
    if points < 20:
        raise ValueError("a branch needs at least 20 points")

    near_grid = grid if grid is not None else recommended_grid(ModelParams(N, s, q, 0.0))
    pair = ground_eigenpair(s, near_grid)
    lam1 = pair.value
    if not lam_min < lam1 - 0.1:
        raise RegimeError(f"lambda_min={lam_min} must sit below lambda_1-0.1={lam1 - 0.1:.6g}")
    phi_q = float(np.sum(np.abs(pair.vector.values) ** q) * near_grid.weight)

    mesh = _branch_mesh(lam1, lam_min, points, delta0)
    rows = []
    sols: list[np.ndarray] = []
    grids: list[Grid] = []
    warm_log: list[tuple[float, int, bool]] = []
    edge_vectors = None
    prev_field: Field | None = None
    prev_peak: float | None = None
    complete, fail_lam = True, None

    for i, lam in enumerate(mesh):
        params = ModelParams(N, s, q, lam)
        g = grid if grid is not None else recommended_grid(params, lam1, prev_peak)
        if i == 0:
            eps = ((lam1 - lam) / phi_q) ** (1.0 / (q - 2.0))
            init = Field(near_grid, eps * pair.vector.values)
        else:
            init = prev_field
        try:
            gs = solve_ground_state(params, g, solve_opts, initial=init)
        except (NonConvergenceError, PositivityError, RegimeError):
            complete, fail_lam = False, lam
            break
        if not gs.solver_log.converged:
            complete, fail_lam = False, lam
            break
        if edge_vectors is not None and grids and grids[-1] != g:
            edge_vectors = None  # grid changed; warm block no longer applies
        edges = jacobian_spectrum_edges(gs.u, params, warm=edge_vectors)
        edge_vectors = edges.vectors
        o = gs.observables
        rows.append(
            dict(
                lam=lam,
                mass=o.mass,
                action=gs.action,
                kinetic=o.kinetic_s,
                potential=o.potential,
                power_q=o.power_q,
                pohozaev_rel=gs.identity_report.pohozaev_rel,
                min_abs_eig=edges.min_abs_eig,
            )
        )
        sols.append(gs.u.values)
        grids.append(g)
        warm_log.append((lam, gs.solver_log.newton_iters, gs.solver_log.warm_start))
        prev_field = gs.u
        prev_peak = float(np.max(gs.u.values))

    lams = np.array([r["lam"] for r in rows])
    masses = np.array([r["mass"] for r in rows])
    if len(rows) >= 3:
        slopes = np.gradient(masses, lams)
    else:
        slopes = np.full(len(rows), np.nan)
    slope_tol = SLOPE_TOL_FRACTION * (masses.max() if len(rows) else 1.0)

    pts = tuple(
        BranchPoint(
            lam=r["lam"],
            mass=r["mass"],
            action=r["action"],
            kinetic=r["kinetic"],
            potential=r["potential"],
            power_q=r["power_q"],
            pohozaev_rel=r["pohozaev_rel"],
            slope=float(sl),
            stability=_label_from_slope(float(sl), slope_tol),
            min_abs_eig=r["min_abs_eig"],
        )
        for r, sl in zip(rows, slopes)
    )
    return MassCurve(
        points=pts,
        N=N,
        s=s,
        q=q,
        lam1=lam1,
        phi1_power_q=phi_q,
        complete=complete,
        fail_lam=fail_lam,
        warm_log=tuple(warm_log),
        grids=tuple(grids),
        opts=opts,
        solutions=tuple(sols),
    )


class _MassEvaluator:
    """mass(lambda) by fresh solves on a frozen grid, warm-started and cached."""

    def __init__(self, curve: MassCurve, g: Grid, opts: SolverOptions):
        self.curve = curve
        self.grid = g
        self.opts = replace(opts, compute_edges=False)
        self.cache: dict[float, tuple[float, Field]] = {}

    def _nearest_field(self, lam: float) -> Field:
        best = None
        best_gap = np.inf
        for lc, (_, fld) in self.cache.items():
            if abs(lc - lam) < best_gap:
                best_gap, best = abs(lc - lam), fld
        icurve = self.curve.nearest_index(lam)
        if abs(self.curve.points[icurve].lam - lam) < best_gap:
            best = self.curve.nearest_solution(lam)
        return best

    def solve(self, lam: float) -> GroundState:
        params = ModelParams(self.curve.N, self.curve.s, self.curve.q, lam)
        gs = solve_ground_state(params, self.grid, self.opts, initial=self._nearest_field(lam))
        if not gs.solver_log.converged:
            raise NonConvergenceError(f"refinement solve at lambda={lam} did not converge")
        self.cache[lam] = (gs.mass, gs.u)
        return gs

    def __call__(self, lam: float) -> float:
        if lam in self.cache:
            return self.cache[lam][0]
        return self.solve(lam).mass


def _local_maxima(lams_asc: np.ndarray, masses_asc: np.ndarray) -> list[int]:
    idx = []
    for i in range(1, len(masses_asc) - 1):
        if masses_asc[i] > masses_asc[i - 1] and masses_asc[i] >= masses_asc[i + 1]:
            idx.append(i)
    return idx


def golden_refine_max(evaluate, a: float, b: float, tol: float) -> tuple[float, float, float]:
    """Golden-section maximization of `evaluate` on [a, b] to bracket width tol.

    Returns (argmax, max value, final bracket width); the bracket shrinks by
    the inverse golden ratio per evaluation.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    best = max((fc, c), (fd, d))
    while b - a > tol:
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = evaluate(d)
        else:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = evaluate(c)
        best = max(best, (fc, c), (fd, d))
    return best[1], best[0], b - a


def refine_fold_from_samples(
    lams_asc: np.ndarray,
    masses_asc: np.ndarray,
    evaluate,
    tol_lam: float,
) -> FoldResult:
    """Fold location given branch samples and a mass(lambda) evaluator.

    Every sampled interior local maximum is refined by golden section; the
    global one wins, with unimodal=False when several were present. A global
    maximum at an endpoint raises (the sweep range was inadequate).
    """
    gmax = int(np.argmax(masses_asc))
    if gmax in (0, len(masses_asc) - 1):
        side = "lambda_min is not negative enough" if gmax == 0 else "delta0 is too large"
        raise FoldError(f"maximum-at-endpoint: sampled mass peaks at the boundary; {side}")
    maxima = _local_maxima(lams_asc, masses_asc)
    if gmax not in maxima:
        maxima.append(gmax)

    best = (-np.inf, np.nan, np.nan)  # (mass, lambda, bracket)
    for im in maxima:
        lam_loc, m_loc, width = golden_refine_max(
            evaluate, lams_asc[im - 1], lams_asc[im + 1], tol_lam
        )
        if masses_asc[im] > m_loc:
            lam_loc, m_loc = lams_asc[im], masses_asc[im]
        if m_loc > best[0]:
            best = (m_loc, lam_loc, width)

    c0 = max(best[0], float(masses_asc.max()))
    return FoldResult(
        lam_star=best[1],
        c0=c0,
        bracket_width=best[2],
        unimodal=(len(maxima) == 1),
    )


def find_fold(
    curve: MassCurve,
    tol_lam: float = 1e-4,
    opts: SolverOptions | None = None,
) -> FoldResult:
    """Locate the mass maximum: coarse argmax, then golden-section refinement
    with fresh warm-started solves on the grid of the sampled maximum."""
    if len(curve.points) < 20:
        raise FoldError("curve has too few points to bracket a fold")
    opts = opts or curve.opts
    order = np.argsort(curve.lams())
    lams = curve.lams()[order]
    masses = curve.masses()[order]
    gmax = int(np.argmax(masses))
    if gmax in (0, len(masses) - 1):
        side = "lambda_min is not negative enough" if gmax == 0 else "delta0 is too large"
        raise FoldError(f"maximum-at-endpoint: sampled mass peaks at the boundary; {side}")
    evaluator = _MassEvaluator(curve, curve.grids[int(order[gmax])], opts)
    return refine_fold_from_samples(lams, masses, evaluator, tol_lam)


def solve_normalized(
    c: float,
    curve: MassCurve,
    fold: FoldResult | None = None,
    opts: SolverOptions | None = None,
    mass_rtol: float = 1e-6,
) -> list[GroundState]:
    """Ground states with prescribed mass c: two below c0, one at c0, none above.

    Roots of mass(lambda) = c are bisected on each monotone side of the fold
    with fresh warm-started solves; returned states are ordered by lambda and
    reproduce c within mass_rtol relative.
    """
    if not c > 0:
        raise ValueError("target mass must be positive")
    opts = opts or curve.opts
    if fold is None:
        fold = find_fold(curve, opts=opts)
    if abs(c - fold.c0) <= mass_rtol * fold.c0:
        g = curve.grids[curve.nearest_index(fold.lam_star)]
        ev = _MassEvaluator(curve, g, opts)
        return [ev.solve(fold.lam_star)]
    if c > fold.c0:
        return []

    order = np.argsort(curve.lams())
    lams = curve.lams()[order]
    masses = curve.masses()[order]
    istar = int(np.argmin(np.abs(lams - fold.lam_star)))

    out = []
    for side in ("left", "right"):
        if side == "left":
            seg_l, seg_m = lams[: istar + 1], masses[: istar + 1]
            if c < seg_m[0]:
                raise RootRangeError(
                    f"target mass {c} below the sampled branch minimum {seg_m[0]:.6g} "
                    "on the unstable side; extend lambda_min"
                )
        else:
            seg_l, seg_m = lams[istar:][::-1], masses[istar:][::-1]  # from lambda_1 end inward
            if c < seg_m[0]:
                raise RootRangeError(
                    f"target mass {c} below the first sampled mass {seg_m[0]:.6g} "
                    "near lambda_1; reduce delta0"
                )
        k = int(np.searchsorted(seg_m, c))
        k = min(max(k, 1), len(seg_m) - 1)
        a_l, b_l = sorted((seg_l[k - 1], seg_l[k]))
        # frozen grid: the policy grid of the more negative bracket end
        gidx = curve.nearest_index(min(a_l, b_l))
        ev = _MassEvaluator(curve, curve.grids[gidx], opts)
        # sampled masses came from per-point grids; re-verify the bracket on
        # the frozen grid and widen by sample steps if the sign got lost
        step = b_l - a_l
        fa, fb = ev(a_l) - c, ev(b_l) - c
        for _ in range(6):
            if fa * fb <= 0.0:
                break
            if abs(fa) < abs(fb):
                a_l = max(a_l - step, float(lams[0]))
                fa = ev(a_l) - c
            else:
                b_l = min(b_l + step, float(lams[-1]))
                fb = ev(b_l) - c
        if fa * fb > 0.0:
            raise RootRangeError(f"could not bracket mass={c} on the {side} side")
        root = brentq(lambda lam: ev(lam) - c, a_l, b_l, xtol=1e-12, rtol=1e-15, maxiter=200)
        gs = ev.solve(float(root))
        if abs(gs.mass - c) > mass_rtol * c:
            raise NonConvergenceError(
                f"normalized solve missed the target mass: |{gs.mass} - {c}| > {mass_rtol * c}"
            )
        out.append(gs)
    out.sort(key=lambda gs: gs.params.lam)
    return out


@dataclass(frozen=True)
class HomotopyStep:
    s: float
    lam1: float
    mass: float
    residual_norm: float
    min_abs_eig: float
    newton_iters: int
    grid_L: float
    grid_M: int


@dataclass(frozen=True, eq=False)
class HomotopyReport:
    """Continuation in the fractional order with a nondegeneracy monitor."""

    steps: tuple[HomotopyStep, ...]
    completed: bool
    fail_s: float | None
    endpoint_distance: float
    endpoint_mass_direct: float
    floor: float = NONDEGENERACY_FLOOR


def s_homotopy(
    lam: float,
    q: float,
    N: int,
    s_path,
    grid: Grid | None = None,
    opts: SolverOptions | None = None,
) -> HomotopyReport:
    """Continue the ground state from s = 1 along a monotone path in s.

    Each step records the Jacobian nondegeneracy margin; the sweep halts if
    it drops below the floor. The endpoint is compared against a direct cold
    solve at the final s on the same grid.
    """
    opts = opts or SolverOptions()
    s_path = [float(sv) for sv in s_path]
    if not s_path:
        raise ValueError("empty homotopy path")
    if abs(s_path[0] - 1.0) > 1e-12:
        raise ValueError("the homotopy path must start at s = 1")
    if any(b > a for a, b in zip(s_path[1:], s_path[:-1])):
        raise ValueError("the homotopy path must be non-increasing in s")
    if any(not 0.0 < sv <= 1.0 for sv in s_path):
        raise ValueError("path values must lie in (0, 1]")

    steps: list[HomotopyStep] = []
    prev: Field | None = None
    prev_peak = None
    completed, fail_s = True, None
    last_grid = None
    for sv in s_path:
        params = ModelParams(N, sv, q, lam)
        g = grid if grid is not None else recommended_grid(params, peak_hint=prev_peak)
        lam1 = ground_eigenpair(sv, g).value
        if not lam < lam1 - 1e-6:
            raise RegimeError(f"lambda={lam} is not below lambda_1({sv})={lam1:.6g}")
        gs = solve_ground_state(params, g, replace(opts, compute_edges=False), initial=prev)
        if not gs.solver_log.converged:
            completed, fail_s = False, sv
            break
        edges = jacobian_spectrum_edges(gs.u, params)
        steps.append(
            HomotopyStep(
                s=sv,
                lam1=lam1,
                mass=gs.mass,
                residual_norm=gs.residual_norm,
                min_abs_eig=edges.min_abs_eig,
                newton_iters=gs.solver_log.newton_iters,
                grid_L=g.L,
                grid_M=g.M,
            )
        )
        prev, prev_peak, last_grid = gs.u, float(np.max(gs.u.values)), g
        if edges.min_abs_eig < NONDEGENERACY_FLOOR:
            completed, fail_s = False, sv
            break

    endpoint_distance = math.nan
    endpoint_mass = math.nan
    if completed and prev is not None:
        params_end = ModelParams(N, s_path[-1], q, lam)
        direct = solve_ground_state(params_end, last_grid, replace(opts, compute_edges=False))
        aligned = align_sign(prev, direct.u)
        endpoint_distance = l2_distance(prev, aligned)
        endpoint_mass = direct.mass
    return HomotopyReport(
        steps=tuple(steps),
        completed=completed,
        fail_s=fail_s,
        endpoint_distance=endpoint_distance,
        endpoint_mass_direct=endpoint_mass,
    )


@dataclass(frozen=True)
class AsymptoticsReport:
    """Branch-end behavior against the bifurcation and vanishing-mass limits."""

    bif_lams: tuple[float, ...]
    bif_rel_errors: tuple[float, ...]
    decay_monotone: bool
    decay_fraction: float
    min_energy_gap: float
    energy_ok: bool
    k: float
    gap_floor: float = -1e-8


def asymptotics_checks(curve: MassCurve, n_bif: int = 3) -> AsymptoticsReport:
    """(a) mass vs the bifurcation asymptotic near lambda_1, (b) strict mass
    decay over the most negative quarter of the sweep, (c) the action lower
    bound Phi + (1+k)(lambda/2)*mass >= floor at every lambda < 0."""
    pts = curve.points
    if len(pts) < max(8, n_bif + 1):
        raise ValueError("curve too short for asymptotic checks")
    q = curve.q
    k = pohozaev_k(curve.N, curve.s, q)

    bif_lams, bif_errors = [], []
    for p in pts[:n_bif]:  # points nearest lambda_1 (mesh is descending)
        pred = ((curve.lam1 - p.lam) / curve.phi1_power_q) ** (2.0 / (q - 2.0))
        bif_lams.append(p.lam)
        bif_errors.append(abs(p.mass - pred) / pred)

    n_tail = max(2, int(math.ceil(0.25 * len(pts))))
    tail = pts[-n_tail:]  # most negative lambdas
    masses = [p.mass for p in tail]
    decay = all(b < a for a, b in zip(masses[:-1], masses[1:]))

    gaps = [
        p.action + (1.0 + k) * (p.lam / 2.0) * p.mass
        for p in pts
        if p.lam < 0.0
    ]
    min_gap = min(gaps) if gaps else math.inf

    return AsymptoticsReport(
        bif_lams=tuple(bif_lams),
        bif_rel_errors=tuple(bif_errors),
        decay_monotone=decay,
        decay_fraction=n_tail / len(pts),
        min_energy_gap=float(min_gap),
        energy_ok=bool(min_gap >= -1e-8),
        k=k,
    )
