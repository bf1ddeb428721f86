"""Time-dependent flow i psi_t = (-Lap)^s psi + |x|^2 psi - |psi|^(q-2) psi.

Strang splitting in which both substeps are exact: the potential/nonlinear
half-steps are pointwise phase rotations (|psi| is invariant there), and the
kinetic step applies the exact exponential of the same window-Toeplitz
operator the stationary solver uses, realized through its cached
eigendecomposition. Ground states therefore evolve as standing waves up to
the splitting commutator error, and the mass is conserved to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Field, Grid, GridError, window_kernel_1d, window_kinetic
from .model import ModelParams

EVOLUTION_M_LIMIT = 2048  # dense propagator cost guard (N=1)

_KINETIC_EIG_CACHE: dict[tuple[Grid, float], tuple[np.ndarray, np.ndarray]] = {}


def _kinetic_eig(grid: Grid, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the 1D window kinetic matrix; cached per (grid, s)."""
    key = (grid, float(s))
    out = _KINETIC_EIG_CACHE.get(key)
    if out is None:
        c = window_kernel_1d(grid.M, s)[: grid.M] * grid.h ** (-2.0 * s)
        w, v = scipy.linalg.eigh(scipy.linalg.toeplitz(c))
        w.setflags(write=False)
        v.setflags(write=False)
        out = (w, v)
        _KINETIC_EIG_CACHE[key] = out
    return out


class _KineticPropagator:
    """psi -> exp(-i dt T) psi with T the window kinetic operator."""

    def __init__(self, grid: Grid, s: float, dt: float):
        self.grid = grid
        if grid.N == 1:
            if grid.M > EVOLUTION_M_LIMIT:
                raise GridError(
                    f"evolution propagator needs M <= {EVOLUTION_M_LIMIT} (dense exponential)"
                )
            w, self.v = _kinetic_eig(grid, s)
            self.phase = np.exp(-1j * w * dt)
        else:
            if s != 1.0:
                raise NotImplementedError(
                    "N=2 evolution is implemented for s=1 only (separable kinetic operator)"
                )
            axis_grid = Grid(N=1, L=grid.L, M=grid.M)
            w, v = _kinetic_eig(axis_grid, 1.0)
            self.v = v
            self.phase2 = np.exp(-1j * dt * (w[:, None] + w[None, :]))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        v = self.v
        if self.grid.N == 1:
            # V is real orthogonal; split into real matvecs to avoid upcasting V
            a = v.T @ psi.real + 1j * (v.T @ psi.imag)
            a *= self.phase
            return v @ a.real + 1j * (v @ a.imag)
        a = v.T @ psi @ v
        a *= self.phase2
        return v @ a @ v.T


def strang_step(psi: Field, params: ModelParams, dt: float, nonlinearity_on: bool = True) -> Field:
    """One Strang step; dt may be negative (the scheme is time reversible)."""
    grid = psi.grid
    prop = _KineticPropagator(grid, params.s, dt)
    qm2 = params.q - 2.0
    z = psi.values.astype(np.complex128)
    for stage in range(2):
        arg = grid.xsq - (np.abs(z) ** qm2 if nonlinearity_on else 0.0)
        z = z * np.exp(-1j * arg * (dt / 2.0))
        if stage == 0:
            z = prop.apply(z)
    return Field(grid, z)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled diagnostics of one evolution run."""

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    deviation: np.ndarray | None
    snapshots: tuple[tuple[float, Field], ...]
    blowup: bool
    blowup_time: float | None
    nonlinearity_on: bool

    @property
    def mass_drift(self) -> float:
        if len(self.mass) == 0 or self.mass[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0])

    @property
    def energy_drift(self) -> float:
        if len(self.energy) == 0:
            return 0.0
        return float(np.max(np.abs(self.energy - self.energy[0])))


def _diagnostics(grid: Grid, params: ModelParams, psi: np.ndarray, nonlin: bool):
    dens = np.abs(psi) ** 2
    mass = grid.integral(dens)
    kinetic = window_kinetic(grid, params.s, psi)
    potential = grid.integral(grid.xsq * dens)
    energy = 0.5 * kinetic + 0.5 * potential
    if nonlin:
        energy -= grid.integral(np.abs(psi) ** params.q) / params.q
    return mass, energy


def _orbital_deviation(grid: Grid, psi: np.ndarray, ref: np.ndarray, ref_norm2: float) -> float:
    """inf over global phase of ||psi - e^{i theta} ref||_2 (theta = arg <psi, ref>)."""
    z = np.sum(ref * psi) * grid.weight
    val = grid.integral(np.abs(psi) ** 2) + ref_norm2 - 2.0 * abs(z)
    return float(np.sqrt(max(val, 0.0)))


def evolve(
    psi0: Field,
    params: ModelParams,
    dt: float,
    T: float,
    u_ref: Field | None = None,
    nonlinearity_on: bool = True,
    sample_every: int = 10,
    n_snapshots: int = 0,
) -> Trajectory:
    """Integrate the flow over [0, T] and sample diagnostics.

    Non-finite values truncate the trajectory and flag blow-up (the expected
    outcome for strongly perturbed states in the focusing supercritical
    regime). The deviation column is the phase-minimized L^2 distance to
    u_ref when one is supplied.
    """
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    grid = psi0.grid
    prop = _KineticPropagator(grid, params.s, dt)
    xsq = grid.xsq
    qm2 = params.q - 2.0
    psi = psi0.values.astype(np.complex128)
    ref = None
    ref_norm2 = 0.0
    if u_ref is not None:
        ref = u_ref.values.real
        ref_norm2 = grid.integral(ref**2)

    nsteps = int(round(T / dt))
    snap_stride = max(1, nsteps // n_snapshots) if n_snapshots else 0

    times, masses, energies, devs, snaps = [], [], [], [], []
    blowup, blowup_time = False, None

    def record(k: int, state: np.ndarray) -> bool:
        nonlocal blowup, blowup_time
        t = k * dt
        if not np.all(np.isfinite(state.view(np.float64))):
            blowup, blowup_time = True, t
            return False
        m, e = _diagnostics(grid, params, state, nonlinearity_on)
        times.append(t)
        masses.append(m)
        energies.append(e)
        if ref is not None:
            devs.append(_orbital_deviation(grid, state, ref, ref_norm2))
        if snap_stride and (k % snap_stride == 0 or k == nsteps):
            snaps.append((t, Field(grid, state.copy())))
        return True

    record(0, psi)
    half_lin = np.exp(-1j * xsq * (dt / 2.0))
    for k in range(1, nsteps + 1):
        if nonlinearity_on:
            psi = psi * np.exp(-1j * (xsq - np.abs(psi) ** qm2) * (dt / 2.0))
        else:
            psi = psi * half_lin
        psi = prop.apply(psi)
        if nonlinearity_on:
            psi = psi * np.exp(-1j * (xsq - np.abs(psi) ** qm2) * (dt / 2.0))
        else:
            psi = psi * half_lin
        if k % sample_every == 0 or k == nsteps:
            if not record(k, psi):
                break

    return Trajectory(
        times=np.asarray(times),
        mass=np.asarray(masses),
        energy=np.asarray(energies),
        deviation=np.asarray(devs) if ref is not None else None,
        snapshots=tuple(snaps),
        blowup=blowup,
        blowup_time=blowup_time,
        nonlinearity_on=nonlinearity_on,
    )


def smooth_noise(grid: Grid, seed: int, cutoff: float | None = None) -> Field:
    """Seeded unit-norm random real field, band-limited to low frequencies."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    xi_max = float(np.max(np.abs(grid.axis_freqs)))
    xc = cutoff if cutoff is not None else min(5.0, 0.25 * xi_max)
    filt = np.exp(-grid.xi_sq / xc**2)
    smooth = grid.ifft(filt * grid.fft(noise)).real
    nrm = float(np.sqrt(np.sum(smooth**2) * grid.weight))
    return Field(grid, smooth / nrm)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Perturbation response of a stationary state under the full flow."""

    eps: float
    seed: int
    max_deviation: float
    soft_threshold: float  # 10 * eps * ||u||
    hard_threshold: float  # 0.1 * ||u||
    t_soft: float | None
    t_hard: float | None
    blowup: bool
    blowup_time: float | None
    trajectory: Trajectory


def stability_probe(
    gs,
    eps: float,
    T: float = 20.0,
    dt: float = 1e-3,
    seed: int = 0,
    sample_every: int = 10,
) -> StabilityReport:
    """Evolve u * (1 + eps * eta) with seeded smooth noise eta and track the
    orbital deviation; blow-up is recorded as instability evidence."""
    if not 0.0 <= eps <= 0.1:
        raise ValueError("perturbation size must lie in [0, 0.1]")
    u = gs.u
    eta = smooth_noise(u.grid, seed)
    psi0 = Field(u.grid, u.values * (1.0 + eps * eta.values) + 0j)
    traj = evolve(psi0, gs.params, dt, T, u_ref=u, sample_every=sample_every)

    unorm = u.l2_norm()
    soft, hard = 10.0 * eps * unorm, 0.1 * unorm
    t_soft = t_hard = None
    for t, d in zip(traj.times, traj.deviation):
        if t_soft is None and d > soft:
            t_soft = float(t)
        if t_hard is None and d > hard:
            t_hard = float(t)
    if traj.blowup and t_hard is None:
        t_hard = traj.blowup_time
    return StabilityReport(
        eps=eps,
        seed=seed,
        max_deviation=float(np.max(traj.deviation)) if len(traj.deviation) else 0.0,
        soft_threshold=soft,
        hard_threshold=hard,
        t_soft=t_soft,
        t_hard=t_hard,
        blowup=traj.blowup,
        blowup_time=traj.blowup_time,
        trajectory=traj,
    )
