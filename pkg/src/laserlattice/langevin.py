"""Langevin integration channels.

Two levels of description are integrated with Euler-Maruyama:

* ``run_angular`` — overdamped dynamics of the site phases alone.  Its drift
  is the exact gradient flow of the energy targeted by the Metropolis
  sampler, so for dt -> 0 the stationary distributions coincide; comparing
  the two is a standing consistency check between independent channels.

* ``run_field`` — the full complex mode amplitudes with saturable gain,
  bond loss and resonant drive.  Above threshold the amplitude pins at
  ``r0^2 = (gain - loss_eff)/saturation`` and the residual phase dynamics
  reproduces the angular channel with bond coupling
  ``4 * bond_rate * r0^2 / noise_power``; below threshold each quadrature
  relaxes as an Ornstein-Uhlenbeck process with per-component variance
  ``noise_power / (2 * (loss - gain))``.

Both channels consume counter-based random streams, so results are
reproducible for a given seed and common-random-number coupling across
nearby parameter points works the same way as in the Metropolis module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, SpecValidationError
from .kernels import N_OBS, langevin_angular_batch, langevin_field_batch
from .model import DerivedCoeffs, LatticeSpec, ModelParams, derive_coeffs
from .xy import (
    AngularProblem,
    ChainResult,
    ObservableEstimate,
    SIGN_BY_NAME,
    axis_pairs,
    ground_state_phases,
    neighbor_csr,
    problem_from_model,
    summarize_chain,
)

_DIVERGENCE_AMP2 = 1e12


@dataclass(frozen=True)
class LangevinConfig:
    dt: float
    n_steps_burn: int = 20_000
    n_batches: int = 32
    n_steps_per_batch: int = 5_000
    thin: int = 5

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise SpecValidationError("dt must be finite and > 0")
        if self.n_batches < 8:
            raise SpecValidationError("need at least 8 batches for error bars")
        if min(self.n_steps_burn, self.n_steps_per_batch, self.thin) < 1:
            raise SpecValidationError("step counts and thin must be >= 1")


@dataclass(frozen=True)
class LangevinParams:
    """Scalar run description: one trajectory of ``n_steps`` steps of size
    ``dt``, the first ``burn_in_steps`` of which are discarded.

    ``radial_width_sigma`` is a diagnostics-only slot for recording the
    amplitude-fluctuation width of a working point; it does not affect the
    integration.
    """

    dt: float
    n_steps: int
    burn_in_steps: int
    seed: int
    radial_width_sigma: float | None = None

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise SpecValidationError("dt must be finite and > 0")
        if self.burn_in_steps < 0:
            raise SpecValidationError("burn_in_steps must be >= 0")
        if self.burn_in_steps >= self.n_steps:
            raise SpecValidationError(
                "burn_in_steps must leave at least one measured step "
                f"(got burn_in={self.burn_in_steps}, n_steps={self.n_steps})"
            )
        if self.radial_width_sigma is not None and not self.radial_width_sigma > 0.0:
            raise SpecValidationError("radial_width_sigma must be > 0 when given")


# --------------------------------------------------------------------------
# angular channel
# --------------------------------------------------------------------------

def angular_energy(problem: AngularProblem, theta) -> float:
    """Energy whose Boltzmann factor is the stationary phase law."""
    theta = np.asarray(theta, dtype=float)
    lat = problem.lattice
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    total = 0.0
    for j in range(lat.n_sites):
        for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
            k = nbr_flat[p]
            if k > j:  # each bond once
                total += problem.sign * problem.coupling * math.cos(theta[j] - theta[k])
        total += problem.field * math.sin(theta[j] - problem.phases[j])
    return total


def angular_drift(problem: AngularProblem, sigma: float, theta) -> np.ndarray:
    """Drift vector of the phase dynamics (gradient of the energy)."""
    theta = np.asarray(theta, dtype=float)
    lat = problem.lattice
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    out = np.empty(lat.n_sites)
    half_var = 0.5 * sigma * sigma
    for j in range(lat.n_sites):
        acc = 0.0
        for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
            acc += math.sin(theta[j] - theta[nbr_flat[p]])
        out[j] = half_var * (
            problem.sign * problem.coupling * acc
            - problem.field * math.cos(theta[j] - problem.phases[j])
        )
    return out


def step_angular(theta, params: ModelParams, coeffs: DerivedCoeffs, dt: float, rng=None):
    """One Euler-Maruyama step of the phase-only dynamics; angles rewrapped.

    The drift is the gradient flow of the stationary-law energy (coupling
    sign taken from ``params.coupling_sign``) with diffusion ``A / n0`` —
    so the chain targets exactly the law the Metropolis sampler draws from.
    Pass ``rng=None`` for the deterministic (drift-only) update, used by the
    gradient-identity checks.
    """
    if coeffs.n0 <= 0.0:
        raise SpecValidationError("phase-only stepping requires n0 > 0")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise SpecValidationError("dt must be finite and > 0")
    theta = np.array(theta, dtype=float)
    n = params.lattice.n_sites
    if theta.shape != (n,) or not np.all(np.isfinite(theta)):
        raise SpecValidationError(f"theta must be a finite array of shape ({n},)")
    problem = problem_from_model(params, coeffs)
    sigma = math.sqrt(coeffs.A / coeffs.n0)
    theta += angular_drift(problem, sigma, theta) * dt
    if rng is not None:
        theta += sigma * math.sqrt(dt) * rng.standard_normal(n)
    return np.mod(theta, 2.0 * math.pi)


def run_angular(
    problem: AngularProblem,
    sigma: float,
    config: LangevinConfig,
    seed,
    theta0=None,
    measure_rotation: float = 0.0,
) -> ChainResult:
    """Integrate the phase dynamics; returns batch-resolved estimates.

    The stationary law does not depend on ``sigma`` (it only rescales time),
    but the discretization bias does, through ``sigma**2 * dt``.  The default
    start is the ordered minimum (see ``ground_state_phases``), matching the
    Metropolis channel; the random start is kept for frustrated geometries.
    """
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise SpecValidationError("sigma must be finite and > 0")
    lat = problem.lattice
    n = lat.n_sites
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    max_sep = lat.lengths[0] // 2
    separations = tuple(range(1, max_sep + 1))
    pair_a, pair_b, pair_ptr = axis_pairs(lat, separations)

    init_ss, dyn_ss = np.random.SeedSequence(seed).spawn(2)
    rng_init = np.random.Generator(np.random.Philox(init_ss))
    rng = np.random.Generator(np.random.Philox(dyn_ss))
    if theta0 is None:
        theta = ground_state_phases(problem)
        if theta is None:
            theta = rng_init.uniform(0.0, 2.0 * math.pi, n)
    else:
        theta = np.array(theta0, dtype=float)
        if theta.shape != (n,):
            raise SpecValidationError(f"theta0 must have shape ({n},)")

    s_coupling = problem.sign * problem.coupling
    meas_phases = problem.phases + measure_rotation
    obs_scratch = np.zeros(N_OBS)
    g_scratch = np.zeros(len(separations))

    normals = rng.standard_normal((config.n_steps_burn, n))
    langevin_angular_batch(
        theta, nbr_flat, nbr_ptr, problem.phases, meas_phases,
        s_coupling, problem.field, sigma, config.dt,
        config.n_steps_burn, config.n_steps_burn + 1,
        normals, pair_a, pair_b, pair_ptr, obs_scratch, g_scratch,
    )

    batch_obs = np.zeros((config.n_batches, N_OBS))
    batch_g = np.zeros((config.n_batches, len(separations)))
    n_meas = 0
    for b in range(config.n_batches):
        obs = np.zeros(N_OBS)
        gsum = np.zeros(len(separations))
        normals = rng.standard_normal((config.n_steps_per_batch, n))
        n_meas = langevin_angular_batch(
            theta, nbr_flat, nbr_ptr, problem.phases, meas_phases,
            s_coupling, problem.field, sigma, config.dt,
            config.n_steps_per_batch, config.thin,
            normals, pair_a, pair_b, pair_ptr, obs, gsum,
        )
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("phase dynamics diverged; reduce dt")
        batch_obs[b] = obs / n_meas
        batch_g[b] = gsum / n_meas

    return ChainResult(
        separations=separations,
        batch_obs=batch_obs,
        batch_g=batch_g,
        acceptance=math.nan,
        tuned_width=math.nan,
        theta_final=theta,
        n_meas_per_batch=n_meas,
    )


# --------------------------------------------------------------------------
# full-field channel
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldProblem:
    """Saturable-gain lattice dynamics in the rotating frame of the drive."""

    lattice: LatticeSpec
    gain_minus_loss: float  # net linear rate: gain A minus total loss C
    saturation: float       # cubic saturation coefficient
    bond_rate: float        # dissipative bond rate
    bond_sign: int          # +1 anti-aligning, -1 aligning
    noise_power: float      # diffusion per complex mode (per real component)
    drive: np.ndarray       # complex per-site drive amplitude
    phases: np.ndarray      # measurement frame per site

    def __post_init__(self):
        if self.saturation < 0.0:
            raise SpecValidationError("saturation must be >= 0")
        if self.bond_rate < 0.0:
            raise SpecValidationError("bond_rate must be >= 0")
        if self.bond_sign not in (1, -1):
            raise SpecValidationError("bond_sign must be +1 or -1")
        if self.noise_power < 0.0:
            raise SpecValidationError("noise_power must be >= 0")
        drive = np.asarray(self.drive, dtype=complex)
        phases = np.asarray(self.phases, dtype=float)
        n = self.lattice.n_sites
        if drive.shape != (n,) or phases.shape != (n,):
            raise SpecValidationError(f"drive and phases must have shape ({n},)")
        object.__setattr__(self, "drive", drive)
        object.__setattr__(self, "phases", phases)

    @property
    def r0_squared(self) -> float:
        """Limit-cycle intensity of the preferred uniform/staggered branch.

        The aligning branch (or, for the anti-aligning sign on a bipartite
        lattice, the checkerboard branch) sees every bond contribute
        coherently, so the linear rate is boosted by the coordination
        number times the bond rate.
        """
        from .model import neighbors

        coordination = len(neighbors(self.lattice, 0))
        eff = self.gain_minus_loss + coordination * self.bond_rate
        if self.saturation == 0.0:
            return math.inf if eff > 0 else 0.0
        return max(eff, 0.0) / self.saturation


def field_problem_from_model(params: ModelParams, coeffs: DerivedCoeffs) -> FieldProblem:
    phases = np.asarray(params.site_phases(), dtype=float)
    return FieldProblem(
        lattice=params.lattice,
        gain_minus_loss=coeffs.A - coeffs.C,
        saturation=coeffs.B,
        bond_rate=coeffs.D,
        bond_sign=SIGN_BY_NAME[params.coupling_sign],
        noise_power=coeffs.A,
        drive=params.epsilon_abs * np.exp(1j * phases),
        phases=phases,
    )


def field_drift(problem: FieldProblem, alpha) -> np.ndarray:
    """Deterministic part of the amplitude dynamics at state ``alpha``."""
    alpha = np.asarray(alpha, dtype=complex)
    lat = problem.lattice
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    out = np.empty(lat.n_sites, dtype=complex)
    for j in range(lat.n_sites):
        nn_sum = 0.0 + 0.0j
        for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
            nn_sum += alpha[nbr_flat[p]]
        lin = problem.gain_minus_loss - problem.saturation * abs(alpha[j]) ** 2
        out[j] = lin * alpha[j] - problem.bond_sign * problem.bond_rate * nn_sum \
            - 1j * problem.drive[j]
    return out


def step_full(alpha, params: ModelParams, coeffs: DerivedCoeffs, dt: float, rng=None):
    """One Euler-Maruyama step of the complex-amplitude dynamics.

    Each cartesian component of each site receives an independent Wiener
    increment of amplitude ``sqrt(A)``.  Pass ``rng=None`` for the
    deterministic (drift-only) update.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise SpecValidationError("dt must be finite and > 0")
    alpha = np.array(alpha, dtype=complex)
    n = params.lattice.n_sites
    if alpha.shape != (n,) or not np.all(np.isfinite(alpha)):
        raise SpecValidationError(f"alpha must be a finite array of shape ({n},)")
    problem = field_problem_from_model(params, coeffs)
    alpha += field_drift(problem, alpha) * dt
    if rng is not None:
        amp = math.sqrt(problem.noise_power * dt)
        alpha += amp * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    if not np.all(np.isfinite(alpha)) or np.max(np.abs(alpha)) ** 2 > _DIVERGENCE_AMP2:
        raise DivergenceError("field step diverged; reduce dt")
    return alpha


@dataclass(frozen=True, eq=False)
class FieldChainResult:
    separations: tuple
    batch_obs: np.ndarray
    batch_g: np.ndarray
    batch_amp2: np.ndarray
    alpha_final: np.ndarray
    n_meas_per_batch: int

    def amp2_mean_se(self):
        vals = self.batch_amp2
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
        return mean, se

    def as_chain_result(self) -> ChainResult:
        """View the phase observables in the shared batch layout."""
        return ChainResult(
            separations=self.separations,
            batch_obs=self.batch_obs,
            batch_g=self.batch_g,
            acceptance=math.nan,
            tuned_width=math.nan,
            theta_final=np.angle(self.alpha_final),
            n_meas_per_batch=self.n_meas_per_batch,
        )


def run_field(
    problem: FieldProblem,
    config: LangevinConfig,
    seed,
    alpha0=None,
    measure_rotation: float = 0.0,
) -> FieldChainResult:
    """Integrate the complex-amplitude dynamics from small random seeds."""
    lat = problem.lattice
    n = lat.n_sites
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    max_sep = lat.lengths[0] // 2
    separations = tuple(range(1, max_sep + 1))
    pair_a, pair_b, pair_ptr = axis_pairs(lat, separations)

    init_ss, dyn_ss = np.random.SeedSequence(seed).spawn(2)
    rng_init = np.random.Generator(np.random.Philox(init_ss))
    rng = np.random.Generator(np.random.Philox(dyn_ss))
    if alpha0 is None:
        scale = 1e-3 + math.sqrt(max(problem.noise_power, 1e-12))
        alpha = scale * (rng_init.standard_normal(n) + 1j * rng_init.standard_normal(n))
    else:
        alpha = np.array(alpha0, dtype=complex)
        if alpha.shape != (n,):
            raise SpecValidationError(f"alpha0 must have shape ({n},)")
    re = alpha.real.copy()
    im = alpha.imag.copy()

    meas_phases = problem.phases + measure_rotation
    noise_amp = math.sqrt(problem.noise_power)
    obs_scratch = np.zeros(N_OBS)
    g_scratch = np.zeros(len(separations))
    amp_scratch = np.zeros(1)

    langevin_field_batch(
        re, im, nbr_flat, nbr_ptr,
        problem.drive.real.copy(), problem.drive.imag.copy(), meas_phases,
        problem.gain_minus_loss, problem.saturation,
        problem.bond_rate, problem.bond_sign,
        noise_amp, config.dt, config.n_steps_burn, config.n_steps_burn + 1,
        rng.standard_normal((config.n_steps_burn, n)),
        rng.standard_normal((config.n_steps_burn, n)),
        pair_a, pair_b, pair_ptr, obs_scratch, g_scratch, amp_scratch,
    )

    batch_obs = np.zeros((config.n_batches, N_OBS))
    batch_g = np.zeros((config.n_batches, len(separations)))
    batch_amp2 = np.zeros(config.n_batches)
    n_meas = 0
    for b in range(config.n_batches):
        obs = np.zeros(N_OBS)
        gsum = np.zeros(len(separations))
        amp = np.zeros(1)
        n_meas = langevin_field_batch(
            re, im, nbr_flat, nbr_ptr,
            problem.drive.real.copy(), problem.drive.imag.copy(), meas_phases,
            problem.gain_minus_loss, problem.saturation,
            problem.bond_rate, problem.bond_sign,
            noise_amp, config.dt, config.n_steps_per_batch, config.thin,
            rng.standard_normal((config.n_steps_per_batch, n)),
            rng.standard_normal((config.n_steps_per_batch, n)),
            pair_a, pair_b, pair_ptr, obs, gsum, amp,
        )
        amp2 = re * re + im * im
        if not np.all(np.isfinite(amp2)) or amp2.max() > _DIVERGENCE_AMP2:
            raise DivergenceError("field dynamics diverged; reduce dt")
        batch_obs[b] = obs / n_meas
        batch_g[b] = gsum / n_meas
        batch_amp2[b] = amp[0] / n_meas

    return FieldChainResult(
        separations=separations,
        batch_obs=batch_obs,
        batch_g=batch_g,
        batch_amp2=batch_amp2,
        alpha_final=re + 1j * im,
        n_meas_per_batch=n_meas,
    )


def effective_phase_coupling(problem: FieldProblem, amp2: float) -> float:
    """Bond coupling felt by the phases when amplitudes pin at ``amp2``.

    Derived from this module's field equation: projecting the bond term
    (coefficient ``bond_rate`` per neighbour) onto the phase direction at
    pinned amplitude gives drift ``bond_rate * sum_nn sin(theta_k - theta_j)``
    with diffusion ``noise_power / amp2``, i.e. a stationary bond coupling of
    ``2 * bond_rate * amp2 / noise_power``.  Note this is half the
    ``K_bond`` normalization used by the angular channel, whose drift
    carries the gradient factor of two.
    """
    if problem.noise_power <= 0.0:
        return math.inf
    return 2.0 * problem.bond_rate * amp2 / problem.noise_power


def effective_phase_field(problem: FieldProblem, amp2: float) -> float:
    """Drive-locking field felt by the phases at pinned amplitude."""
    if problem.noise_power <= 0.0:
        return math.inf
    eps = float(np.abs(problem.drive).mean())
    return 2.0 * eps * math.sqrt(max(amp2, 0.0)) / problem.noise_power


# --------------------------------------------------------------------------
# stationary-average harness and trajectory export
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StationaryStats:
    """Time-averaged observables of one stationary trajectory.

    ``estimate`` carries the phase observables with batch-means errors;
    ``amp2``/``amp2_se`` the mean site intensity (nan for the phase-only
    channel, whose amplitudes are pinned by construction).
    """

    estimate: ObservableEstimate
    amp2: float
    amp2_se: float


def _split_params(lp: LangevinParams, n_batches: int) -> LangevinConfig:
    measured = lp.n_steps - lp.burn_in_steps
    per_batch = measured // n_batches
    if per_batch < 1:
        raise SpecValidationError(
            f"no measured steps per batch: {measured} steps after burn-in "
            f"across {n_batches} batches"
        )
    return LangevinConfig(
        dt=lp.dt,
        n_steps_burn=max(lp.burn_in_steps, 1),
        n_batches=n_batches,
        n_steps_per_batch=per_batch,
        thin=5 if per_batch >= 50 else 1,
    )


def run_stationary(problem, lp: LangevinParams, *, sigma=None, n_batches: int = 32,
                   measure_rotation: float = 0.0) -> StationaryStats:
    """Integrate to stationarity and time-average the phase observables.

    Accepts either dynamics: an ``AngularProblem`` (needs the diffusion
    scale ``sigma``) or a ``FieldProblem`` (``sigma`` must be omitted).
    Everything after ``lp.burn_in_steps`` is split into ``n_batches``
    contiguous batches for the error bars; runs are reproducible from
    ``lp.seed`` alone.
    """
    config = _split_params(lp, n_batches)
    if isinstance(problem, AngularProblem):
        if sigma is None:
            raise SpecValidationError("phase-only dynamics needs the sigma diffusion scale")
        chain = run_angular(problem, sigma, config, lp.seed,
                            measure_rotation=measure_rotation)
        return StationaryStats(summarize_chain(chain), math.nan, math.nan)
    if isinstance(problem, FieldProblem):
        if sigma is not None:
            raise SpecValidationError("sigma applies to the phase-only dynamics only")
        field = run_field(problem, config, lp.seed, measure_rotation=measure_rotation)
        amp2, amp2_se = field.amp2_mean_se()
        return StationaryStats(summarize_chain(field.as_chain_result()), amp2, amp2_se)
    raise SpecValidationError(f"unsupported problem type {type(problem).__name__}")


def record_angular_trajectory(params: ModelParams, lp: LangevinParams, stride: int = 1,
                              theta0=None):
    """Integrate the phase-only dynamics and keep every ``stride``-th state.

    Returns (times, thetas) with thetas of shape (n_snapshots, n_sites);
    intended for trajectory export and plotting, not for statistics.
    """
    if stride < 1:
        raise SpecValidationError("stride must be >= 1")
    coeffs = derive_coeffs(params)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(lp.seed)))
    n = params.lattice.n_sites
    theta = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    times, snaps = [], []
    for step in range(1, lp.n_steps + 1):
        theta = step_angular(theta, params, coeffs, lp.dt, rng)
        if step % stride == 0:
            times.append(step * lp.dt)
            snaps.append(theta.copy())
    return np.asarray(times), np.asarray(snaps)


def record_field_trajectory(params: ModelParams, lp: LangevinParams, stride: int = 1,
                            alpha0=None):
    """Integrate the amplitude dynamics and keep every ``stride``-th state."""
    if stride < 1:
        raise SpecValidationError("stride must be >= 1")
    coeffs = derive_coeffs(params)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(lp.seed)))
    n = params.lattice.n_sites
    if alpha0 is None:
        alpha = np.full(n, 1e-3 * math.sqrt(max(coeffs.n_mf, 1.0)), dtype=complex)
    else:
        alpha = np.asarray(alpha0, dtype=complex)
    times, snaps = [], []
    for step in range(1, lp.n_steps + 1):
        alpha = step_full(alpha, params, coeffs, lp.dt, rng)
        if step % stride == 0:
            times.append(step * lp.dt)
            snaps.append(alpha.copy())
    return np.asarray(times), np.asarray(snaps)


def write_trajectory_csv(path, times, snapshots) -> None:
    """Write trajectory snapshots as CSV rows (time, site, state columns).

    Complex snapshots get ``re_alpha``/``im_alpha`` columns, real ones a
    single ``theta`` column.
    """
    snapshots = np.asarray(snapshots)
    times = np.asarray(times, dtype=float)
    if snapshots.ndim != 2 or snapshots.shape[0] != times.shape[0]:
        raise SpecValidationError("snapshots must be (n_times, n_sites)")
    complex_state = np.iscomplexobj(snapshots)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if complex_state:
            writer.writerow(["time", "site", "re_alpha", "im_alpha"])
        else:
            writer.writerow(["time", "site", "theta"])
        for ti, t in enumerate(times):
            for site in range(snapshots.shape[1]):
                if complex_state:
                    val = snapshots[ti, site]
                    writer.writerow([f"{t:.12g}", site, f"{val.real:.12g}", f"{val.imag:.12g}"])
                else:
                    writer.writerow([f"{t:.12g}", site, f"{snapshots[ti, site]:.12g}"])
