"""Equilibrium sampling of the site-phase degrees of freedom.

Above threshold, amplitudes pin near the limit cycle and the slow physics
lives in the phases ``theta_j``.  Their stationary law on the lattice is

    P(theta) ~ exp(-E),
    E = sign * K * sum_bonds cos(theta_i - theta_j)
        + h * sum_j sin(theta_j - phi_j)

with ``sign = +1`` for the anti-aligning bond loss and ``-1`` for the
aligning variant.  This module samples that law with a sequential Metropolis
kernel (numba) and provides a dense-quadrature brute-force evaluator for
small systems which serves as the trusted oracle in tests.

Batch-means error bars: each chain is split into ``n_batches`` contiguous
batches whose means are treated as independent; this is accurate once the
batch length is large against the autocorrelation time, which the default
configuration satisfies for the coupling range exercised here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpecValidationError
from .kernels import N_OBS, metropolis_batch
from .model import LatticeSpec, ModelParams, DerivedCoeffs, bonds, neighbors

SIGN_BY_NAME = {"antiferro": 1, "ferro": -1}


@dataclass(frozen=True, eq=False)
class AngularProblem:
    """Sampling target: lattice, bond coupling, drive field, frames."""

    lattice: LatticeSpec
    coupling: float
    field: float
    sign: int
    phases: np.ndarray

    def __post_init__(self):
        if self.coupling < 0.0 or not math.isfinite(self.coupling):
            raise SpecValidationError("coupling must be finite and >= 0")
        # negative field is a legal frame choice (drive shifted by pi); the
        # derivative estimators rely on it for central differences near 0
        if not math.isfinite(self.field):
            raise SpecValidationError("field must be finite")
        if self.sign not in (1, -1):
            raise SpecValidationError("sign must be +1 or -1")
        phases = np.asarray(self.phases, dtype=float)
        if phases.shape != (self.lattice.n_sites,):
            raise SpecValidationError(
                f"phases must have shape ({self.lattice.n_sites},)"
            )
        object.__setattr__(self, "phases", phases)


def problem_from_model(params: ModelParams, coeffs: DerivedCoeffs) -> AngularProblem:
    """Build the phase-sampling target from microscopic parameters."""
    return AngularProblem(
        lattice=params.lattice,
        coupling=coeffs.K_bond,
        field=coeffs.h_field,
        sign=SIGN_BY_NAME[params.coupling_sign],
        phases=params.site_phases(),
    )


def gauge_to_ferro(problem: AngularProblem) -> AngularProblem:
    """Map an anti-aligning problem to its aligning equivalent.

    On a bipartite lattice the substitution theta_j -> theta_j + pi*parity_j
    flips the bond sign and shifts the drive frame by pi on odd sites.  Only
    valid when every lattice axis has even length (otherwise the periodic
    wrap frustrates the checkerboard).
    """
    if problem.sign == -1:
        return problem
    lat = problem.lattice
    if lat.periodic and any(length % 2 for length in lat.lengths):
        raise SpecValidationError(
            "parity gauge needs even axis lengths on a periodic lattice"
        )
    parity = np.array([lat.parity(s) for s in range(lat.n_sites)], dtype=float)
    return AngularProblem(
        lattice=lat,
        coupling=problem.coupling,
        field=problem.field,
        sign=-1,
        phases=problem.phases + math.pi * parity,
    )


def ground_state_phases(problem: AngularProblem):
    """Energy-minimizing configuration, or ``None`` when frustrated.

    Used as the default start of both sampling channels: a random start at
    strong coupling lands in a winding or domain sector whose escape time
    grows exponentially with the coupling, so ergodic-looking chains then
    sample the wrong sector for their whole lifetime.  Starting from the
    ordered minimum (aligned with the drive frame for aligning bonds,
    checkerboard-shifted for anti-aligning bonds on bipartite lattices)
    removes the trap; burn-in still handles the small-coupling case.  For
    frustrated geometries (anti-aligning bonds with an odd periodic axis)
    there is no ordered minimum and the caller keeps its random start.
    """
    lat = problem.lattice
    theta = problem.phases - 0.5 * math.pi
    if problem.sign > 0 and problem.coupling != 0.0:
        if lat.periodic and any(length % 2 for length in lat.lengths):
            return None
        parity = np.array([lat.parity(s) for s in range(lat.n_sites)], dtype=float)
        theta = theta + math.pi * parity
    return np.mod(theta, 2.0 * math.pi)


# --------------------------------------------------------------------------
# lattice helper arrays
# --------------------------------------------------------------------------

def neighbor_csr(lattice: LatticeSpec):
    """Flat neighbour table (indices, offsets) for the kernels."""
    flat = []
    ptr = [0]
    for site in range(lattice.n_sites):
        nbrs = neighbors(lattice, site)
        flat.extend(nbrs)
        ptr.append(len(flat))
    return np.asarray(flat, dtype=np.int64), np.asarray(ptr, dtype=np.int64)


def axis_pairs(lattice: LatticeSpec, separations):
    """Translation-averaged site pairs displaced along axis 0.

    Returns (pair_a, pair_b, pair_ptr) grouping pairs by separation, in the
    order given.  On periodic lattices every site contributes one pair per
    separation; on open ones only in-range pairs are kept.
    """
    length0 = lattice.lengths[0]
    a, b, ptr = [], [], [0]
    for d in separations:
        if not 1 <= d < length0:
            raise SpecValidationError(f"separation {d} out of range for axis 0")
        for site in range(lattice.n_sites):
            coords = list(lattice.coords(site))
            shifted = coords[0] + d
            if shifted >= length0:
                if not lattice.periodic:
                    continue
                shifted -= length0
            coords[0] = shifted
            a.append(site)
            b.append(lattice.index(tuple(coords)))
        if ptr[-1] == len(a):
            raise SpecValidationError(f"no pairs at separation {d}")
        ptr.append(len(a))
    return (
        np.asarray(a, dtype=np.int64),
        np.asarray(b, dtype=np.int64),
        np.asarray(ptr, dtype=np.int64),
    )


# --------------------------------------------------------------------------
# Metropolis driver
# --------------------------------------------------------------------------

_NO_PAIRS = (
    np.empty(0, dtype=np.int64),
    np.empty(0, dtype=np.int64),
    np.zeros(1, dtype=np.int64),
)


def metropolis_sweep(theta, problem: AngularProblem, width: float, rng):
    """One sequential-site Metropolis sweep; returns (new_theta, acceptance).

    Exposed as the primitive update for tests and diagnostics; the batch
    driver ``run_chain`` repeats the same kernel.  With zero coupling and
    zero field every proposal is accepted, so acceptance is exactly 1.
    """
    lat = problem.lattice
    n = lat.n_sites
    theta = np.array(theta, dtype=float)
    if theta.shape != (n,):
        raise SpecValidationError(f"theta must have shape ({n},)")
    if not 0.0 < width <= math.pi:
        raise SpecValidationError("width must lie in (0, pi]")
    nbr_flat, nbr_ptr = neighbor_csr(lat)
    pair_a, pair_b, pair_ptr = _NO_PAIRS
    obs = np.zeros(N_OBS)
    gsum = np.zeros(0)
    acc, prop, _ = metropolis_batch(
        theta, nbr_flat, nbr_ptr, problem.phases, problem.phases,
        problem.sign * problem.coupling, problem.field, width,
        1, 2,  # one sweep, thin > sweeps: no measurement pass
        rng.random(n), rng.random(n),
        pair_a, pair_b, pair_ptr, obs, gsum,
    )
    return theta, acc / prop


@dataclass(frozen=True)
class SamplerConfig:
    n_sweeps_burn: int = 1500
    tune_blocks: int = 25
    n_batches: int = 48
    n_sweeps_per_batch: int = 200
    thin: int = 2
    proposal_width: float = 1.2
    acceptance_window: tuple = (0.40, 0.60)

    def __post_init__(self):
        if self.n_batches < 8:
            raise SpecValidationError("need at least 8 batches for error bars")
        if min(self.n_sweeps_burn, self.n_sweeps_per_batch, self.thin) < 1:
            raise SpecValidationError("sweep counts and thin must be >= 1")
        if not 0.0 < self.proposal_width <= math.pi:
            raise SpecValidationError("proposal_width must lie in (0, pi]")


@dataclass(frozen=True, eq=False)
class ChainResult:
    """Batch-resolved output of one Metropolis chain."""

    separations: tuple
    batch_obs: np.ndarray  # (n_batches, N_OBS) batch means
    batch_g: np.ndarray    # (n_batches, n_separations) batch means
    acceptance: float
    tuned_width: float
    theta_final: np.ndarray
    n_meas_per_batch: int

    def _mean_se(self, column):
        vals = column
        mean = float(np.mean(vals))
        if len(vals) > 1:
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        else:
            se = math.inf
        return mean, se

    @property
    def v_mean_se(self):
        return self._mean_se(self.batch_obs[:, 0])

    @property
    def w_mean_se(self):
        return self._mean_se(self.batch_obs[:, 1])

    def centered_second_moment(self, which="v"):
        """(variance, se) of the chosen sum via linearized batch means."""
        col = {"v": 0, "w": 1}[which]
        sq = {"v": 2, "w": 3}[which]
        mean = float(np.mean(self.batch_obs[:, col]))
        linearized = self.batch_obs[:, sq] - 2.0 * mean * self.batch_obs[:, col] + mean**2
        return self._mean_se(linearized)

    def g_mean_se(self):
        means = self.batch_g.mean(axis=0)
        if self.batch_g.shape[0] > 1:
            ses = self.batch_g.std(axis=0, ddof=1) / math.sqrt(self.batch_g.shape[0])
        else:
            ses = np.full(self.batch_g.shape[1], math.inf)
        return means, ses


def run_chain(
    problem: AngularProblem,
    config: SamplerConfig,
    seed,
    theta0=None,
    measure_rotation: float = 0.0,
) -> ChainResult:
    """Sample the stationary phase law; returns batch-resolved estimates.

    The random stream is derived from ``seed`` alone (counter-based), so two
    calls with the same seed but slightly different couplings consume
    identical randomness — which is what the common-random-number derivative
    estimates rely on.  By default the chain starts from the ordered minimum
    (see ``ground_state_phases``); the random start is kept only for
    frustrated geometries, or pass ``theta0`` explicitly.
    """
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
    dyn_phases = problem.phases
    meas_phases = problem.phases + measure_rotation

    obs_scratch = np.zeros(N_OBS)
    g_scratch = np.zeros(len(separations))

    # burn-in with proposal-width tuning, then frozen width
    width = config.proposal_width
    lo, hi = config.acceptance_window
    block = max(1, config.n_sweeps_burn // config.tune_blocks)
    for _ in range(config.tune_blocks):
        u_step = rng.random(block * n)
        u_acc = rng.random(block * n)
        acc, prop, _ = metropolis_batch(
            theta, nbr_flat, nbr_ptr, dyn_phases, meas_phases,
            s_coupling, problem.field, width, block, block + 1,
            u_step, u_acc, pair_a, pair_b, pair_ptr, obs_scratch, g_scratch,
        )
        rate = acc / prop
        if rate < lo:
            width = max(width / 1.25, 1e-3)
        elif rate > hi:
            width = min(width * 1.25, math.pi)

    batch_obs = np.zeros((config.n_batches, N_OBS))
    batch_g = np.zeros((config.n_batches, len(separations)))
    total_acc = 0
    total_prop = 0
    n_meas = 0
    for b in range(config.n_batches):
        obs = np.zeros(N_OBS)
        gsum = np.zeros(len(separations))
        u_step = rng.random(config.n_sweeps_per_batch * n)
        u_acc = rng.random(config.n_sweeps_per_batch * n)
        acc, prop, meas = metropolis_batch(
            theta, nbr_flat, nbr_ptr, dyn_phases, meas_phases,
            s_coupling, problem.field, width,
            config.n_sweeps_per_batch, config.thin,
            u_step, u_acc, pair_a, pair_b, pair_ptr, obs, gsum,
        )
        total_acc += acc
        total_prop += prop
        n_meas = meas
        batch_obs[b] = obs / meas
        batch_g[b] = gsum / meas

    return ChainResult(
        separations=separations,
        batch_obs=batch_obs,
        batch_g=batch_g,
        acceptance=total_acc / total_prop,
        tuned_width=width,
        theta_final=theta,
        n_meas_per_batch=n_meas,
    )


# --------------------------------------------------------------------------
# aggregated estimates
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservableEstimate:
    n_sites: int
    v_mean: float
    v_se: float
    w_mean: float
    w_se: float
    var_v: float
    var_v_se: float
    var_w: float
    var_w_se: float
    msq_v: float   # uncentered <V^2>
    msq_v_se: float
    msq_w: float   # uncentered <W^2>
    msq_w_se: float
    separations: tuple
    g: np.ndarray
    g_se: np.ndarray
    xi_fit: float
    acceptance: float

    def correlation(self, d: int) -> float:
        if d == 0:
            return 1.0
        return float(self.g[self.separations.index(d)])


def summarize_chain(result: ChainResult) -> ObservableEstimate:
    v_mean, v_se = result.v_mean_se
    w_mean, w_se = result.w_mean_se
    var_v, var_v_se = result.centered_second_moment("v")
    var_w, var_w_se = result.centered_second_moment("w")
    msq_v, msq_v_se = result._mean_se(result.batch_obs[:, 2])
    msq_w, msq_w_se = result._mean_se(result.batch_obs[:, 3])
    g, g_se = result.g_mean_se()
    xi = fit_correlation_length(result.separations, g, g_se)
    return ObservableEstimate(
        n_sites=result.theta_final.shape[0],
        v_mean=v_mean,
        v_se=v_se,
        w_mean=w_mean,
        w_se=w_se,
        var_v=var_v,
        var_v_se=var_v_se,
        var_w=var_w,
        var_w_se=var_w_se,
        msq_v=msq_v,
        msq_v_se=msq_v_se,
        msq_w=msq_w,
        msq_w_se=msq_w_se,
        separations=result.separations,
        g=g,
        g_se=g_se,
        xi_fit=xi,
        acceptance=result.acceptance,
    )


def estimate_observables(
    problem: AngularProblem,
    config: SamplerConfig,
    seed,
    measure_rotation: float = 0.0,
) -> ObservableEstimate:
    return summarize_chain(
        run_chain(problem, config, seed, measure_rotation=measure_rotation)
    )


@dataclass(frozen=True)
class QuadratureStats:
    """Collective quadrature sums reconstructed from the sampled phases.

    With every amplitude pinned at ``r0`` the collective quadratures are
    P_sum = -2 r0 V and X_sum = 2 r0 W where V = sum_j sin(theta_j - phi_j)
    and W = sum_j cos(theta_j - phi_j) in the measurement frame.  ``pp_sum``
    and ``xx_sum`` are the uncentered pair sums sum_ij <Q_i Q_j> = <Q_sum^2>;
    ``var_p`` / ``var_x`` are the centered variances used as the noise
    denominator in error propagation.
    """

    n_sites: int
    r0: float
    p_sum: float
    p_sum_se: float
    x_sum: float
    x_sum_se: float
    pp_sum: float
    pp_sum_se: float
    xx_sum: float
    xx_sum_se: float
    var_p: float
    var_p_se: float
    var_x: float
    var_x_se: float


def quadrature_stats(est: ObservableEstimate, r0: float) -> QuadratureStats:
    """Convert angular-sum estimates into quadrature sums at amplitude r0."""
    if not (r0 > 0.0 and math.isfinite(r0)):
        raise SpecValidationError("r0 must be finite and > 0")
    two_r0 = 2.0 * r0
    four_r0sq = 4.0 * r0 * r0
    return QuadratureStats(
        n_sites=est.n_sites,
        r0=r0,
        p_sum=-two_r0 * est.v_mean,
        p_sum_se=two_r0 * est.v_se,
        x_sum=two_r0 * est.w_mean,
        x_sum_se=two_r0 * est.w_se,
        pp_sum=four_r0sq * est.msq_v,
        pp_sum_se=four_r0sq * est.msq_v_se,
        xx_sum=four_r0sq * est.msq_w,
        xx_sum_se=four_r0sq * est.msq_w_se,
        var_p=four_r0sq * est.var_v,
        var_p_se=four_r0sq * est.var_v_se,
        var_x=four_r0sq * est.var_w,
        var_x_se=four_r0sq * est.var_w_se,
    )


def fit_correlation_length(separations, g, g_se) -> float:
    """Exponential-decay fit of the correlation profile.

    Weighted least squares of log g(d) against d over the points that are
    both positive and statistically resolved; returns ``inf`` when the
    profile does not decay (long-range plateau) and ``nan`` when fewer than
    two usable points exist.
    """
    xs, ys, ws = [], [], []
    for d, val, se in zip(separations, g, g_se):
        if val <= 0.0 or not math.isfinite(val):
            continue
        if math.isfinite(se) and val < 3.0 * se:
            continue
        rel = se / val if (math.isfinite(se) and se > 0.0) else 1e-6
        xs.append(float(d))
        ys.append(math.log(val))
        ws.append(1.0 / (rel * rel))
    if len(xs) < 2:
        return math.nan
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    ws = np.asarray(ws)
    wsum = ws.sum()
    xbar = (ws * xs).sum() / wsum
    ybar = (ws * ys).sum() / wsum
    sxx = (ws * (xs - xbar) ** 2).sum()
    if sxx == 0.0:
        return math.nan
    slope = (ws * (xs - xbar) * (ys - ybar)).sum() / sxx
    if slope >= 0.0:
        return math.inf
    return -1.0 / slope


# --------------------------------------------------------------------------
# brute-force oracle (small systems)
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BruteForceResult:
    n_sites: int
    v_mean: float
    w_mean: float
    var_v: float
    var_w: float
    separations: tuple
    g: np.ndarray


def brute_force_expectation(problem: AngularProblem, n_grid: int = 48) -> BruteForceResult:
    """Dense tensor-product quadrature of the stationary law (N <= 4).

    Periodic trapezoid rule per angle is spectrally accurate for this
    integrand; ``n_grid = 48`` resolves couplings up to K ~ 10 to full
    double precision.  Memory and time scale as ``n_grid**N``.
    """
    lat = problem.lattice
    n = lat.n_sites
    if n > 4:
        raise SpecValidationError("brute force limited to n_sites <= 4")
    th = 2.0 * math.pi * np.arange(n_grid) / n_grid

    def site_axis(j):
        shape = [1] * n
        shape[j] = n_grid
        return th.reshape(shape)

    energy = np.zeros((n_grid,) * n)
    s_coupling = problem.sign * problem.coupling
    for i, j in bonds(lat):
        energy += s_coupling * np.cos(site_axis(i) - site_axis(j))
    for j in range(n):
        energy += problem.field * np.sin(site_axis(j) - problem.phases[j])
    energy -= energy.min()
    weight = np.exp(-energy)
    z = weight.sum()

    v = np.zeros_like(weight)
    w = np.zeros_like(weight)
    for j in range(n):
        v += np.sin(site_axis(j) - problem.phases[j])
        w += np.cos(site_axis(j) - problem.phases[j])

    def avg(f):
        return float((f * weight).sum() / z)

    v_mean = avg(v)
    w_mean = avg(w)
    var_v = avg(v * v) - v_mean**2
    var_w = avg(w * w) - w_mean**2

    max_sep = lat.lengths[0] // 2
    separations = tuple(range(1, max_sep + 1))
    g = np.zeros(len(separations))
    if separations:
        pair_a, pair_b, pair_ptr = axis_pairs(lat, separations)
        site_of = [site_axis(j) for j in range(n)]
        for gi in range(len(separations)):
            lo, hi = pair_ptr[gi], pair_ptr[gi + 1]
            acc = 0.0
            for m in range(lo, hi):
                acc += avg(np.cos(site_of[pair_a[m]] - site_of[pair_b[m]]))
            g[gi] = acc / (hi - lo)

    return BruteForceResult(
        n_sites=n,
        v_mean=v_mean,
        w_mean=w_mean,
        var_v=var_v,
        var_w=var_w,
        separations=separations,
        g=g,
    )
