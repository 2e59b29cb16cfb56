"""Fisher-information estimators for the collective quadrature readout.

The estimation signal is the collective quadrature sum P_sum = -2 r0 V and
its conjugate X_sum = 2 r0 W (see ``xy.quadrature_stats``), with r0 = sqrt(n0)
the pinned site amplitude.  For a Gaussian-dominated readout the attainable
information about a parameter u is

    F[u] = (d<O>/du)^2 / Var(O)

evaluated at the working point.  Two parameters are handled:

* drive amplitude: the derivative is taken with common-random-number
  Metropolis chains at shifted drive weights h +- delta (the same seed gives
  strongly coupled trajectories, so paired batch differences have tiny
  variance) and certified linear by comparing the responses at delta and
  delta/2;
* drive phase: rotating the measurement frame of a single stationary chain
  by +- delta is algebraically identical to re-measuring the same
  trajectory, so the paired difference is exact per batch.

The variance in the denominator always comes from an independently seeded
chain at the midpoint, so numerator and denominator noises are uncorrelated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalFailure, SpecValidationError
from .exact import predict_quadratures_and_qfi
from .model import DerivedCoeffs, ModelParams
from .xy import (
    AngularProblem,
    ObservableEstimate,
    SamplerConfig,
    problem_from_model,
    quadrature_stats,
    run_chain,
    summarize_chain,
)

_VARIANCE_SEED_SALT = 0x9E3779B9


@dataclass(frozen=True)
class QfiEstimate:
    """Slope-squared-over-variance information estimate with its parts."""

    channel: str          # "amplitude" or "phase"
    n_sites: int
    value: float
    std_error: float
    derivative: float     # d<O>/d(parameter) at the working point
    derivative_se: float
    variance: float       # Var(O) at the working point
    variance_se: float
    theory_paper: float
    theory_errorprop: float
    delta: float          # finite-difference offset actually used
    linearity_ratio: float  # response(delta) / response(delta/2), target 2
    linearity_ratio_se: float


def _mean_se(values: np.ndarray):
    mean = float(np.mean(values))
    if len(values) > 1:
        se = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    else:
        se = math.inf
    return mean, se


def _ratio_with_se(d_full: np.ndarray, d_half: np.ndarray):
    """Delta-method ratio of two correlated batch-mean estimates."""
    m = len(d_full)
    mean_half = float(np.mean(d_half))
    if mean_half == 0.0:
        return math.inf, math.inf
    ratio = float(np.mean(d_full)) / mean_half
    if m < 2:
        return ratio, math.inf
    var_full = float(np.var(d_full, ddof=1))
    var_half = float(np.var(d_half, ddof=1))
    cov = float(np.cov(d_full, d_half, ddof=1)[0, 1])
    var_ratio = (var_full - 2.0 * ratio * cov + ratio * ratio * var_half) / (
        m * mean_half * mean_half
    )
    return ratio, math.sqrt(max(var_ratio, 0.0))


def _variance_of_sum(problem: AngularProblem, config: SamplerConfig, seed, r0: float,
                     which: str):
    """Centered Var of the chosen collective quadrature, independent seed."""
    est = summarize_chain(run_chain(problem, config, (seed, _VARIANCE_SEED_SALT)))
    q = quadrature_stats(est, r0)
    if which == "p":
        return q.var_p, q.var_p_se
    return q.var_x, q.var_x_se


def estimate_qfi_amplitude(
    params: ModelParams,
    coeffs: DerivedCoeffs,
    config: SamplerConfig,
    seed,
    delta_h: float | None = None,
    max_halvings: int = 4,
    linearity_tol: float = 0.05,
    variance_config: SamplerConfig | None = None,
) -> QfiEstimate:
    """Information carried by P_sum about the drive amplitude.

    Four common-random-number chains measure the response of <P_sum> to the
    drive weight at h +- delta and h +- delta/2; the response must scale
    linearly (ratio 2 within ``3 se + linearity_tol``), otherwise delta is
    halved up to ``max_halvings`` times before giving up.  The derivative
    with respect to the physical drive amplitude follows from the chain rule
    d h / d eps = 2 sqrt(n0) / A.

    ``variance_config`` (default: ``config``) sets the chain that measures
    Var(P_sum) at the working point.  Deep in the long-range regime the
    offset chains are confined by their fields but the working point is
    nearly free, so its collective phase decorrelates much more slowly and
    honest error bars need longer batches there than on the slope chains.
    """
    if coeffs.n0 <= 0.0:
        raise SpecValidationError("amplitude-channel estimation requires n0 > 0")
    base = problem_from_model(params, coeffs)
    r0 = math.sqrt(coeffs.n0)
    h0 = base.field
    # the paired chains decorrelate despite the shared random stream, so the
    # difference signal (~ delta) must beat two-chain noise: keep an absolute
    # floor on the offset and let the linearity check shrink it if curved
    delta = float(delta_h) if delta_h is not None else max(0.2 * h0, 0.1)
    if not (delta > 0.0 and math.isfinite(delta)):
        raise SpecValidationError("delta_h must be finite and > 0")

    ratio = math.nan
    for _ in range(max_halvings + 1):
        batches = {}
        for s in (1.0, -1.0, 0.5, -0.5):
            chain = run_chain(replace(base, field=h0 + s * delta), config, seed)
            batches[s] = -2.0 * r0 * chain.batch_obs[:, 0]  # P_sum per batch
        d_full = batches[1.0] - batches[-1.0]
        d_half = batches[0.5] - batches[-0.5]
        ratio, ratio_se = _ratio_with_se(d_full, d_half)
        _, d_half_se = _mean_se(d_half)
        underpowered = abs(float(np.mean(d_half))) < 5.0 * d_half_se
        if underpowered or abs(ratio - 2.0) <= 3.0 * ratio_se + linearity_tol:
            break
        delta *= 0.5
    else:
        raise NumericalFailure(
            f"drive response is not linear at delta_h = {delta:.3g} "
            f"(response ratio {ratio:.4f} vs 2)"
        )

    slope_h, slope_h_se = _mean_se(d_full / (2.0 * delta))
    dh_deps = 2.0 * math.sqrt(coeffs.n0) / coeffs.A
    slope_eps = slope_h * dh_deps
    slope_eps_se = slope_h_se * dh_deps

    var_op, var_op_se = _variance_of_sum(
        base, variance_config if variance_config is not None else config,
        seed, r0, "p",
    )
    if var_op <= 0.0:
        raise NumericalFailure("non-positive variance estimate for P_sum")

    value = slope_eps * slope_eps / var_op
    rel = math.sqrt(
        (2.0 * slope_eps_se / slope_eps) ** 2 + (var_op_se / var_op) ** 2
    ) if slope_eps != 0.0 else math.inf
    pred = predict_quadratures_and_qfi(coeffs, params.lattice.n_sites)
    return QfiEstimate(
        channel="amplitude",
        n_sites=params.lattice.n_sites,
        value=value,
        std_error=abs(value) * rel,
        derivative=slope_eps,
        derivative_se=slope_eps_se,
        variance=var_op,
        variance_se=var_op_se,
        theory_paper=pred.qfi_amplitude_paper,
        theory_errorprop=pred.qfi_amplitude_errorprop,
        delta=delta,
        linearity_ratio=ratio,
        linearity_ratio_se=ratio_se,
    )


def estimate_qfi_phase(
    params: ModelParams,
    coeffs: DerivedCoeffs,
    config: SamplerConfig,
    seed,
    delta_phi: float = 0.2,
) -> QfiEstimate:
    """Information carried by X_sum about the drive phase.

    One chain runs at the working point; re-measuring it in frames rotated
    by +- delta_phi is an exact per-batch identity
    ``W(d) = cos(d) W + sin(d) V``, so the paired response needs no second
    trajectory.  A drive-phase shift moves the locked angles with it, so the
    parameter derivative is minus the measurement-frame derivative.
    """
    if coeffs.n0 <= 0.0:
        raise SpecValidationError("phase-channel estimation requires n0 > 0")
    if not (0.0 < delta_phi < math.pi / 2.0):
        raise SpecValidationError("delta_phi must lie in (0, pi/2)")
    if params.epsilon_abs <= 0.0:
        raise SpecValidationError("phase estimation needs a nonzero drive")
    base = problem_from_model(params, coeffs)
    r0 = math.sqrt(coeffs.n0)

    chain = run_chain(base, config, seed)
    v_b = chain.batch_obs[:, 0]
    # rotated-frame X_sum responses, exact per batch
    d_full = 2.0 * r0 * (2.0 * math.sin(delta_phi)) * v_b
    d_half = 2.0 * r0 * (2.0 * math.sin(delta_phi / 2.0)) * v_b
    ratio, ratio_se = _ratio_with_se(d_full, d_half)

    # the response is exactly sinusoidal in the rotation, so the standard
    # central-difference attenuation sin(d)/d can be divided out, leaving
    # the unbiased limit d<X_sum>/d(phi) = -2 r0 <V>
    slope_b = -2.0 * r0 * v_b
    slope, slope_se = _mean_se(slope_b)

    var_op, var_op_se = _variance_of_sum(base, config, seed, r0, "x")
    if var_op <= 0.0:
        raise NumericalFailure("non-positive variance estimate for X_sum")

    value = slope * slope / var_op
    rel = math.sqrt(
        (2.0 * slope_se / slope) ** 2 + (var_op_se / var_op) ** 2
    ) if slope != 0.0 else math.inf
    pred = predict_quadratures_and_qfi(coeffs, params.lattice.n_sites)
    return QfiEstimate(
        channel="phase",
        n_sites=params.lattice.n_sites,
        value=value,
        std_error=abs(value) * rel,
        derivative=slope,
        derivative_se=slope_se,
        variance=var_op,
        variance_se=var_op_se,
        theory_paper=pred.qfi_phase_paper,
        theory_errorprop=pred.qfi_phase_errorprop,
        delta=delta_phi,
        linearity_ratio=ratio,
        linearity_ratio_se=ratio_se,
    )


# --------------------------------------------------------------------------
# consistency checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ElegantRelationCheck:
    """Three estimates of the same pair-sum quantity and their agreement.

    In the linear-response regime the uncentered quadrature pair sums obey
    sum_ij <P_i P_j> = sum_ij <X_i X_j> = <P_sum> / nu, so all three values
    below should coincide within errors.
    """

    pp_sum: float
    pp_sum_se: float
    xx_sum: float
    xx_sum_se: float
    p_sum_over_nu: float
    p_sum_over_nu_se: float
    z_pp_vs_xx: float
    z_pp_vs_p: float
    z_xx_vs_p: float

    @property
    def max_z(self) -> float:
        return max(self.z_pp_vs_xx, self.z_pp_vs_p, self.z_xx_vs_p)

    def consistent(self, n_sigma: float = 3.0) -> bool:
        return self.max_z <= n_sigma


def _z(a, a_se, b, b_se) -> float:
    denom = math.sqrt(a_se * a_se + b_se * b_se)
    if denom == 0.0:
        return 0.0 if a == b else math.inf
    return abs(a - b) / denom


def check_elegant_relation(est: ObservableEstimate, coeffs: DerivedCoeffs) -> ElegantRelationCheck:
    """Evaluate the pair-sum identity on one chain's estimates."""
    if coeffs.n0 <= 0.0 or coeffs.nu <= 0.0:
        raise SpecValidationError("the pair-sum identity needs n0 > 0 and nu > 0")
    q = quadrature_stats(est, math.sqrt(coeffs.n0))
    p_nu = q.p_sum / coeffs.nu
    p_nu_se = q.p_sum_se / coeffs.nu
    return ElegantRelationCheck(
        pp_sum=q.pp_sum,
        pp_sum_se=q.pp_sum_se,
        xx_sum=q.xx_sum,
        xx_sum_se=q.xx_sum_se,
        p_sum_over_nu=p_nu,
        p_sum_over_nu_se=p_nu_se,
        z_pp_vs_xx=_z(q.pp_sum, q.pp_sum_se, q.xx_sum, q.xx_sum_se),
        z_pp_vs_p=_z(q.pp_sum, q.pp_sum_se, p_nu, p_nu_se),
        z_xx_vs_p=_z(q.xx_sum, q.xx_sum_se, p_nu, p_nu_se),
    )


@dataclass(frozen=True)
class HomodyneRegime:
    """Whether the collective quadrature readout operates where it is optimal.

    The reduced bond coupling must stay small for the single-quadrature
    homodyne readout to capture essentially all of the available
    information; beyond the limit the readout is still valid but no longer
    saturating.
    """

    varsigma: float
    limit: float
    optimal: bool


def check_homodyne_optimality(coeffs: DerivedCoeffs, limit: float = 0.1) -> HomodyneRegime:
    if limit <= 0.0:
        raise SpecValidationError("limit must be > 0")
    return HomodyneRegime(
        varsigma=coeffs.varsigma,
        limit=limit,
        optimal=coeffs.varsigma <= limit,
    )
