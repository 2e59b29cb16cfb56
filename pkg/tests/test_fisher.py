"""Tests for the Fisher-information estimators.

The uncoupled lattice is the workhorse: there the collective quadrature
statistics factorize over sites, the information is linear in N, and a
two-site brute-force quadrature provides an exact oracle for both the
derivative and the variance.  The phase channel is additionally pinned by
its exact per-batch rotation identity.
"""

import math

import numpy as np
import pytest

from laserlattice.errors import NumericalFailure, SpecValidationError
from laserlattice.fisher import (
    check_elegant_relation,
    check_homodyne_optimality,
    estimate_qfi_amplitude,
    estimate_qfi_phase,
)
from laserlattice.model import LatticeSpec, ModelParams, derive_coeffs
from laserlattice.xy import (
    SamplerConfig,
    brute_force_expectation,
    estimate_observables,
    problem_from_model,
    run_chain,
)

N0 = 100.0  # pinned reduced occupation used throughout (r0 = 10)


def qfi_point(n=8, eps=0.0, t_hop=0.0, sign="ferro", phi=0.0):
    # g=1, kappa=0.05, gamma=10: A=0.1, so h_field = 200*eps and
    # K_bond = 4 * (t^2 / (0.05 * 0.1)) * N0
    params = ModelParams(
        g=1.0, kappa=0.05, gamma=10.0, t_hop=t_hop, kappa_tilde=0.05,
        epsilon_abs=eps, phi=phi, lattice=LatticeSpec(1, (n,)),
        coupling_sign=sign,
    )
    return params, derive_coeffs(params, n0_override=N0)


CFG = SamplerConfig(
    n_sweeps_burn=1000, tune_blocks=20, n_batches=32,
    n_sweeps_per_batch=150, thin=2,
)
# long config: mean-of-sine estimates need ~4e4 measurements for a few
# percent relative error on the phase-channel slope
CFG_LONG = SamplerConfig(
    n_sweeps_burn=2000, tune_blocks=20, n_batches=32,
    n_sweeps_per_batch=2500, thin=2,
)


class TestAmplitudeChannel:
    def test_value_is_slope_squared_over_variance(self):
        params, coeffs = qfi_point(4, eps=2.5e-4)
        est = estimate_qfi_amplitude(params, coeffs, CFG, seed=11)
        assert est.value == pytest.approx(
            est.derivative**2 / est.variance, rel=1e-12
        )
        assert est.channel == "amplitude"
        assert est.n_sites == 4

    @pytest.mark.parametrize("n", [4, 8])
    def test_uncoupled_lattice_matches_prediction(self, n):
        # without bonds the correlation sum is 1 and the information is
        # linear in the number of sites: F = 2 n0 N / A^2
        params, coeffs = qfi_point(n, eps=2.5e-4)  # h_field = 0.05
        est = estimate_qfi_amplitude(params, coeffs, CFG_LONG, seed=7, delta_h=0.3)
        expected = 2.0 * N0 * n / coeffs.A**2
        assert est.theory_errorprop == pytest.approx(expected, rel=1e-12)
        assert est.std_error < 0.1 * est.value
        assert abs(est.value - expected) < 4.0 * est.std_error + 0.05 * expected

    def test_matches_two_site_brute_force_oracle(self):
        params, coeffs = qfi_point(2, eps=5e-4)  # h_field = 0.1
        est = estimate_qfi_amplitude(
            params, coeffs, CFG_LONG, seed=3, delta_h=0.4
        )

        problem = problem_from_model(params, coeffs)
        r0 = math.sqrt(N0)
        fd = 1e-3
        from dataclasses import replace

        def p_sum(h):
            return -2.0 * r0 * brute_force_expectation(
                replace(problem, field=h)
            ).v_mean

        h0 = problem.field
        slope_eps = (p_sum(h0 + fd) - p_sum(h0 - fd)) / (2.0 * fd) \
            * (2.0 * r0 / coeffs.A)
        var_op = 4.0 * N0 * brute_force_expectation(problem).var_v
        oracle = slope_eps**2 / var_op

        assert est.derivative == pytest.approx(
            slope_eps, abs=4.0 * est.derivative_se + 0.01 * abs(slope_eps)
        )
        assert est.variance == pytest.approx(
            var_op, abs=4.0 * est.variance_se + 0.01 * var_op
        )
        assert est.value == pytest.approx(
            oracle, abs=4.0 * est.std_error + 0.02 * oracle
        )

    def test_negative_field_frame_is_mirror_image(self):
        # the shifted chains rely on sampling at h < 0; the stationary law
        # there is the mirror image of the positive-field one
        params, coeffs = qfi_point(2, eps=5e-4)
        problem = problem_from_model(params, coeffs)
        from dataclasses import replace
        plus = brute_force_expectation(replace(problem, field=0.5))
        minus = brute_force_expectation(replace(problem, field=-0.5))
        assert minus.v_mean == pytest.approx(-plus.v_mean, rel=1e-12)
        assert minus.var_v == pytest.approx(plus.var_v, rel=1e-12)

    def test_strong_curvature_fails_linearity_check(self):
        # at delta_h = 2.5 the sine response saturates, so the full and
        # half responses are far from the factor-2 of a linear regime
        params, coeffs = qfi_point(4, eps=0.0)
        with pytest.raises(NumericalFailure):
            estimate_qfi_amplitude(
                params, coeffs, CFG, seed=2, delta_h=2.5, max_halvings=0
            )

    def test_halving_recovers_from_large_delta(self):
        params, coeffs = qfi_point(4, eps=0.0)
        est = estimate_qfi_amplitude(
            params, coeffs, CFG, seed=2, delta_h=2.5, max_halvings=6
        )
        assert est.delta < 2.5
        assert abs(est.linearity_ratio - 2.0) < 0.3

    def test_deterministic_for_fixed_seed(self):
        params, coeffs = qfi_point(4, eps=2.5e-4)
        a = estimate_qfi_amplitude(params, coeffs, CFG, seed=9)
        b = estimate_qfi_amplitude(params, coeffs, CFG, seed=9)
        assert a == b

    def test_rejects_dark_point_and_bad_delta(self):
        params, coeffs = qfi_point(4, eps=2.5e-4)
        dark = derive_coeffs(params, n0_override=0.0)
        with pytest.raises(SpecValidationError):
            estimate_qfi_amplitude(params, dark, CFG, seed=1)
        with pytest.raises(SpecValidationError):
            estimate_qfi_amplitude(params, coeffs, CFG, seed=1, delta_h=-0.1)


class TestPhaseChannel:
    def test_rotation_identity_is_exact(self):
        params, coeffs = qfi_point(8, eps=5e-4)  # h_field = 0.1
        delta = 0.3
        est = estimate_qfi_phase(params, coeffs, CFG, seed=5, delta_phi=delta)
        # the paired response ratio of a pure frame rotation is fixed by
        # trigonometry, independent of the sampled data
        assert est.linearity_ratio == pytest.approx(
            2.0 * math.cos(delta / 2.0), rel=1e-12
        )
        chain = run_chain(problem_from_model(params, coeffs), CFG, 5)
        v_mean = float(np.mean(chain.batch_obs[:, 0]))
        r0 = math.sqrt(N0)
        # de-attenuated central difference collapses to the plain mean
        assert est.derivative == pytest.approx(-2.0 * r0 * v_mean, rel=1e-10)

    def test_phase_information_is_eps_squared_times_amplitude(self):
        params, coeffs = qfi_point(8, eps=5e-4)  # h_field = 0.1
        amp = estimate_qfi_amplitude(params, coeffs, CFG_LONG, seed=21, delta_h=0.3)
        ph = estimate_qfi_phase(params, coeffs, CFG_LONG, seed=22)
        eps2 = params.epsilon_abs**2
        assert ph.theory_errorprop == pytest.approx(
            eps2 * amp.theory_errorprop, rel=1e-12
        )
        assert ph.theory_paper == pytest.approx(
            eps2 * amp.theory_paper, rel=1e-12
        )
        combined = math.hypot(ph.std_error, eps2 * amp.std_error)
        assert abs(ph.value - eps2 * amp.value) < \
            4.0 * combined + 0.03 * ph.value

    def test_value_identity_and_determinism(self):
        params, coeffs = qfi_point(4, eps=5e-4)
        a = estimate_qfi_phase(params, coeffs, CFG, seed=13)
        b = estimate_qfi_phase(params, coeffs, CFG, seed=13)
        assert a == b
        assert a.value == pytest.approx(a.derivative**2 / a.variance, rel=1e-12)

    def test_validation(self):
        params, coeffs = qfi_point(4, eps=5e-4)
        with pytest.raises(SpecValidationError):
            estimate_qfi_phase(params, coeffs, CFG, seed=1, delta_phi=0.0)
        with pytest.raises(SpecValidationError):
            estimate_qfi_phase(params, coeffs, CFG, seed=1, delta_phi=2.0)
        undriven, coeffs_u = qfi_point(4, eps=0.0)
        with pytest.raises(SpecValidationError):
            estimate_qfi_phase(undriven, coeffs_u, CFG, seed=1)
        dark = derive_coeffs(params, n0_override=0.0)
        with pytest.raises(SpecValidationError):
            estimate_qfi_phase(params, dark, CFG, seed=1)


class TestElegantRelation:
    def test_consistent_at_weak_drive(self):
        # K_bond = 2 needs t = 5e-3; h_field = 0.05 keeps the response linear
        params, coeffs = qfi_point(8, eps=2.5e-4, t_hop=5e-3)
        assert coeffs.K_bond == pytest.approx(2.0, rel=1e-12)
        est = estimate_observables(
            problem_from_model(params, coeffs), CFG_LONG, seed=17
        )
        check = check_elegant_relation(est, coeffs)
        assert check.pp_sum == pytest.approx(check.p_sum_over_nu, rel=0.15)
        assert check.pp_sum == pytest.approx(check.xx_sum, rel=0.15)
        assert math.isfinite(check.max_z)
        assert check.consistent(n_sigma=4.0)

    def test_rejects_undriven_point(self):
        params, coeffs = qfi_point(4, eps=0.0)
        est = estimate_observables(
            problem_from_model(params, coeffs), CFG, seed=1
        )
        with pytest.raises(SpecValidationError):
            check_elegant_relation(est, coeffs)


class TestHomodyneRegime:
    def test_flag_tracks_reduced_bond_coupling(self):
        # varsigma = D / A = (t^2 / kappa_tilde) / A
        weak, weak_coeffs = qfi_point(4, eps=1e-4, t_hop=5e-3)   # 0.005
        strong, strong_coeffs = qfi_point(4, eps=1e-4, t_hop=0.05)  # 0.5
        ok = check_homodyne_optimality(weak_coeffs)
        assert ok.optimal and ok.varsigma == pytest.approx(0.005)
        bad = check_homodyne_optimality(strong_coeffs)
        assert not bad.optimal and bad.limit == 0.1

    def test_boundary_is_inclusive_and_limit_validated(self):
        _, coeffs = qfi_point(4, eps=1e-4, t_hop=5e-3)
        assert check_homodyne_optimality(coeffs, limit=0.005).optimal
        with pytest.raises(SpecValidationError):
            check_homodyne_optimality(coeffs, limit=0.0)
