"""Tests for the deterministic mean-field channel.

The integrator is checked against exact closed forms of its own equations
(pump relaxation, fixed points of both spatial branches), its advertised
RK4 order, and the threshold formulas; the reduced-theory occupation
formula is exercised separately because the two steady-state notions are
deliberately distinct.
"""

import math

import numpy as np
import pytest

from laserlattice.errors import DivergenceError, SpecValidationError
from laserlattice.model import LatticeSpec, ModelParams
from laserlattice.meanfield import (
    MeanFieldState,
    closed_form_intensity,
    closed_form_inversion,
    default_seed_state,
    detect_threshold,
    integrate_maxwell_bloch,
    steady_boson_number,
    write_meanfield_csv,
)


def lasing_point(n=4, t_hop=0.0, kappa=0.1, sign="antiferro"):
    # loop gain 2 at t_hop = 0: a comfortably lasing working point
    return ModelParams(
        g=1.0, kappa=kappa, gamma=5.0, t_hop=t_hop, kappa_tilde=kappa,
        lattice=LatticeSpec(1, (n,)), coupling_sign=sign,
    )


class TestState:
    def test_shape_mismatch(self):
        with pytest.raises(SpecValidationError):
            MeanFieldState(np.zeros(3, complex), np.zeros(4, complex), np.zeros(4))

    def test_non_finite_rejected(self):
        bad = np.array([0.0, math.nan])
        with pytest.raises(SpecValidationError):
            MeanFieldState(bad.astype(complex), np.zeros(2, complex), np.zeros(2))
        with pytest.raises(SpecValidationError):
            MeanFieldState(np.zeros(2, complex), np.zeros(2, complex), bad)

    def test_inversion_bound(self):
        with pytest.raises(SpecValidationError):
            MeanFieldState(np.zeros(2, complex), np.zeros(2, complex),
                           np.array([0.0, 1.5]))
        ok = MeanFieldState(np.zeros(2, complex), np.zeros(2, complex),
                            np.array([-1.0, 1.0]))
        assert ok.n_sites == 2

    def test_default_seed(self):
        params = lasing_point()
        seed = default_seed_state(params)
        n_mf = 2.0 * 25.0  # 2 gamma^2 / g^2
        assert np.allclose(seed.amp, 1e-3 * math.sqrt(n_mf))
        assert np.all(seed.coherence == 0.0)
        assert np.all(seed.inversion == 1.0)


class TestIntegrator:
    def test_pump_relaxation(self):
        # with amp = coherence = 0 everything except the inversion is inert
        # and inv(t) = 1 - exp(-2 gamma t) exactly
        params = lasing_point()
        init = MeanFieldState(np.zeros(4, complex), np.zeros(4, complex), np.zeros(4))
        traj = integrate_maxwell_bloch(params, init, dt=0.005, t_end=0.5,
                                       sample_stride=20)
        for ti, t in enumerate(traj.times):
            want = 1.0 - math.exp(-2.0 * params.gamma * t)
            assert traj.inversion[ti, 0] == pytest.approx(want, abs=1e-7)
        assert np.all(traj.amp == 0.0)

    def test_below_threshold_decay(self):
        params = lasing_point(kappa=0.5)  # loop gain 0.4
        seed = default_seed_state(params)
        traj = integrate_maxwell_bloch(params, seed, dt=0.01, t_end=40.0)
        assert (np.abs(traj.amp[-1]) ** 2).max() < 1e-8 * (np.abs(seed.amp) ** 2).max()

    def test_steady_state_matches_closed_form(self):
        params = lasing_point()
        want = closed_form_intensity(params)
        traj = integrate_maxwell_bloch(params, default_seed_state(params),
                                       dt=0.02, t_end=300.0, sample_stride=10**9)
        got = float((np.abs(traj.amp[-1]) ** 2).mean())
        assert got == pytest.approx(want, rel=1e-6)
        assert float(traj.inversion[-1].mean()) == pytest.approx(
            closed_form_inversion(params), rel=1e-6
        )

    @pytest.mark.xfail(
        strict=True,
        reason="the integrated steady intensity sits a fixed factor below "
               "the reduced-theory occupation formula",
    )
    def test_reduced_occupation_formula_matches_integration(self):
        params = lasing_point()
        traj = integrate_maxwell_bloch(params, default_seed_state(params),
                                       dt=0.02, t_end=300.0, sample_stride=10**9)
        got = float((np.abs(traj.amp[-1]) ** 2).mean())
        assert got == pytest.approx(steady_boson_number(params), rel=1e-6)

    def test_translation_symmetry(self):
        params = lasing_point(n=8, t_hop=0.02)
        traj = integrate_maxwell_bloch(params, default_seed_state(params),
                                       dt=0.02, t_end=50.0, sample_stride=100)
        scale = np.abs(traj.amp[:, :1])
        assert np.max(np.abs(traj.amp - traj.amp[:, :1])) < 1e-10 * max(scale.max(), 1e-30)
        assert np.max(np.abs(traj.inversion - traj.inversion[:, :1])) < 1e-10

    def test_rk4_order(self):
        # errors against a fine reference must shrink ~16x per dt halving
        params = lasing_point()
        seed = default_seed_state(params)

        def final_at(dt):
            traj = integrate_maxwell_bloch(params, seed, dt=dt, t_end=2.0,
                                           sample_stride=10**9)
            return traj.amp[-1], traj.coherence[-1], traj.inversion[-1]

        ref = final_at(0.00125)
        errs = []
        for dt in (0.02, 0.01, 0.005):
            got = final_at(dt)
            errs.append(max(np.abs(g - r).max() for g, r in zip(got, ref)))
        assert 11.0 < errs[0] / errs[1] < 23.0
        assert 11.0 < errs[1] / errs[2] < 23.0

    def test_staggered_branch_fixed_point(self):
        # a checkerboard seed stays checkerboard and settles on the branch
        # where every anti-aligning bond adds gain instead of loss
        params = lasing_point(n=8, t_hop=0.05)
        n_mf = 2.0 * params.gamma**2 / params.g**2
        signs = np.array([(-1.0) ** j for j in range(8)])
        init = MeanFieldState(
            (1e-3 * math.sqrt(n_mf) * signs).astype(complex),
            np.zeros(8, complex), np.ones(8),
        )
        traj = integrate_maxwell_bloch(params, init, dt=0.02, t_end=300.0,
                                       sample_stride=10**9)
        got = float((np.abs(traj.amp[-1]) ** 2).mean())
        want = closed_form_intensity(params, branch="staggered")
        assert want > closed_form_intensity(params, branch="uniform")
        assert got == pytest.approx(want, rel=1e-6)
        # neighboring sites stay exactly opposite
        assert np.max(np.abs(traj.amp[-1] + np.roll(traj.amp[-1], 1))) < 1e-8

    def test_divergence_guard(self):
        params = lasing_point()
        n_mf = 2.0 * params.gamma**2 / params.g**2
        init = MeanFieldState(
            np.full(4, 2e6 * math.sqrt(n_mf), dtype=complex),
            np.zeros(4, complex), np.ones(4),
        )
        with pytest.raises(DivergenceError):
            integrate_maxwell_bloch(params, init, dt=0.0001, t_end=1.0)

    def test_dt_stability_guard(self):
        params = lasing_point()
        with pytest.raises(SpecValidationError):
            integrate_maxwell_bloch(params, default_seed_state(params),
                                    dt=0.5, t_end=1.0)

    def test_sampling_stride(self):
        params = lasing_point()
        traj = integrate_maxwell_bloch(params, default_seed_state(params),
                                       dt=0.01, t_end=1.0, sample_stride=10)
        assert traj.times.shape == (11,)
        assert traj.times[1] == pytest.approx(0.1)
        assert traj.amp.shape == (11, 4)
        with pytest.raises(SpecValidationError):
            integrate_maxwell_bloch(params, default_seed_state(params),
                                    dt=0.01, t_end=1.0, sample_stride=0)

    def test_csv_export(self, tmp_path):
        params = lasing_point()
        traj = integrate_maxwell_bloch(params, default_seed_state(params),
                                       dt=0.01, t_end=0.1, sample_stride=5)
        path = tmp_path / "traj.csv"
        write_meanfield_csv(traj, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "time,site,re_amp,im_amp,re_coherence,im_coherence,inversion"
        assert len(lines) == 1 + len(traj.times) * 4
        last = lines[-1].split(",")
        assert float(last[0]) == pytest.approx(traj.times[-1])
        assert float(last[6]) == pytest.approx(traj.inversion[-1, -1], rel=1e-9)


class TestClosedForms:
    def test_reference_point(self):
        params = lasing_point()
        assert closed_form_intensity(params) == pytest.approx(12.5, rel=1e-12)
        assert closed_form_inversion(params) == pytest.approx(0.5, rel=1e-12)

    def test_below_threshold_clamps(self):
        params = lasing_point(kappa=0.5)
        assert closed_form_intensity(params) == 0.0
        assert closed_form_inversion(params) == 1.0

    def test_branch_asymmetry_flips_with_sign(self):
        anti = lasing_point(n=8, t_hop=0.05)
        ferro = lasing_point(n=8, t_hop=0.05, sign="ferro")
        assert closed_form_intensity(anti, "staggered") == pytest.approx(
            closed_form_intensity(ferro, "uniform"), rel=1e-12
        )
        assert closed_form_intensity(anti, "uniform") == pytest.approx(
            closed_form_intensity(ferro, "staggered"), rel=1e-12
        )

    def test_branch_validation(self):
        with pytest.raises(SpecValidationError):
            closed_form_intensity(lasing_point(n=5), branch="staggered")
        with pytest.raises(SpecValidationError):
            closed_form_intensity(lasing_point(), branch="spiral")


class TestSteadyBosonNumber:
    def test_reference_point(self):
        assert steady_boson_number(lasing_point()) == pytest.approx(50.0, rel=1e-12)

    def test_hopping_correction(self):
        # t/kappa = 1/2 cuts the loop-gain factor to 2/(1 + 3/4) = 8/7
        params = ModelParams(g=1.0, kappa=0.1, gamma=5.0, t_hop=0.05,
                             kappa_tilde=1.0, lattice=LatticeSpec(1, (4,)))
        assert steady_boson_number(params) == pytest.approx(50.0 / 7.0, rel=1e-12)

    def test_threshold_and_below_clamp(self):
        at = ModelParams(g=1.0, kappa=0.2, gamma=5.0, t_hop=0.0, kappa_tilde=0.2,
                         lattice=LatticeSpec(1, (4,)))
        below = lasing_point(kappa=0.5)
        assert steady_boson_number(at) == 0.0
        assert steady_boson_number(below) == 0.0


class TestThreshold:
    def test_pump_sweep(self):
        def mk(gamma):
            return ModelParams(g=1.0, kappa=0.1, gamma=gamma, t_hop=0.0,
                               kappa_tilde=0.1, lattice=LatticeSpec(1, (4,)))
        crit = detect_threshold(mk, 5.0, 20.0)
        assert crit == pytest.approx(10.0, rel=1e-3)

    def test_hopping_shifts_threshold(self):
        def mk(gamma):
            return ModelParams(g=1.0, kappa=0.1, gamma=gamma, t_hop=0.01,
                               kappa_tilde=0.1, lattice=LatticeSpec(1, (4,)))
        crit = detect_threshold(mk, 5.0, 20.0)
        assert crit == pytest.approx(10.0 / 1.03, rel=1e-3)

    def test_unbracketed_sweep_rejected(self):
        def mk(gamma):
            return ModelParams(g=1.0, kappa=0.1, gamma=gamma, t_hop=0.0,
                               kappa_tilde=0.1, lattice=LatticeSpec(1, (4,)))
        with pytest.raises(SpecValidationError):
            detect_threshold(mk, 3.0, 8.0)  # lasing at both ends
        with pytest.raises(SpecValidationError):
            detect_threshold(mk, 8.0, 5.0)  # inverted interval
