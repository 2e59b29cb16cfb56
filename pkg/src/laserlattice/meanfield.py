"""Deterministic mean-field dynamics of the coupled mode/qubit lattice.

Each site carries a complex mode amplitude, a complex qubit coherence and a
real inversion.  The closed equations integrated here are

    d(amp_j)/dt  = +g coh_j - C amp_j - s_b (t^2/kappa_tilde) sum_nn amp_k
                   - i eps_j
    d(coh_j)/dt  = g inv_j amp_j - gamma coh_j
    d(inv_j)/dt  = -4 g Re(conj(coh_j) amp_j) - 2 gamma (inv_j - 1)

with ``C = kappa + t^2/kappa_tilde`` and ``s_b = +1`` (anti-aligning bonds)
or ``-1`` (aligning).  The coherence feeds the mode with ``+g`` so that the
mode -> coherence -> mode loop supplies gain: lasing sets in when the loop
gain ``g^2 / (gamma * C_eff)`` of the seeded spatial branch exceeds one.

The integrator is classical RK4 with a step-size guard, a divergence abort,
and snapshot sampling for export.  ``closed_form_intensity`` gives the exact
fixed point of these equations, which the integrator must reproduce to high
accuracy; ``steady_boson_number`` evaluates the reduced-theory occupation
formula used by the rest of the package.  The two disagree by a fixed factor
(see the acceptance suite), so both are exposed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError, SpecValidationError
from .model import LatticeSpec, ModelParams, neighbors

_INV_TOL = 1e-4
_DIVERGENCE_FACTOR = 1e6
_STABILITY_LIMIT = 0.1

_BOND_SIGN = {"antiferro": 1, "ferro": -1}
_BRANCH_SIGN = {"uniform": 1, "staggered": -1}


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    """Per-site dynamical variables: mode amplitude, qubit coherence, inversion."""

    amp: np.ndarray        # complex mode amplitude per site
    coherence: np.ndarray  # complex qubit coherence per site
    inversion: np.ndarray  # real inversion per site

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        coh = np.asarray(self.coherence, dtype=complex)
        inv = np.asarray(self.inversion, dtype=float)
        if not (amp.ndim == 1 and amp.shape == coh.shape == inv.shape):
            raise SpecValidationError(
                "amp, coherence and inversion must be 1d arrays of equal length"
            )
        for name, arr in (("amp", amp), ("coherence", coh), ("inversion", inv)):
            if not np.all(np.isfinite(arr)):
                raise SpecValidationError(f"{name} must contain finite entries only")
        if np.max(np.abs(inv)) > 1.0 + _INV_TOL:
            raise SpecValidationError(
                f"inversion out of physical range: max |inv| = {np.max(np.abs(inv)):.6g}"
            )
        object.__setattr__(self, "amp", amp)
        object.__setattr__(self, "coherence", coh)
        object.__setattr__(self, "inversion", inv)

    @property
    def n_sites(self) -> int:
        return self.amp.shape[0]


@dataclass(frozen=True, eq=False)
class MeanFieldTrajectory:
    """Snapshots of one integration: arrays indexed (sample, site)."""

    times: np.ndarray
    amp: np.ndarray
    coherence: np.ndarray
    inversion: np.ndarray

    @property
    def final(self) -> MeanFieldState:
        return MeanFieldState(self.amp[-1], self.coherence[-1], self.inversion[-1])

    @property
    def intensity(self) -> np.ndarray:
        """|amp|^2 per snapshot and site."""
        return np.abs(self.amp) ** 2


def default_seed_state(params: ModelParams, scale: float = 1e-3) -> MeanFieldState:
    """Tiny uniform seed: the equations cannot leave amp = 0 on their own,
    so above-threshold runs start from a small real amplitude that fixes the
    otherwise spontaneous overall phase."""
    n = params.lattice.n_sites
    n_mf = 2.0 * params.gamma**2 / params.g**2
    amp = np.full(n, scale * math.sqrt(n_mf), dtype=complex)
    return MeanFieldState(amp, np.zeros(n, complex), np.ones(n))


def _neighbor_table(lattice: LatticeSpec):
    """Padded neighbor index matrix plus 0/1 weights (open-boundary safe)."""
    lists = [neighbors(lattice, s) for s in range(lattice.n_sites)]
    z_max = max(len(l) for l in lists)
    idx = np.zeros((lattice.n_sites, z_max), dtype=np.int64)
    w = np.zeros((lattice.n_sites, z_max))
    for s, nbrs in enumerate(lists):
        idx[s, : len(nbrs)] = nbrs
        w[s, : len(nbrs)] = 1.0
    return idx, w


def integrate_maxwell_bloch(
    params: ModelParams,
    init: MeanFieldState,
    dt: float,
    t_end: float,
    sample_stride: int | None = None,
) -> MeanFieldTrajectory:
    """RK4 integration of the mode/coherence/inversion equations.

    Snapshots (including the initial state) are kept every ``sample_stride``
    steps; the default stride keeps roughly 256 samples.  Aborts with
    ``DivergenceError`` when any |amp| exceeds 1e6 * sqrt(n_mf).
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise SpecValidationError("dt must be finite and > 0")
    if not (t_end > 0.0 and math.isfinite(t_end)):
        raise SpecValidationError("t_end must be finite and > 0")
    g, gamma, kappa = params.g, params.gamma, params.kappa
    d_rate = params.t_hop**2 / params.kappa_tilde
    fastest = max(gamma, kappa, g, d_rate)
    if dt * fastest > _STABILITY_LIMIT:
        raise SpecValidationError(
            f"dt too large for stability: dt * max rate = {dt * fastest:.3g} > "
            f"{_STABILITY_LIMIT}"
        )
    n = params.lattice.n_sites
    if init.n_sites != n:
        raise SpecValidationError(f"init has {init.n_sites} sites, lattice has {n}")

    n_steps = int(math.ceil(t_end / dt))
    if sample_stride is None:
        sample_stride = max(1, n_steps // 256)
    elif sample_stride < 1:
        raise SpecValidationError("sample_stride must be >= 1")

    c_loss = kappa + d_rate
    s_b = _BOND_SIGN[params.coupling_sign]
    drive = params.epsilon_abs * np.exp(1j * np.asarray(params.site_phases()))
    idx, w = _neighbor_table(params.lattice)
    n_mf = 2.0 * gamma**2 / g**2
    amp_cap = _DIVERGENCE_FACTOR * math.sqrt(n_mf)

    def derivs(amp, coh, inv):
        nb = (amp[idx] * w).sum(axis=1)
        d_amp = g * coh - c_loss * amp - s_b * d_rate * nb - 1j * drive
        d_coh = g * inv * amp - gamma * coh
        d_inv = -4.0 * g * (np.conj(coh) * amp).real - 2.0 * gamma * (inv - 1.0)
        return d_amp, d_coh, d_inv

    amp = init.amp.astype(complex)
    coh = init.coherence.astype(complex)
    inv = init.inversion.astype(float)

    times = [0.0]
    amps = [amp.copy()]
    cohs = [coh.copy()]
    invs = [inv.copy()]

    sixth = dt / 6.0
    half = dt / 2.0
    for step in range(1, n_steps + 1):
        ka1, kc1, ki1 = derivs(amp, coh, inv)
        ka2, kc2, ki2 = derivs(amp + half * ka1, coh + half * kc1, inv + half * ki1)
        ka3, kc3, ki3 = derivs(amp + half * ka2, coh + half * kc2, inv + half * ki2)
        ka4, kc4, ki4 = derivs(amp + dt * ka3, coh + dt * kc3, inv + dt * ki3)
        amp = amp + sixth * (ka1 + 2.0 * (ka2 + ka3) + ka4)
        coh = coh + sixth * (kc1 + 2.0 * (kc2 + kc3) + kc4)
        inv = inv + sixth * (ki1 + 2.0 * (ki2 + ki3) + ki4)
        peak = np.max(np.abs(amp)) if amp.size else 0.0
        if not math.isfinite(peak) or peak > amp_cap:
            raise DivergenceError(
                f"mean-field amplitude diverged at t = {step * dt:.6g}: "
                f"max |amp| = {peak:.3g} exceeds {amp_cap:.3g}"
            )
        if step % sample_stride == 0 or step == n_steps:
            times.append(step * dt)
            amps.append(amp.copy())
            cohs.append(coh.copy())
            invs.append(inv.copy())

    return MeanFieldTrajectory(
        times=np.asarray(times),
        amp=np.asarray(amps),
        coherence=np.asarray(cohs),
        inversion=np.asarray(invs),
    )


def steady_boson_number(params: ModelParams) -> float:
    """Reduced-theory per-site occupation ``n_mf * (C_p_tilde - 1)``, >= 0.

    This is the occupation formula the reduced (adiabatically eliminated)
    description quotes for the lasing branch; the full mean-field fixed point
    is ``closed_form_intensity``, which is smaller by a fixed factor of four
    at zero hopping.  Both are exposed so each claim is tested against the
    right reference.
    """
    c_p = params.g**2 / (params.kappa * params.gamma)
    c_p_tilde = c_p / (1.0 + 3.0 * (params.t_hop / params.kappa) ** 2)
    n_mf = 2.0 * params.gamma**2 / params.g**2
    return max(n_mf * (c_p_tilde - 1.0), 0.0)


def _effective_loss(params: ModelParams, branch: str) -> float:
    """Linear mode loss seen by a uniform or checkerboard configuration."""
    if branch not in _BRANCH_SIGN:
        raise SpecValidationError(f"branch must be one of {tuple(_BRANCH_SIGN)}")
    lat = params.lattice
    if branch == "staggered" and lat.periodic and any(n % 2 for n in lat.lengths):
        raise SpecValidationError(
            "staggered branch needs even axis lengths on a periodic lattice"
        )
    d_rate = params.t_hop**2 / params.kappa_tilde
    z = len(neighbors(lat, 0))
    s_b = _BOND_SIGN[params.coupling_sign]
    return params.kappa + d_rate + s_b * _BRANCH_SIGN[branch] * z * d_rate


def closed_form_intensity(params: ModelParams, branch: str = "uniform") -> float:
    """Exact steady per-site |amp|^2 of the integrated equations, >= 0.

    Setting the time derivatives to zero for a configuration in the given
    spatial branch gives inversion ``gamma * C_eff / g^2`` and intensity
    ``(gamma^2 / 2 g^2) * (g^2 / (gamma * C_eff) - 1)``, clamped at zero
    below threshold.
    """
    c_eff = _effective_loss(params, branch)
    loop_gain = params.g**2 / (params.gamma * c_eff)
    return max(0.0, params.gamma**2 / (2.0 * params.g**2) * (loop_gain - 1.0))


def closed_form_inversion(params: ModelParams, branch: str = "uniform") -> float:
    """Steady inversion: pinned at the loss/gain balance above threshold."""
    c_eff = _effective_loss(params, branch)
    return min(1.0, params.gamma * c_eff / params.g**2)


def detect_threshold(
    make_params: Callable[[float], ModelParams],
    lo: float,
    hi: float,
    rel_tol: float = 1e-3,
    t_end: float = 60.0,
) -> float:
    """Bisect a one-parameter sweep for the onset of lasing.

    ``make_params`` maps the swept scalar to a full parameter set.  Each
    evaluation integrates from the tiny uniform seed and declares lasing
    when the amplitude either crosses ten times the seed or is still growing
    at ``t_end``.  The endpoints must disagree (the sweep must bracket the
    onset), otherwise a ``SpecValidationError`` is raised.
    """
    if not (rel_tol > 0.0 and lo < hi):
        raise SpecValidationError("need lo < hi and rel_tol > 0")

    def is_lasing(x: float) -> bool:
        params = make_params(x)
        d_rate = params.t_hop**2 / params.kappa_tilde
        dt = 0.99 * _STABILITY_LIMIT / max(params.gamma, params.kappa, params.g, d_rate)
        seed = default_seed_state(params)
        floor = 10.0 * np.max(np.abs(seed.amp))
        first = integrate_maxwell_bloch(params, seed, dt, t_end / 2.0, sample_stride=10**9)
        mid_norm = float(np.linalg.norm(first.amp[-1]))
        if np.max(np.abs(first.amp[-1])) > floor:
            return True
        second = integrate_maxwell_bloch(
            params, first.final, dt, t_end / 2.0, sample_stride=10**9
        )
        end_norm = float(np.linalg.norm(second.amp[-1]))
        if np.max(np.abs(second.amp[-1])) > floor:
            return True
        return end_norm > mid_norm

    lasing_lo = is_lasing(lo)
    if lasing_lo == is_lasing(hi):
        raise SpecValidationError(
            f"sweep [{lo}, {hi}] does not bracket the lasing onset "
            f"(both endpoints {'lasing' if lasing_lo else 'dark'})"
        )
    while (hi - lo) > rel_tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if is_lasing(mid) == lasing_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def write_meanfield_csv(traj: MeanFieldTrajectory, path) -> None:
    """Write trajectory snapshots as CSV rows
    (time, site, re/im amp, re/im coherence, inversion)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["time", "site", "re_amp", "im_amp", "re_coherence", "im_coherence",
             "inversion"]
        )
        n_sites = traj.amp.shape[1]
        for ti, t in enumerate(traj.times):
            for site in range(n_sites):
                a = traj.amp[ti, site]
                s = traj.coherence[ti, site]
                writer.writerow([
                    f"{t:.12g}", site,
                    f"{a.real:.12g}", f"{a.imag:.12g}",
                    f"{s.real:.12g}", f"{s.imag:.12g}",
                    f"{traj.inversion[ti, site]:.12g}",
                ])
