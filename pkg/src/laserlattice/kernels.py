"""Numba kernels for the stochastic channels.

All kernels are written against flat CSR-style neighbour arrays and consume
pre-generated random-number blocks (counter-based generator driven from
numpy), so runs are reproducible bit-for-bit for a given seed regardless of
thread count.  Observable accumulation happens in-kernel per batch; callers
divide by the measurement count and do batch-means statistics outside.

Observable slots written by the measurement step (same layout everywhere):

    0: sum_j sin(theta_j - chi_j)          (drive-frame sine sum, V)
    1: sum_j cos(theta_j - chi_j)          (drive-frame cosine sum, W)
    2: V**2
    3: W**2
    4: V*W

where ``chi`` is the *measurement* frame, which may be rotated relative to
the frame entering the dynamics.
"""

from __future__ import annotations

import numpy as np
from numba import njit

N_OBS = 5


@njit(cache=True)
def _measure_angles(theta, meas_phases, pair_a, pair_b, pair_ptr, obs, gsum):
    n = theta.shape[0]
    v = 0.0
    w = 0.0
    for j in range(n):
        d = theta[j] - meas_phases[j]
        v += np.sin(d)
        w += np.cos(d)
    obs[0] += v
    obs[1] += w
    obs[2] += v * v
    obs[3] += w * w
    obs[4] += v * w
    n_groups = pair_ptr.shape[0] - 1
    for gi in range(n_groups):
        lo = pair_ptr[gi]
        hi = pair_ptr[gi + 1]
        acc = 0.0
        for m in range(lo, hi):
            acc += np.cos(theta[pair_a[m]] - theta[pair_b[m]])
        gsum[gi] += acc / (hi - lo)


@njit(cache=True)
def metropolis_batch(
    theta,
    nbr_flat,
    nbr_ptr,
    dyn_phases,
    meas_phases,
    s_coupling,
    field,
    width,
    n_sweeps,
    thin,
    u_step,
    u_accept,
    pair_a,
    pair_b,
    pair_ptr,
    obs,
    gsum,
):
    """One batch of sequential-site Metropolis sweeps.

    ``s_coupling`` is the signed bond coefficient s*K entering the energy
    E = s*K * sum_bonds cos(theta_i - theta_j) + field * sum_j sin(theta_j - phi_j);
    the stationary law is proportional to exp(-E).  Returns (accepted,
    proposed, measurements).
    """
    n = theta.shape[0]
    accepted = 0
    n_meas = 0
    idx = 0
    for sweep in range(n_sweeps):
        for j in range(n):
            old = theta[j]
            new = old + width * (2.0 * u_step[idx] - 1.0)
            de = field * (np.sin(new - dyn_phases[j]) - np.sin(old - dyn_phases[j]))
            for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
                k = nbr_flat[p]
                de += s_coupling * (np.cos(new - theta[k]) - np.cos(old - theta[k]))
            if de <= 0.0 or u_accept[idx] < np.exp(-de):
                theta[j] = new
                accepted += 1
            idx += 1
        if (sweep + 1) % thin == 0:
            _measure_angles(theta, meas_phases, pair_a, pair_b, pair_ptr, obs, gsum)
            n_meas += 1
    return accepted, n_sweeps * n, n_meas


@njit(cache=True)
def langevin_angular_batch(
    theta,
    nbr_flat,
    nbr_ptr,
    dyn_phases,
    meas_phases,
    s_coupling,
    field,
    sigma,
    dt,
    n_steps,
    thin,
    normals,
    pair_a,
    pair_b,
    pair_ptr,
    obs,
    gsum,
):
    """Euler-Maruyama integration of the overdamped phase dynamics.

    drift_j = (sigma^2/2) * (s*K * sum_nn sin(theta_j - theta_k)
                             - field * cos(theta_j - phi_j))
    noise   = sigma * dW_j

    which is the gradient flow of the same energy the Metropolis kernel
    targets, so both share exp(-E) as the stationary law (up to O(dt) bias).
    Returns the number of measurements taken.
    """
    n = theta.shape[0]
    half_var = 0.5 * sigma * sigma
    root_dt = np.sqrt(dt)
    drift = np.empty(n)
    n_meas = 0
    for step in range(n_steps):
        for j in range(n):
            acc = 0.0
            for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
                acc += np.sin(theta[j] - theta[nbr_flat[p]])
            drift[j] = half_var * (
                s_coupling * acc - field * np.cos(theta[j] - dyn_phases[j])
            )
        for j in range(n):
            theta[j] += drift[j] * dt + sigma * root_dt * normals[step, j]
        if (step + 1) % thin == 0:
            _measure_angles(theta, meas_phases, pair_a, pair_b, pair_ptr, obs, gsum)
            n_meas += 1
    return n_meas


@njit(cache=True)
def langevin_field_batch(
    re,
    im,
    nbr_flat,
    nbr_ptr,
    drive_re,
    drive_im,
    meas_phases,
    gain_minus_loss,
    saturation,
    bond_rate,
    bond_sign,
    noise_amp,
    dt,
    n_steps,
    thin,
    normals_re,
    normals_im,
    pair_a,
    pair_b,
    pair_ptr,
    obs,
    gsum,
    amp2_out,
):
    """Full complex-amplitude Langevin dynamics (saturable gain + bond loss).

    Per site alpha_j = re_j + i*im_j:

        d alpha_j = [ (gain_minus_loss - saturation*|alpha_j|^2) alpha_j
                      - bond_sign * bond_rate * sum_nn alpha_k
                      - i * drive_j ] dt
                    + noise_amp * (dW_x + i dW_y)

    Measurement projects onto drive-frame quadratures of the *phase* of
    alpha (unit-normalized), so the observable layout matches the angular
    kernels; ``amp2_out`` additionally accumulates the mean of |alpha|^2
    over sites per measurement.  Returns the number of measurements.
    """
    n = re.shape[0]
    root_dt = np.sqrt(dt)
    dre = np.empty(n)
    dim = np.empty(n)
    theta = np.empty(n)
    n_meas = 0
    for step in range(n_steps):
        for j in range(n):
            r2 = re[j] * re[j] + im[j] * im[j]
            lin = gain_minus_loss - saturation * r2
            sx = 0.0
            sy = 0.0
            for p in range(nbr_ptr[j], nbr_ptr[j + 1]):
                k = nbr_flat[p]
                sx += re[k]
                sy += im[k]
            # -i*drive: re += drive_im, im -= drive_re
            dre[j] = lin * re[j] - bond_sign * bond_rate * sx + drive_im[j]
            dim[j] = lin * im[j] - bond_sign * bond_rate * sy - drive_re[j]
        for j in range(n):
            re[j] += dre[j] * dt + noise_amp * root_dt * normals_re[step, j]
            im[j] += dim[j] * dt + noise_amp * root_dt * normals_im[step, j]
        if (step + 1) % thin == 0:
            amp2 = 0.0
            for j in range(n):
                theta[j] = np.arctan2(im[j], re[j])
                amp2 += re[j] * re[j] + im[j] * im[j]
            amp2_out[0] += amp2 / n
            _measure_angles(theta, meas_phases, pair_a, pair_b, pair_ptr, obs, gsum)
            n_meas += 1
    return n_meas
