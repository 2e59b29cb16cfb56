"""Truncated-Fock master-equation oracle for one or two sites.

Everything else in the package works with reduced or semiclassical
descriptions; this module integrates the full qubit+mode density matrix so
those reductions can be checked against an independent small-scale ground
truth.  Each site carries a qubit (dimension 2) tensor a Fock space truncated
at ``n_max``; site factors are ordered qubit-then-mode, sites left to right.

The generator is applied matrix-free (operator products on the density
matrix, never a dense superoperator); a direct null-space solve of the
vectorized generator is offered for tiny dimensions only.

Dissipator convention: ``L_{O, rate}(rho) = rate * (2 O rho O^dag
- O^dag O rho - rho O^dag O)``, so a mode with loss ``kappa`` damps its
amplitude at ``kappa`` (and its photon number at ``2 kappa``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError, NumericalFailure, SpecValidationError
from .model import ModelParams

_DIM_BUDGET = 4096
_DENSE_LIMIT = 1024     # below this, operators are kept dense for speed
_DIRECT_LIMIT = 64      # direct steady-state solve builds a dim^2 x dim^2 matrix
_HERM_TOL = 1e-10
_TRACE_TOL = 1e-8
_PSD_TOL = 1e-8
_IMAG_TOL = 1e-10
_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class TruncatedHilbert:
    """One or two qubit+mode sites with a per-mode Fock cutoff."""

    n_sites: int
    n_max: int
    budget: int = _DIM_BUDGET

    def __post_init__(self):
        if self.n_sites not in (1, 2):
            raise SpecValidationError("oracle supports 1 or 2 sites only")
        if self.n_max < 1:
            raise SpecValidationError("n_max must be >= 1")
        if self.dim > self.budget:
            raise SpecValidationError(
                f"Hilbert dimension {self.dim} exceeds budget {self.budget}"
            )

    @property
    def site_dim(self) -> int:
        return 2 * (self.n_max + 1)

    @property
    def dim(self) -> int:
        return self.site_dim ** self.n_sites


def _embed(hilbert: TruncatedHilbert, site: int, local) -> sp.csr_matrix:
    """Lift a single-site operator to the full space."""
    factors = [
        local if j == site else sp.identity(hilbert.site_dim, format="csr")
        for j in range(hilbert.n_sites)
    ]
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return sp.csr_matrix(out)


def _check_site(hilbert: TruncatedHilbert, site: int):
    if not 0 <= site < hilbert.n_sites:
        raise SpecValidationError(f"site {site} out of range")


def boson_lowering(hilbert: TruncatedHilbert, site: int) -> sp.csr_matrix:
    _check_site(hilbert, site)
    a = sp.diags(np.sqrt(np.arange(1, hilbert.n_max + 1)), 1, format="csr")
    return _embed(hilbert, site, sp.kron(sp.identity(2), a, format="csr"))


def qubit_lowering(hilbert: TruncatedHilbert, site: int) -> sp.csr_matrix:
    # qubit basis: index 0 ground, index 1 excited
    _check_site(hilbert, site)
    sm = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    return _embed(hilbert, site, sp.kron(sm, sp.identity(hilbert.n_max + 1), format="csr"))


def qubit_inversion(hilbert: TruncatedHilbert, site: int) -> sp.csr_matrix:
    _check_site(hilbert, site)
    sz = sp.diags([-1.0, 1.0], 0, format="csr")
    return _embed(hilbert, site, sp.kron(sz, sp.identity(hilbert.n_max + 1), format="csr"))


def number_operator(hilbert: TruncatedHilbert, site: int) -> sp.csr_matrix:
    a = boson_lowering(hilbert, site)
    return sp.csr_matrix(a.conj().T @ a)


def quadrature_operator(hilbert: TruncatedHilbert, site: int, phi: float,
                        which: str = "p") -> sp.csr_matrix:
    """P = i(a e^{-i phi} - a^dag e^{i phi}) or X = a e^{-i phi} + a^dag e^{i phi}."""
    a = boson_lowering(hilbert, site)
    rot = a * np.exp(-1j * phi)
    if which == "p":
        return sp.csr_matrix(1j * (rot - rot.conj().T))
    if which == "x":
        return sp.csr_matrix(rot + rot.conj().T)
    raise SpecValidationError("which must be 'p' or 'x'")


def fock_tail_projector(hilbert: TruncatedHilbert, site: int) -> sp.csr_matrix:
    """Projector onto the top retained Fock level of one mode."""
    _check_site(hilbert, site)
    top = sp.csr_matrix(
        ([1.0], ([hilbert.n_max], [hilbert.n_max])),
        shape=(hilbert.n_max + 1, hilbert.n_max + 1),
    )
    return _embed(hilbert, site, sp.kron(sp.identity(2), top, format="csr"))


# --------------------------------------------------------------------------
# generator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleRates:
    """Raw per-site rates for the oracle.

    ``ModelParams`` cannot express degenerate corners (all rates zero, or a
    single isolated site), while the oracle's closed-form checks need
    exactly those, so the generator also accepts this loose container.
    """

    g: float
    kappa: float
    gamma: float
    drives: tuple        # complex drive amplitude per site
    bond_rate: float = 0.0
    bond_sign: int = 1   # +1: a_j + a_k jump; -1: a_j - a_k

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "bond_rate"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0.0):
                raise SpecValidationError(f"{name} must be finite and >= 0")
        if self.bond_sign not in (1, -1):
            raise SpecValidationError("bond_sign must be +1 or -1")
        object.__setattr__(self, "drives", tuple(complex(d) for d in self.drives))

    @classmethod
    def from_model(cls, params: ModelParams) -> "OracleRates":
        if params.lattice.n_sites != 2:
            raise SpecValidationError(
                "only a two-site lattice maps onto the oracle"
            )
        drives = tuple(
            params.epsilon_abs * np.exp(1j * phase)
            for phase in params.site_phases()
        )
        return cls(
            g=params.g,
            kappa=params.kappa,
            gamma=params.gamma,
            drives=drives,
            bond_rate=params.t_hop**2 / params.kappa_tilde,
            bond_sign=1 if params.coupling_sign == "antiferro" else -1,
        )


class Generator:
    """Matrix-free application of the master-equation right-hand side."""

    def __init__(self, hilbert: TruncatedHilbert, hamiltonian, jumps):
        self.hilbert = hilbert
        self.hamiltonian = sp.csr_matrix(hamiltonian)
        self.jumps = [(float(rate), sp.csr_matrix(op)) for rate, op in jumps]
        # M = -iH - sum_c rate_c O_c^dag O_c; the drift is
        # M rho + rho M^dag + sum_c 2 rate_c O_c rho O_c^dag
        m = -1j * self.hamiltonian
        for rate, op in self.jumps:
            m = m - rate * (op.conj().T @ op)
        self._m = sp.csr_matrix(m)
        if hilbert.dim <= _DENSE_LIMIT:
            self._m_apply = self._m.toarray()
            self._jump_apply = [(r, op.toarray()) for r, op in self.jumps]
        else:
            self._m_apply = self._m
            self._jump_apply = self.jumps

    def apply(self, rho: np.ndarray) -> np.ndarray:
        m = self._m_apply
        out = m @ rho
        out = out + (m @ rho.conj().T).conj().T
        for rate, op in self._jump_apply:
            t = op @ rho.conj().T
            out = out + (2.0 * rate) * (op @ t.conj().T)
        return np.asarray(out)

    def liouvillian_matrix(self) -> sp.csr_matrix:
        """Row-major vectorized generator; tiny dimensions only."""
        dim = self.hilbert.dim
        if dim > _DIRECT_LIMIT:
            raise SpecValidationError(
                f"vectorized generator limited to dim <= {_DIRECT_LIMIT}"
            )
        eye = sp.identity(dim, format="csr")
        mat = sp.kron(self._m, eye) + sp.kron(eye, self._m.conj())
        for rate, op in self.jumps:
            mat = mat + 2.0 * rate * sp.kron(op, op.conj())
        return sp.csr_matrix(mat)


def build_generator(params, hilbert: TruncatedHilbert) -> Generator:
    """Assemble the resonant-frame generator for the qubit-laser site(s).

    ``params`` is either ``ModelParams`` (two sites) or ``OracleRates``.
    Hamiltonian per site: g (qubit-raise * mode-lower + h.c.) plus the
    coherent drive conj(eps) a + eps a^dag; jumps: qubit pump at gamma, mode
    loss at kappa, and for two sites the collective a_0 +- a_1 at bond_rate.
    """
    rates = OracleRates.from_model(params) if isinstance(params, ModelParams) else params
    if not isinstance(rates, OracleRates):
        raise SpecValidationError("params must be ModelParams or OracleRates")
    if len(rates.drives) != hilbert.n_sites:
        raise SpecValidationError(
            f"need {hilbert.n_sites} drive amplitudes, got {len(rates.drives)}"
        )

    dim = hilbert.dim
    h = sp.csr_matrix((dim, dim), dtype=complex)
    jumps = []
    for j in range(hilbert.n_sites):
        a = boson_lowering(hilbert, j)
        sm = qubit_lowering(hilbert, j)
        if rates.g != 0.0:
            h = h + rates.g * (sm.conj().T @ a + a.conj().T @ sm)
        eps = rates.drives[j]
        if eps != 0j:
            h = h + np.conj(eps) * a + eps * a.conj().T
        if rates.gamma != 0.0:
            jumps.append((rates.gamma, sm.conj().T))
        if rates.kappa != 0.0:
            jumps.append((rates.kappa, a))
    if hilbert.n_sites == 2 and rates.bond_rate != 0.0:
        collective = boson_lowering(hilbert, 0) \
            + rates.bond_sign * boson_lowering(hilbert, 1)
        jumps.append((rates.bond_rate, collective))
    return Generator(hilbert, h, jumps)


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------

def check_density_matrix(rho: np.ndarray, psd: bool = True):
    """Validate Hermiticity, unit trace, and (optionally) positivity."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise SpecValidationError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > _HERM_TOL:
        raise SpecValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > _TRACE_TOL or abs(np.trace(rho).imag) > _TRACE_TOL:
        raise SpecValidationError("density matrix trace must be 1")
    if psd:
        lowest = float(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)[0])
        if lowest < -_PSD_TOL:
            raise SpecValidationError(
                f"density matrix has negative eigenvalue {lowest:.3e}"
            )


def vacuum_state(hilbert: TruncatedHilbert) -> np.ndarray:
    """All modes empty, all qubits in the ground level."""
    rho = np.zeros((hilbert.dim, hilbert.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def coherent_state(hilbert: TruncatedHilbert, alphas) -> np.ndarray:
    """Product state: each qubit ground, each mode coherent at alphas[j].

    The truncated coherent vector is renormalized; the dropped tail must be
    negligible for the state to be meaningful (see ``certify_truncation``).
    """
    alphas = [complex(a) for a in alphas]
    if len(alphas) != hilbert.n_sites:
        raise SpecValidationError(f"need {hilbert.n_sites} amplitudes")
    vec = np.array([1.0], dtype=complex)
    for alpha in alphas:
        amps = np.empty(hilbert.n_max + 1, dtype=complex)
        amps[0] = 1.0
        for n in range(1, hilbert.n_max + 1):
            amps[n] = amps[n - 1] * alpha / math.sqrt(n)
        amps *= math.exp(-0.5 * abs(alpha) ** 2)
        site = np.kron(np.array([1.0, 0.0]), amps)  # qubit ground x mode
        vec = np.kron(vec, site)
    vec /= np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def certify_truncation(rho: np.ndarray, hilbert: TruncatedHilbert,
                       tol: float = _TAIL_TOL):
    """Top-Fock-level population per mode; raises when the cutoff is unsafe."""
    tails = []
    for j in range(hilbert.n_sites):
        proj = fock_tail_projector(hilbert, j)
        pop = float(np.real(np.trace(proj @ rho)))
        tails.append(pop)
        if pop >= tol:
            raise NumericalFailure(
                f"top Fock level of mode {j} holds population {pop:.3e}; "
                "raise n_max"
            )
    return tuple(tails)


# --------------------------------------------------------------------------
# evolution
# --------------------------------------------------------------------------

def evolve(generator: Generator, initial: np.ndarray, dt: float,
           n_steps: int) -> np.ndarray:
    """Fixed-horizon classical 4th-order stepping with per-step cleanup."""
    if not (dt > 0.0 and math.isfinite(dt)) or n_steps < 1:
        raise SpecValidationError("need dt > 0 and n_steps >= 1")
    check_density_matrix(initial, psd=initial.shape[0] <= 256)
    rho = np.array(initial, dtype=complex)
    for _ in range(n_steps):
        k1 = generator.apply(rho)
        k2 = generator.apply(rho + (0.5 * dt) * k1)
        k3 = generator.apply(rho + (0.5 * dt) * k2)
        k4 = generator.apply(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        rho = (rho + rho.conj().T) / 2.0
        rho = rho / np.trace(rho).real
    return rho


def evolve_to_steady(generator: Generator, initial: np.ndarray, dt: float,
                     tolerance: float, t_max: float = 600.0,
                     check_every: int = 25) -> np.ndarray:
    """Step until the entrywise 1-norm of the drift falls below tolerance."""
    if tolerance <= 0.0 or t_max <= 0.0 or check_every < 1:
        raise SpecValidationError(
            "tolerance, t_max, and check_every must be positive"
        )
    rho = np.array(initial, dtype=complex)
    t = 0.0
    first = True
    while t < t_max:
        rho = evolve(generator, rho, dt, check_every) if first else \
            _evolve_unchecked(generator, rho, dt, check_every)
        first = False
        t += dt * check_every
        drift = float(np.sum(np.abs(generator.apply(rho))))
        if drift < tolerance:
            return rho
    raise ConvergenceError(
        f"no steady state within t = {t_max} (drift {drift:.3e} "
        f"vs tolerance {tolerance:.3e})"
    )


def _evolve_unchecked(generator, rho, dt, n_steps):
    for _ in range(n_steps):
        k1 = generator.apply(rho)
        k2 = generator.apply(rho + (0.5 * dt) * k1)
        k3 = generator.apply(rho + (0.5 * dt) * k2)
        k4 = generator.apply(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        rho = (rho + rho.conj().T) / 2.0
        rho = rho / np.trace(rho).real
    return rho


def steady_state_direct(generator: Generator) -> np.ndarray:
    """Solve L[rho] = 0, tr rho = 1 as one sparse linear system (tiny dims).

    The trace functional annihilates every row combination of the vectorized
    generator, so replacing one diagonal-entry row with the trace constraint
    loses no information and pins the normalization.
    """
    dim = generator.hilbert.dim
    mat = generator.liouvillian_matrix().tolil()
    trace_row = np.zeros(dim * dim, dtype=complex)
    trace_row[np.arange(dim) * dim + np.arange(dim)] = 1.0
    mat[0, :] = trace_row
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    vec = spsolve(sp.csc_matrix(mat), rhs)
    rho = vec.reshape(dim, dim)
    rho = (rho + rho.conj().T) / 2.0
    rho = rho / np.trace(rho).real
    residual = float(np.sum(np.abs(generator.apply(rho))))
    if residual > 1e-9 * dim:
        raise NumericalFailure(
            f"direct steady-state residual {residual:.3e} too large"
        )
    check_density_matrix(rho)
    return rho


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpectationRecord:
    """Per-site steady-state readouts; all entries are real numbers."""

    phi: tuple
    n: tuple
    sigma_z: tuple
    p_quad: tuple
    x_quad: tuple


def _real_expect(op, rho: np.ndarray) -> float:
    val = complex(np.trace(op @ rho))
    if abs(val.imag) > _IMAG_TOL * max(1.0, abs(val.real)):
        raise NumericalFailure(
            f"expectation of a Hermitian observable has imaginary part {val.imag:.3e}"
        )
    return val.real


def expectations(rho: np.ndarray, hilbert: TruncatedHilbert,
                 phi=0.0) -> ExpectationRecord:
    """Photon number, inversion, and both quadratures at frame angle(s) phi."""
    if np.isscalar(phi):
        phis = (float(phi),) * hilbert.n_sites
    else:
        phis = tuple(float(p) for p in phi)
        if len(phis) != hilbert.n_sites:
            raise SpecValidationError(f"need {hilbert.n_sites} frame angles")
    n_vals, z_vals, p_vals, x_vals = [], [], [], []
    for j in range(hilbert.n_sites):
        n_vals.append(_real_expect(number_operator(hilbert, j), rho))
        z_vals.append(_real_expect(qubit_inversion(hilbert, j), rho))
        p_vals.append(_real_expect(quadrature_operator(hilbert, j, phis[j], "p"), rho))
        x_vals.append(_real_expect(quadrature_operator(hilbert, j, phis[j], "x"), rho))
    return ExpectationRecord(
        phi=phis, n=tuple(n_vals), sigma_z=tuple(z_vals),
        p_quad=tuple(p_vals), x_quad=tuple(x_vals),
    )
