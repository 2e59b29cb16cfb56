"""Model parameters, lattice geometry and derived working coefficients.

The microscopic model is a lattice of single-qubit lasers: each site holds a
bosonic mode (loss ``kappa``) coupled at rate ``g`` to an incoherently pumped
qubit (pump ``gamma``), weakly driven at resonance with amplitude
``epsilon_abs * exp(i*phi)``.  Adjacent modes are coupled dissipatively through
eliminated auxiliary modes (hop ``t_hop``, auxiliary loss ``kappa_tilde``),
which contributes a collective loss channel per bond with rate
``t_hop**2 / kappa_tilde``.

Everything downstream (mean-field, Langevin, angular sampling) works with the
derived coefficient set computed here.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

from .errors import SpecValidationError

COUPLING_SIGNS = ("antiferro", "ferro")
DRIVE_PATTERNS = ("uniform", "staggered")

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LatticeSpec:
    """Hypercubic lattice, row-major site indexing, optional periodic wrap.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 to 3.
    lengths : tuple of int
        Extent per axis; one entry per dimension, each >= 2.
    periodic : bool
        Wrap neighbors around each axis (default True).
    """

    dim: int
    lengths: tuple[int, ...]
    periodic: bool = True

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise SpecValidationError(f"dim must be 1, 2 or 3, got {self.dim}")
        lengths = tuple(int(n) for n in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if len(lengths) != self.dim:
            raise SpecValidationError(f"lengths {lengths} does not match dim={self.dim}")
        if any(n < 2 for n in lengths):
            raise SpecValidationError(f"every axis length must be >= 2, got {lengths}")

    @property
    def n_sites(self) -> int:
        return math.prod(self.lengths)

    def coords(self, site: int) -> tuple[int, ...]:
        """Row-major coordinates of a flat site index."""
        if not 0 <= site < self.n_sites:
            raise SpecValidationError(f"site {site} out of range for {self.n_sites} sites")
        out = []
        for n in reversed(self.lengths):
            out.append(site % n)
            site //= n
        return tuple(reversed(out))

    def index(self, coords: tuple[int, ...]) -> int:
        """Flat site index of row-major coordinates (assumed in range)."""
        site = 0
        for c, n in zip(coords, self.lengths):
            site = site * n + c
        return site

    def parity(self, site: int) -> int:
        """Checkerboard parity (sum of coordinates mod 2)."""
        return sum(self.coords(site)) % 2


def neighbors(lattice: LatticeSpec, site: int) -> tuple[int, ...]:
    """Distinct nearest neighbors of ``site``, sorted, self excluded.

    On a periodic axis of length 2 the two directions reach the same site;
    the duplicate is removed so the bond is counted once.
    """
    coords = lattice.coords(site)
    found: set[int] = set()
    for axis, n in enumerate(lattice.lengths):
        for step in (-1, 1):
            c = coords[axis] + step
            if lattice.periodic:
                c %= n
            elif not 0 <= c < n:
                continue
            nb = list(coords)
            nb[axis] = c
            j = lattice.index(tuple(nb))
            if j != site:
                found.add(j)
    return tuple(sorted(found))


def bonds(lattice: LatticeSpec) -> tuple[tuple[int, int], ...]:
    """All nearest-neighbor bonds as (i, j) with i < j, each bond once."""
    out = set()
    for i in range(lattice.n_sites):
        for j in neighbors(lattice, i):
            out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


@dataclass(frozen=True)
class ModelParams:
    """Microscopic rates plus geometry and sign/drive conventions.

    All rates are strictly positive except ``epsilon_abs`` and ``t_hop``
    which may be zero.  ``phi`` is normalized into [0, 2*pi).
    """

    g: float
    kappa: float
    gamma: float
    t_hop: float
    kappa_tilde: float
    epsilon_abs: float = 0.0
    phi: float = 0.0
    lattice: LatticeSpec = field(default_factory=lambda: LatticeSpec(1, (2,)))
    coupling_sign: str = "antiferro"
    drive_pattern: str = "uniform"

    def __post_init__(self) -> None:
        for name in ("g", "kappa", "gamma", "kappa_tilde"):
            if getattr(self, name) <= 0.0:
                raise SpecValidationError(f"{name} must be strictly positive")
        if self.epsilon_abs < 0.0:
            raise SpecValidationError("epsilon_abs must be >= 0")
        if self.t_hop < 0.0:
            raise SpecValidationError("t_hop must be >= 0")
        if self.coupling_sign not in COUPLING_SIGNS:
            raise SpecValidationError(f"coupling_sign must be one of {COUPLING_SIGNS}")
        if self.drive_pattern not in DRIVE_PATTERNS:
            raise SpecValidationError(f"drive_pattern must be one of {DRIVE_PATTERNS}")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    @property
    def epsilon(self) -> complex:
        """Complex drive amplitude."""
        return self.epsilon_abs * complex(math.cos(self.phi), math.sin(self.phi))

    def site_phases(self) -> tuple[float, ...]:
        """Per-site drive phase: uniform phi, or phi + pi on odd parity sites."""
        if self.drive_pattern == "uniform":
            return tuple(self.phi for _ in range(self.lattice.n_sites))
        return tuple(
            (self.phi + math.pi * self.lattice.parity(j)) % TWO_PI
            for j in range(self.lattice.n_sites)
        )


@dataclass(frozen=True)
class DerivedCoeffs:
    """Working coefficients of the reduced mode dynamics.

    ``A`` gain, ``B`` gain saturation, ``D`` dissipative bond rate,
    ``C = kappa + D`` total local loss; dimensionless ``lam`` (saturation),
    ``mu`` (distance above threshold), ``nu`` (reduced drive), ``varsigma``
    (reduced bond coupling); cooperativity ``C_p`` and its hopping-corrected
    variant ``C_p_tilde``; saturation scale ``n_mf``; working per-site boson
    number ``n0``; effective inverse temperature ``beta_eff``; angular-model
    couplings ``K_bond`` (per bond) and ``h_field`` (per site).
    """

    A: float
    B: float
    C: float
    D: float
    lam: float
    mu: float
    nu: float
    varsigma: float
    C_p: float
    C_p_tilde: float
    n_mf: float
    n0: float
    beta_eff: float
    K_bond: float
    h_field: float


def derive_coeffs(params: ModelParams, n0_override: float | None = None) -> DerivedCoeffs:
    """Map microscopic rates to the derived coefficient set.

    ``n0`` defaults to ``n_mf * (C_p_tilde - 1)`` clamped at zero; pass
    ``n0_override`` to pin it directly (scaling studies do this because the
    formula is unreliable near threshold).  Emits a non-fatal warning when
    the pump is not well separated from the other rates
    (``gamma / max(g, kappa, epsilon_abs) < 10``), where the adiabatic
    reduction behind these coefficients degrades.
    """
    g, kappa, gamma = params.g, params.kappa, params.gamma
    t, kappa_tilde = params.t_hop, params.kappa_tilde

    fastest = max(g, kappa, params.epsilon_abs)
    if gamma / fastest < 10.0:
        warnings.warn(
            f"adiabatic separation is weak: gamma/max(g, kappa, |eps|) = "
            f"{gamma / fastest:.3g} < 10; derived coefficients are approximate",
            UserWarning,
            stacklevel=2,
        )

    A = g * g / gamma
    B = 2.0 * g**4 / gamma**3
    D = t * t / kappa_tilde
    C = kappa + D
    C_p = g * g / (kappa * gamma)
    C_p_tilde = C_p / (1.0 + 3.0 * (t / kappa) ** 2)
    n_mf = 2.0 * gamma * gamma / (g * g)

    if n0_override is not None:
        if n0_override < 0.0:
            raise SpecValidationError("n0_override must be >= 0")
        n0 = float(n0_override)
    else:
        n0 = max(n_mf * (C_p_tilde - 1.0), 0.0)

    varsigma = D / A
    nu = params.epsilon_abs / A
    return DerivedCoeffs(
        A=A,
        B=B,
        C=C,
        D=D,
        lam=B / (2.0 * A),
        mu=(A - C) / A,
        nu=nu,
        varsigma=varsigma,
        C_p=C_p,
        C_p_tilde=C_p_tilde,
        n_mf=n_mf,
        n0=n0,
        beta_eff=n0 / (C_p * kappa),
        K_bond=4.0 * varsigma * n0,
        h_field=2.0 * nu * math.sqrt(n0),
    )
