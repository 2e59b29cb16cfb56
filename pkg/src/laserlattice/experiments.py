"""Configuration-driven experiment harness: flat JSON spec in, schema-stable CSV out.

Spec format (one flat JSON object; unknown keys are rejected):

========================  =======================================================
key                       meaning
========================  =======================================================
mode                      one of ``meanfield``, ``sample``, ``langevin``,
                          ``exact``, ``qfi-scaling``, ``quantum-oracle``, ``kt-2d``
N_list                    system sizes (1D ring length, or torus edge for
                          ``kt-2d``, or site count 1/2 for ``quantum-oracle``);
                          strictly increasing
seeds                     base RNG seeds (stochastic modes only)
replicates                independent repeats per base seed (default 1)
output                    default CSV path (the CLI ``--out`` flag overrides it)
g, kappa, gamma           physical rates (model route)
t_hop, kappa_tilde        hopping and auxiliary-mode loss (defaults 0 / kappa)
epsilon_abs, phi          drive amplitude and phase (defaults 0)
coupling_sign             ``ferro`` (default) or ``antiferro``
K_bond, h_field           dimensionless bond coupling / field (direct route;
                          h_field defaults to 0)
========================  =======================================================

Exactly one of the two parameter routes must be present: either the physical
model rates or the dimensionless ``(K_bond, h_field)`` pair.  The direct route
is sampled in the ferromagnetic gauge.  Per-mode tuning knobs (all optional):
``sweeps``/``batches``/``burn_in``/``thin`` for the Metropolis modes, ``delta``
for ``qfi-scaling``, ``dt``/``steps``/``burn_in``/``batches``/``thin`` for
``langevin``, ``dt``/``t_end`` for ``meanfield``, ``n_max`` for
``quantum-oracle``.  Keys that do not apply to the requested mode are rejected.

Output CSV: UTF-8, LF line endings, ``#``-prefixed comment lines.  The header
comments carry the sha256 of the canonical (sorted, compact) JSON form of the
spec and the package version; trailing comment lines carry the log-log fit
summaries in the grammar::

    # fit quantity=<name> source=<value|theory_paper|theory_errorprop> \
n_points=<k> slope=<float> stderr=<float> ci95_low=<float> ci95_high=<float>

Data rows are byte-reproducible run to run except the ``wall_time`` column.
All dimensionful theory columns are recomputed per row from the row's own
parameters.  Correlation theory columns are evaluated at zero field (the
transfer-operator oracle's domain); ``theory_paper`` quotes the published
reduced prediction, ``theory_errorprop`` the error-propagated/exact one.
The ``finite_size_metric`` column is the 1D chain metric N/xi evaluated along
one axis, clamped to METRIC_CAP so the zero-coupling limit stays finite, and
0 for a single site where no chain exists.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from . import __version__
from .errors import ConvergenceError, NumericalFailure, SpecValidationError
from .exact import (
    ChainSpec,
    bessel_i_scaled_all,
    correlation_exact,
    finite_size_metric,
    kt_predictions,
    sum_correlations,
)
from .fisher import estimate_qfi_amplitude
from .langevin import LangevinConfig, run_angular
from .lindblad import (
    OracleRates,
    TruncatedHilbert,
    build_generator,
    certify_truncation,
    evolve_to_steady,
    expectations,
    steady_state_direct,
)
from .meanfield import (
    closed_form_intensity,
    closed_form_inversion,
    default_seed_state,
    integrate_maxwell_bloch,
    steady_boson_number,
)
from .model import LatticeSpec, ModelParams, derive_coeffs
from .xy import SIGN_BY_NAME, AngularProblem, SamplerConfig, problem_from_model, run_chain

__all__ = [
    "CSV_COLUMNS",
    "METRIC_CAP",
    "ExperimentRow",
    "ExperimentSpec",
    "FitSummary",
    "LogLogFit",
    "RunSummary",
    "fit_loglog_slope",
    "load_spec",
    "parse_spec",
    "run_experiment",
]

CSV_COLUMNS = (
    "mode", "N", "K_bond", "h_field", "epsilon_abs", "phi", "observable",
    "value", "std_error", "theory_paper", "theory_errorprop",
    "finite_size_metric", "seed", "wall_time",
)

#: finite stand-in for an infinite N/xi at zero coupling (CSV cells must be finite)
METRIC_CAP = 1.0e6

_CI95 = 1.959963984540054  # two-sided 95% normal quantile

MODES = ("meanfield", "sample", "langevin", "exact", "qfi-scaling", "quantum-oracle", "kt-2d")
_STOCHASTIC = frozenset({"sample", "langevin", "qfi-scaling", "kt-2d"})
_MODEL_ONLY = frozenset({"meanfield", "qfi-scaling", "quantum-oracle"})
_ZERO_FIELD_ONLY = frozenset({"exact", "kt-2d"})
_SCALING_FIT = frozenset({"exact", "sample", "qfi-scaling"})

_MODEL_KEYS = frozenset({
    "g", "kappa", "gamma", "t_hop", "kappa_tilde", "epsilon_abs", "phi", "coupling_sign",
})
_DIRECT_KEYS = frozenset({"K_bond", "h_field"})
_CORE_KEYS = frozenset({"mode", "N_list", "seeds", "replicates", "output"})
_KNOBS_BY_MODE = {
    "exact": frozenset(),
    "sample": frozenset({"sweeps", "batches", "burn_in", "thin"}),
    "kt-2d": frozenset({"sweeps", "batches", "burn_in", "thin"}),
    "qfi-scaling": frozenset({"sweeps", "batches", "burn_in", "thin", "delta"}),
    "langevin": frozenset({"dt", "steps", "burn_in", "batches", "thin"}),
    "meanfield": frozenset({"dt", "t_end"}),
    "quantum-oracle": frozenset({"n_max"}),
}


# --------------------------------------------------------------------------
# log-log scaling fits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogLogFit:
    """Weighted straight-line fit of ln(value) against ln(size)."""

    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    ci_low: float
    ci_high: float
    n_points: int


def fit_loglog_slope(sizes, values, std_errors=None) -> LogLogFit:
    """Weighted least squares of ln(values) on ln(sizes).

    ``std_errors`` are errors of ``values`` and are propagated to log space
    as se/value; they must be all zero (plain least squares with
    residual-based errors) or all positive (weights treated as known inverse
    variances).  The confidence interval is the two-sided 95% normal band
    from the fit covariance.
    """
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise SpecValidationError("sizes and values must be 1D and the same length")
    n = x.size
    if n < 3:
        raise SpecValidationError(f"slope fits need at least 3 points, got {n}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise SpecValidationError("sizes must be finite and > 0")
    if not np.all(np.isfinite(y)) or np.any(y <= 0.0):
        raise SpecValidationError("values must be finite and > 0 for a log-log fit")
    if std_errors is None:
        se = np.zeros(n)
    else:
        se = np.asarray(std_errors, dtype=float)
        if se.shape != y.shape:
            raise SpecValidationError("std_errors must match values in length")
        if not np.all(np.isfinite(se)) or np.any(se < 0.0):
            raise SpecValidationError("std_errors must be finite and >= 0")

    lx, ly = np.log(x), np.log(y)
    if np.unique(lx).size < 2:
        raise SpecValidationError("need at least 2 distinct sizes")
    lse = se / y
    if not lse.any():
        w = np.ones(n)
        residual_scaled = True
    elif np.all(lse > 0.0):
        w = 1.0 / lse**2
        residual_scaled = False
    else:
        raise SpecValidationError("std_errors must be all zero or all positive")

    s0 = float(w.sum())
    sx = float((w * lx).sum())
    sy = float((w * ly).sum())
    sxx = float((w * lx * lx).sum())
    sxy = float((w * lx * ly).sum())
    det = s0 * sxx - sx * sx
    slope = (s0 * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    var_slope = s0 / det
    var_intercept = sxx / det
    if residual_scaled:
        resid = ly - slope * lx - intercept
        sigma2 = float((w * resid**2).sum()) / (n - 2)
        var_slope *= sigma2
        var_intercept *= sigma2
    slope_se = math.sqrt(max(var_slope, 0.0))
    half = _CI95 * slope_se
    return LogLogFit(
        slope=slope,
        slope_se=slope_se,
        intercept=intercept,
        intercept_se=math.sqrt(max(var_intercept, 0.0)),
        ci_low=slope - half,
        ci_high=slope + half,
        n_points=n,
    )


# --------------------------------------------------------------------------
# rows and specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentRow:
    """One CSV data row; every numeric cell finite, std_error >= 0."""

    mode: str
    n: int
    k_bond: float
    h_field: float
    epsilon_abs: float
    phi: float
    observable: str
    value: float
    std_error: float
    theory_paper: float
    theory_errorprop: float
    finite_size: float
    seed: int
    wall_time: float

    def __post_init__(self):
        if not self.observable or any(c in self.observable for c in ",\n\r#"):
            raise SpecValidationError(f"bad observable name {self.observable!r}")
        if self.n < 1:
            raise SpecValidationError("row size must be >= 1")
        numeric = {
            "k_bond": self.k_bond, "h_field": self.h_field,
            "epsilon_abs": self.epsilon_abs, "phi": self.phi,
            "value": self.value, "std_error": self.std_error,
            "theory_paper": self.theory_paper,
            "theory_errorprop": self.theory_errorprop,
            "finite_size": self.finite_size, "wall_time": self.wall_time,
        }
        bad = sorted(name for name, v in numeric.items() if not math.isfinite(v))
        if bad:
            raise NumericalFailure(
                f"non-finite cell(s) {bad} in row {self.observable} (N={self.n}, seed={self.seed})"
            )
        if self.std_error < 0.0:
            raise NumericalFailure("std_error must be >= 0")

    def csv_cells(self) -> list[str]:
        return [
            self.mode, str(self.n), _fmt(self.k_bond), _fmt(self.h_field),
            _fmt(self.epsilon_abs), _fmt(self.phi), self.observable,
            _fmt(self.value), _fmt(self.std_error), _fmt(self.theory_paper),
            _fmt(self.theory_errorprop), _fmt(self.finite_size),
            str(self.seed), _fmt(self.wall_time),
        ]


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed and validated flat spec; see module docstring for the schema."""

    mode: str
    n_list: tuple[int, ...]
    seeds: tuple[int, ...]
    replicates: int
    output: str | None
    spec_sha256: str
    # model route (None on the direct route)
    g: float | None = None
    kappa: float | None = None
    gamma: float | None = None
    t_hop: float = 0.0
    kappa_tilde: float | None = None
    epsilon_abs: float = 0.0
    phi: float = 0.0
    coupling_sign: str = "ferro"
    # direct route (None on the model route)
    k_bond: float | None = None
    h_field: float | None = None
    # optional tuning knobs
    sweeps: int | None = None
    batches: int | None = None
    burn_in: int | None = None
    thin: int | None = None
    dt: float | None = None
    steps: int | None = None
    t_end: float | None = None
    n_max: int | None = None
    delta: float | None = None

    @property
    def is_direct(self) -> bool:
        return self.k_bond is not None

    def lattice_for(self, n: int) -> LatticeSpec:
        if self.mode == "kt-2d":
            return LatticeSpec(2, (n, n))
        return LatticeSpec(1, (max(n, 2),))

    def params_for(self, n: int) -> ModelParams:
        if self.is_direct:
            raise SpecValidationError("spec uses the direct (K_bond, h_field) route")
        return ModelParams(
            g=self.g, kappa=self.kappa, gamma=self.gamma, t_hop=self.t_hop,
            kappa_tilde=self.kappa_tilde, epsilon_abs=self.epsilon_abs,
            phi=self.phi, lattice=self.lattice_for(n),
            coupling_sign=self.coupling_sign,
        )

    def problem_for(self, n: int) -> AngularProblem:
        lattice = self.lattice_for(n)
        if self.is_direct:
            return AngularProblem(
                lattice=lattice, coupling=self.k_bond, field=self.h_field,
                sign=SIGN_BY_NAME["ferro"], phases=np.zeros(lattice.n_sites),
            )
        params = self.params_for(n)
        return problem_from_model(params, derive_coeffs(params))

    def sampler_config(self) -> SamplerConfig:
        default_sweeps, default_batches = (300, 64) if self.mode == "qfi-scaling" else (200, 48)
        return SamplerConfig(
            n_sweeps_burn=self.burn_in if self.burn_in is not None else 1500,
            n_batches=self.batches if self.batches is not None else default_batches,
            n_sweeps_per_batch=self.sweeps if self.sweeps is not None else default_sweeps,
            thin=self.thin if self.thin is not None else 2,
        )

    def langevin_config(self) -> LangevinConfig:
        return LangevinConfig(
            dt=self.dt if self.dt is not None else 0.002,
            n_steps_burn=self.burn_in if self.burn_in is not None else 50_000,
            n_batches=self.batches if self.batches is not None else 32,
            n_steps_per_batch=self.steps if self.steps is not None else 12_000,
            thin=self.thin if self.thin is not None else 5,
        )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SpecValidationError(message)


def _take_number(d: dict, key: str, default=None) -> float | None:
    if key not in d:
        return default
    v = d.pop(key)
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{key} must be a number")
    v = float(v)
    _require(math.isfinite(v), f"{key} must be finite")
    return v


def _take_int(d: dict, key: str, default=None, minimum: int | None = None) -> int | None:
    if key not in d:
        return default
    v = d.pop(key)
    _require(isinstance(v, int) and not isinstance(v, bool), f"{key} must be an integer")
    if minimum is not None:
        _require(v >= minimum, f"{key} must be >= {minimum}, got {v}")
    return v


def _take_int_list(d: dict, key: str) -> tuple[int, ...] | None:
    if key not in d:
        return None
    v = d.pop(key)
    _require(isinstance(v, list), f"{key} must be a list of integers")
    _require(all(isinstance(e, int) and not isinstance(e, bool) for e in v),
             f"{key} must contain integers only")
    return tuple(v)


def parse_spec(raw: dict) -> ExperimentSpec:
    """Validate a decoded flat-JSON spec object; fail fast on anything off-schema."""
    _require(isinstance(raw, dict), "spec must be a single JSON object")
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    sha = hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    d = dict(raw)
    mode = d.pop("mode", None)
    _require(isinstance(mode, str) and mode in MODES,
             f"mode must be one of {', '.join(MODES)}, got {mode!r}")

    model_given = sorted(_MODEL_KEYS & raw.keys())
    direct_given = sorted(_DIRECT_KEYS & raw.keys())
    _require(not (model_given and direct_given),
             f"give either model rates or (K_bond, h_field), not both: {model_given + direct_given}")
    _require(model_given or direct_given,
             "spec needs a parameter route: model rates (g, kappa, gamma, ...) or K_bond/h_field")
    direct = bool(direct_given)
    _require(not (direct and mode in _MODEL_ONLY),
             f"mode={mode} needs the physical model rates, not the direct (K_bond, h_field) route")

    allowed = _CORE_KEYS | _KNOBS_BY_MODE[mode] | (_DIRECT_KEYS if direct else _MODEL_KEYS)
    unknown = sorted(set(raw) - allowed)
    _require(not unknown, f"unknown or out-of-mode key(s) for mode={mode}: {unknown}")

    n_list = _take_int_list(d, "N_list")
    _require(n_list is not None and len(n_list) > 0, "N_list must be a non-empty list of integers")
    _require(all(b > a for a, b in zip(n_list, n_list[1:])), f"N_list must be strictly increasing, got {list(n_list)}")
    if mode == "quantum-oracle":
        _require(set(n_list) <= {1, 2}, "quantum-oracle sizes are limited to 1 or 2 sites")
    elif mode == "kt-2d":
        _require(all(n >= 8 and n % 2 == 0 for n in n_list),
                 "kt-2d torus edges must be even and >= 8")
    elif mode == "meanfield":
        _require(all(n >= 3 for n in n_list), "meanfield rings need N >= 3")
    else:
        # bipartite rings keep both coupling signs gauge-equivalent to the
        # ferromagnetic oracle frame the theory columns are computed in
        _require(all(n >= 4 and n % 2 == 0 for n in n_list),
                 f"mode={mode} rings must be even and >= 4")

    seeds = _take_int_list(d, "seeds")
    replicates = _take_int(d, "replicates", default=None, minimum=1)
    if mode in _STOCHASTIC:
        _require(seeds is not None and len(seeds) > 0, f"mode={mode} needs a non-empty seeds list")
        _require(all(s >= 0 for s in seeds), "seeds must be >= 0")
        _require(len(set(seeds)) == len(seeds), "seeds must be unique")
        replicates = 1 if replicates is None else replicates
    else:
        _require(seeds is None, f"mode={mode} is deterministic; remove the seeds key")
        _require(replicates is None, f"mode={mode} is deterministic; remove the replicates key")
        seeds, replicates = (), 1

    output = d.pop("output", None)
    if output is not None:
        _require(isinstance(output, str) and output.strip() != "", "output must be a non-empty string")

    kwargs: dict = {}
    if direct:
        k_bond = _take_number(d, "K_bond")
        _require(k_bond is not None and k_bond >= 0.0, "K_bond is required and must be >= 0")
        h_field = _take_number(d, "h_field", default=0.0)
        kwargs.update(k_bond=k_bond, h_field=h_field)
        if mode in _ZERO_FIELD_ONLY:
            _require(h_field == 0.0, f"mode={mode} needs h_field = 0")
    else:
        for key in ("g", "kappa", "gamma"):
            val = _take_number(d, key)
            _require(val is not None, f"model route needs {key}")
            kwargs[key] = val
        kwargs["t_hop"] = _take_number(d, "t_hop", default=0.0)
        kwargs["kappa_tilde"] = _take_number(d, "kappa_tilde", default=kwargs["kappa"])
        kwargs["epsilon_abs"] = _take_number(d, "epsilon_abs", default=0.0)
        kwargs["phi"] = _take_number(d, "phi", default=0.0)
        sign = d.pop("coupling_sign", "ferro")
        _require(sign in SIGN_BY_NAME, f"coupling_sign must be one of {sorted(SIGN_BY_NAME)}")
        kwargs["coupling_sign"] = sign
        if mode in _ZERO_FIELD_ONLY:
            _require(kwargs["epsilon_abs"] == 0.0, f"mode={mode} needs epsilon_abs = 0")
        if mode == "qfi-scaling":
            _require(kwargs["epsilon_abs"] > 0.0,
                     "qfi-scaling estimates a drive response and needs epsilon_abs > 0")

    kwargs["sweeps"] = _take_int(d, "sweeps", minimum=1)
    kwargs["batches"] = _take_int(d, "batches", minimum=8)
    kwargs["burn_in"] = _take_int(d, "burn_in", minimum=1)
    kwargs["thin"] = _take_int(d, "thin", minimum=1)
    kwargs["steps"] = _take_int(d, "steps", minimum=1)
    kwargs["n_max"] = _take_int(d, "n_max", minimum=1)
    for key in ("dt", "t_end", "delta"):
        val = _take_number(d, key)
        if val is not None:
            _require(val > 0.0, f"{key} must be > 0")
        kwargs[key] = val

    leftover = sorted(d)
    _require(not leftover, f"unconsumed key(s): {leftover}")  # unreachable belt-and-braces

    spec = ExperimentSpec(
        mode=mode, n_list=n_list, seeds=seeds, replicates=replicates,
        output=output, spec_sha256=sha, **kwargs,
    )
    # eager probe: surface parameter-domain errors at load time, not mid-run
    if spec.is_direct:
        spec.problem_for(spec.n_list[0])
    else:
        derive_coeffs(spec.params_for(spec.n_list[0]))
    return spec


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_spec(raw)


# --------------------------------------------------------------------------
# per-mode runners (each returns the rows of one (N, seed) work unit)
# --------------------------------------------------------------------------

def _columns_for(spec: ExperimentSpec, n: int):
    """Shared parameter columns (K, h, eps, phi, finite-size metric) at size n."""
    if spec.is_direct:
        k, h, eps, phi = spec.k_bond, spec.h_field, 0.0, 0.0
    else:
        coeffs = derive_coeffs(spec.params_for(n))
        k, h, eps, phi = coeffs.K_bond, coeffs.h_field, spec.epsilon_abs, spec.phi
    metric = 0.0 if n < 2 else min(finite_size_metric(n, k), METRIC_CAP)
    return k, h, eps, phi, metric


def _row(spec, n, seed, columns, observable, value, std_error, theory_paper, theory_errorprop):
    k, h, eps, phi, metric = columns
    return ExperimentRow(
        mode=spec.mode, n=n, k_bond=float(k), h_field=float(h),
        epsilon_abs=float(eps), phi=float(phi), observable=observable,
        value=float(value), std_error=float(std_error),
        theory_paper=float(theory_paper), theory_errorprop=float(theory_errorprop),
        finite_size=float(metric), seed=seed, wall_time=0.0,
    )


def _batch_mean_se(batch_values: np.ndarray) -> tuple[float, float]:
    b = batch_values.shape[0]
    return float(batch_values.mean()), float(batch_values.std(ddof=1) / math.sqrt(b))


def _ring_correlation_rows(spec, n, seed, result) -> list[ExperimentRow]:
    """g_d rows plus the full ring pair sum, shared by sample and langevin."""
    cols = _columns_for(spec, n)
    k = cols[0]
    chain = ChainSpec(n, k)
    scaled = bessel_i_scaled_all(1, k)
    r1 = float(scaled[1] / scaled[0])  # infinite-chain G(1); 0 at K = 0
    rows = []
    for i, d in enumerate(result.separations):
        g_mean, g_se = _batch_mean_se(result.batch_g[:, i])
        rows.append(_row(spec, n, seed, cols, f"g_{d}", g_mean, g_se,
                         r1**d, correlation_exact(chain, d)))
    # ring pair-sum over all separations: d = 0 once, each d < N/2 twice,
    # and the antipode once on even rings
    weight = np.array([1.0 if 2 * d == n else 2.0 for d in result.separations])
    batch_sum = 1.0 + result.batch_g @ weight
    s_mean, s_se = _batch_mean_se(batch_sum)
    rows.append(_row(spec, n, seed, cols, "sum_g", s_mean, s_se,
                     float(n), sum_correlations(chain)))
    return rows


def _rows_exact(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    cols = _columns_for(spec, n)
    total = sum_correlations(ChainSpec(n, cols[0]))
    return [_row(spec, n, seed, cols, "sum_g", total, 0.0, float(n), total)]


def _rows_sample(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    result = run_chain(spec.problem_for(n), spec.sampler_config(), seed)
    return _ring_correlation_rows(spec, n, seed, result)


def _rows_langevin(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    # the stationary law is sigma-independent; sigma only scales time, and the
    # discretization bias enters through sigma^2 * dt
    result = run_angular(spec.problem_for(n), 1.0, spec.langevin_config(), seed)
    return _ring_correlation_rows(spec, n, seed, result)


def _eta_pair(k_bond: float) -> tuple[float, float]:
    """(published, per-bond) algebraic-decay exponents from the bond coupling.

    The published exponent is 1/(2 pi n0 varsigma) with n0 varsigma = K_bond/4;
    the per-bond spin-wave exponent of the sampled weight is 1/(2 pi K_bond).
    """
    if k_bond <= 0.0:
        raise SpecValidationError("algebraic exponents need K_bond > 0")
    return 2.0 / (math.pi * k_bond), 1.0 / (2.0 * math.pi * k_bond)


def _rows_kt(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    cols = _columns_for(spec, n)
    if spec.is_direct:
        eta_pub, eta_bond = _eta_pair(spec.k_bond)
    else:
        pred = kt_predictions(derive_coeffs(spec.params_for(n)), spec.lattice_for(n))
        eta_pub, eta_bond = pred.eta_published, pred.eta_bond
    result = run_chain(spec.problem_for(n), spec.sampler_config(), seed)
    rows = []
    fit_d, fit_g, fit_se = [], [], []
    for i, d in enumerate(result.separations):
        g_mean, g_se = _batch_mean_se(result.batch_g[:, i])
        rows.append(_row(spec, n, seed, cols, f"g_{d}", g_mean, g_se,
                         float(d) ** -eta_pub, float(d) ** -eta_bond))
        if 2 <= d <= 8 and g_mean > 3.0 * g_se > 0.0:
            fit_d.append(d)
            fit_g.append(g_mean)
            fit_se.append(g_se)
    # the algebraic-decay exponent is only well-posed when the window is
    # resolved; the short-range control run legitimately has no such row
    if len(fit_d) >= 3:
        fit = fit_loglog_slope(fit_d, fit_g, fit_se)
        rows.append(_row(spec, n, seed, cols, "eta_fit",
                         -fit.slope, fit.slope_se, eta_pub, eta_bond))
    return rows


def _rows_qfi(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    params = spec.params_for(n)
    coeffs = derive_coeffs(params)
    est = estimate_qfi_amplitude(params, coeffs, spec.sampler_config(), seed,
                                 delta_h=spec.delta)
    cols = _columns_for(spec, n)
    return [_row(spec, n, seed, cols, "qfi_amplitude", est.value, est.std_error,
                 est.theory_paper, est.theory_errorprop)]


def _rows_meanfield(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    params = spec.params_for(n)
    d_rate = params.t_hop**2 / params.kappa_tilde
    fastest = max(params.g, params.gamma, params.kappa, d_rate)
    slowest = min(r for r in (params.gamma, params.kappa, d_rate) if r > 0.0)
    dt = spec.dt if spec.dt is not None else 0.05 / fastest
    t_end = spec.t_end if spec.t_end is not None else 200.0 / slowest
    traj = integrate_maxwell_bloch(params, default_seed_state(params), dt, t_end)
    site_mean = traj.intensity.mean(axis=1)
    n_mf = 2.0 * params.gamma**2 / params.g**2
    drift = abs(site_mean[-1] - site_mean[-2])
    if drift > max(1e-9 * n_mf, 1e-7 * site_mean[-1]):
        raise ConvergenceError(
            f"mean-field intensity still drifting by {drift:.3g} at t_end={t_end:.3g}; raise t_end"
        )
    coeffs = derive_coeffs(params)
    cols = _columns_for(spec, n)
    intensity = float(site_mean[-1])
    inversion = float(traj.final.inversion.mean())
    return [
        _row(spec, n, seed, cols, "steady_intensity", intensity, 0.0,
             steady_boson_number(params), closed_form_intensity(params)),
        _row(spec, n, seed, cols, "steady_inversion", inversion, 0.0,
             closed_form_inversion(params), closed_form_inversion(params)),
        _row(spec, n, seed, cols, "pump_cooperativity", coeffs.C_p_tilde, 0.0,
             coeffs.C_p_tilde, coeffs.C_p_tilde),
    ]


def _poisson_diagonal(hilbert: TruncatedHilbert, nbar: float) -> np.ndarray:
    """Phase-symmetric product init: qubit ground x Poisson-diagonal field."""
    m = hilbert.n_max + 1
    ns = np.arange(m, dtype=float)
    if nbar <= 0.0:
        weights = np.where(ns == 0, 1.0, 0.0)
    else:
        weights = np.exp(ns * math.log(nbar) - nbar - gammaln(ns + 1.0))
        weights /= weights.sum()
    site = np.zeros(hilbert.site_dim)
    site[:m] = weights
    diag = site
    for _ in range(hilbert.n_sites - 1):
        diag = np.kron(diag, site)
    rho = np.diag(diag).astype(complex)
    return rho / rho.trace().real


def _rows_quantum(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    params = spec.params_for(2)
    if n == 1:
        drive = params.epsilon_abs * complex(math.cos(params.phi), math.sin(params.phi))
        rates = OracleRates(g=params.g, kappa=params.kappa, gamma=params.gamma,
                            drives=(drive,))
    else:
        rates = OracleRates.from_model(params)
    n_max = spec.n_max if spec.n_max is not None else (24 if n == 1 else 8)
    hilbert = TruncatedHilbert(n, n_max)
    generator = build_generator(rates, hilbert)
    if hilbert.dim <= 64:
        rho = steady_state_direct(generator)
    else:
        nbar = max(closed_form_intensity(params), 1.0)
        ladder = math.sqrt(n_max + 1.0)
        stiff = max(params.gamma, params.g * ladder,
                    params.kappa * (n_max + 1.0), rates.bond_rate * (n_max + 1.0))
        rho = evolve_to_steady(generator, _poisson_diagonal(hilbert, nbar),
                               dt=0.1 / stiff, tolerance=1e-7, t_max=800.0)
    certify_truncation(rho, hilbert)
    record = expectations(rho, hilbert, phi=params.phi)
    cols = _columns_for(spec, n)
    inversion_theory = closed_form_inversion(params)
    return [
        _row(spec, n, seed, cols, "boson_number", float(np.mean(record.n)), 0.0,
             steady_boson_number(params), closed_form_intensity(params)),
        _row(spec, n, seed, cols, "inversion", float(np.mean(record.sigma_z)), 0.0,
             inversion_theory, inversion_theory),
    ]


_RUNNERS = {
    "exact": _rows_exact,
    "sample": _rows_sample,
    "langevin": _rows_langevin,
    "kt-2d": _rows_kt,
    "qfi-scaling": _rows_qfi,
    "meanfield": _rows_meanfield,
    "quantum-oracle": _rows_quantum,
}


def compute_task_rows(spec: ExperimentSpec, n: int, seed: int) -> list[ExperimentRow]:
    """Run one (size, seed) work unit; rows share the unit's wall time."""
    t0 = time.perf_counter()
    rows = _RUNNERS[spec.mode](spec, n, seed)
    wall = time.perf_counter() - t0
    return [replace(r, wall_time=wall) for r in rows]


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FitSummary:
    """One summary-comment fit: the fitted quantity, which column it fits, the fit."""

    quantity: str
    source: str  # "value", "theory_paper" or "theory_errorprop"
    fit: LogLogFit


@dataclass(frozen=True)
class RunSummary:
    rows: tuple[ExperimentRow, ...]
    fits: tuple[FitSummary, ...]
    out_path: str


def _effective_seeds(seeds, replicates: int, offset: int) -> tuple[int, ...]:
    """Replicate 0 runs the (offset-shifted) base seed verbatim; further
    replicates get SeedSequence-mixed children so nearby bases never collide."""
    out: list[int] = []
    for base in seeds:
        shifted = int(base) + int(offset)
        _require(shifted >= 0, f"seed {base} + offset {offset} must stay >= 0")
        out.append(shifted)
        for rep in range(1, replicates):
            child = np.random.SeedSequence((shifted, rep)).generate_state(1, np.uint32)[0]
            out.append(int(child))
    return tuple(out)


def _tasks_for(spec: ExperimentSpec, seed_offset: int) -> list[tuple[int, int]]:
    if spec.mode in _STOCHASTIC:
        seeds = _effective_seeds(spec.seeds, spec.replicates, seed_offset)
    else:
        seeds = (0,)
    return [(n, s) for n in spec.n_list for s in seeds]


def _scaling_fits(spec: ExperimentSpec, rows) -> list[FitSummary]:
    if spec.mode not in _SCALING_FIT or len(set(spec.n_list)) < 3:
        return []
    if spec.mode == "qfi-scaling":
        quantity, observable, scale_by_n = "qfi_amplitude", "qfi_amplitude", False
    else:
        quantity, observable, scale_by_n = "n_times_sum_g", "sum_g", True
    picked = [r for r in rows if r.observable == observable]
    ns = np.array([r.n for r in picked], dtype=float)
    factor = ns if scale_by_n else np.ones_like(ns)
    sources = {
        "value": (factor * [r.value for r in picked], factor * [r.std_error for r in picked]),
        "theory_paper": (factor * [r.theory_paper for r in picked], None),
        "theory_errorprop": (factor * [r.theory_errorprop for r in picked], None),
    }
    fits = []
    for source, (values, errors) in sources.items():
        try:
            fits.append(FitSummary(quantity, source, fit_loglog_slope(ns, values, errors)))
        except SpecValidationError as exc:
            raise NumericalFailure(f"scaling fit of {quantity}/{source} failed: {exc}") from exc
    return fits


def _fit_line(summary: FitSummary) -> str:
    f = summary.fit
    return (
        f"# fit quantity={summary.quantity} source={summary.source}"
        f" n_points={f.n_points} slope={f.slope!r} stderr={f.slope_se!r}"
        f" ci95_low={f.ci_low!r} ci95_high={f.ci_high!r}"
    )


def run_experiment(spec: ExperimentSpec, out_path=None, *, threads: int = 1,
                   seed_offset: int = 0) -> RunSummary:
    """Execute the spec and stream rows to CSV (flushed row by row).

    Data rows come out in deterministic (N, seed) submission order regardless
    of the worker count; completed rows stay on disk if a later unit fails.
    """
    path = out_path if out_path is not None else spec.output
    _require(path is not None, "no output path: pass --out or set the spec's output field")
    _require(threads >= 1, "threads must be >= 1")
    tasks = _tasks_for(spec, seed_offset)
    all_rows: list[ExperimentRow] = []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# laserlattice-experiment v{__version__}\n")
        fh.write(f"# spec_sha256={spec.spec_sha256}\n")
        fh.write(f"# mode={spec.mode}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.flush()

        def consume(rows):
            for row in rows:
                fh.write(",".join(row.csv_cells()) + "\n")
                fh.flush()
                all_rows.append(row)

        if threads == 1 or len(tasks) == 1:
            for n, seed in tasks:
                consume(compute_task_rows(spec, n, seed))
        else:
            with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
                futures = [pool.submit(compute_task_rows, spec, n, s) for n, s in tasks]
                try:
                    for future in futures:
                        consume(future.result())
                except BaseException:
                    for future in futures:
                        future.cancel()
                    raise

        fits = _scaling_fits(spec, all_rows)
        for summary in fits:
            fh.write(_fit_line(summary) + "\n")
    return RunSummary(tuple(all_rows), tuple(fits), str(path))
