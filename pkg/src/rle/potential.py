"""Replica-symmetric potential, its stationary points and the thresholds.

The potential over the trial MSE E in [0, v] is

    i_rs(E; delta) = psi(E; delta) + I(snr(E)),
    psi(E; delta)  = alpha B [ln(1 + E/delta) - E/(E + delta)] / 2,
    snr(E)         = alpha B / (delta + E),

with I the denoising-channel mutual information.  Differentiating through
snr(E) with dI/dsnr = mmse/2 gives

    d i_rs / dE = alpha B (E - mmse(snr(E))) / (2 (delta + E)^2),

so the stationary points are exactly the fixed points of the state
evolution map E -> mmse(snr(E)).  Stationary points are located from the
sign of E - mmse(snr(E)), which carries the sign of the derivative.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError
from .prior import (DiscretePrior, channel_mi, channel_mmse, load_prior,
                    prior_entropy, section_power)
from .quadrature import DEFAULT_QUADRATURE, Quadrature

log = logging.getLogger(__name__)

SCENARIOS = ("no-transition", "higher-order", "first-order")

DEFAULT_GRID = 1024
DELTA_MIN = 1e-4
DELTA_MAX = 1e4
# below this the fixed-point multiplicity is taken to persist down to delta = 0
LOW_PROBE_LIMIT = 1e-10
# Delta scan resolution when bracketing thresholds
SCAN_POINTS_PER_OCTAVE = 8
# internal bisection width as a fraction of the requested tolerance
REFINE = 1 / 64
# two minima whose potentials differ by less than this are a tie
TIE_TOL = 1e-12
# minimizers closer than this fraction of v are one minimizer
TIE_MERGE = 1e-8


class StationaryPointWarning(RuntimeWarning):
    """The potential has more stationary points than the standing assumption allows."""


class DegenerateMinimumError(DomainError):
    """The potential has two global minimizers (delta sits on the transition)."""


@dataclass(frozen=True)
class SystemParams:
    """Measurement rate, noise variance and prior of one CS system."""

    alpha: float
    delta: float
    prior: DiscretePrior
    B: int | None = None
    quadrature: Quadrature = field(default=DEFAULT_QUADRATURE, compare=False)

    def __post_init__(self):
        prior = load_prior(self.prior)
        object.__setattr__(self, "prior", prior)
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.delta >= 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")
        if self.B is None:
            object.__setattr__(self, "B", prior.B)
        elif int(self.B) != prior.B:
            raise DomainError(f"B={self.B} does not match prior dimension {prior.B}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def v(self):
        return section_power(self.prior)

    @property
    def conjectural(self):
        """True when the asymptotic statements are only conjectured (B >= 2)."""
        return self.B >= 2

    def with_delta(self, delta):
        return replace(self, delta=float(delta))


@dataclass(frozen=True)
class PotentialAnalysis:
    """Global minimizer, stationary points and scenario of i_rs(.; delta)."""

    e_tilde: float
    i_rs_min: float
    stationary_points: tuple
    minima: tuple
    scenario: str
    degenerate: bool = False
    minimizers: tuple = ()
    conjectural: bool = False

    @property
    def metastable(self):
        return len(self.minima) >= 2


def psi(E, params):
    """Gaussian-channel part of the potential; the delta = 0 limit is +inf for E > 0."""
    if E < 0:
        raise DomainError(f"E must be >= 0, got {E}")
    alpha_b = params.alpha * params.B
    delta = params.delta
    if E == 0:
        return 0.0
    if delta == 0:
        return math.inf
    if math.isinf(delta):
        return 0.0
    x = E / delta
    return 0.5 * alpha_b * (math.log1p(x) - x / (1.0 + x))


def effective_snr(E, params):
    """alpha B / (delta + E)."""
    total = params.delta + E
    if not total > 0:
        raise DomainError(f"delta + E must be > 0, got {total}")
    return params.alpha * params.B / total


def _check_E(E, v):
    if not (-1e-12 * max(v, 1.0) <= E <= v * (1 + 1e-12) + 1e-300):
        raise DomainError(f"E={E} outside [0, v={v}]")
    return min(max(E, 0.0), v)


def _channel_term(E, params):
    if math.isinf(params.delta):
        return 0.0
    if params.delta + E == 0:
        return prior_entropy(params.prior)
    return channel_mi(params.prior, effective_snr(E, params), params.quadrature)


def rs_potential(E, params):
    """i_rs(E; delta) in nats."""
    E = _check_E(E, params.v)
    return psi(E, params) + _channel_term(E, params)


def fixed_point_residual(E, params):
    """E - mmse(snr(E)); same sign as d i_rs / dE.  Accepts arrays."""
    E = np.asarray(E, dtype=float)
    snr = params.alpha * params.B / (params.delta + E)
    return E - channel_mmse(params.prior, snr, params.quadrature)


def rs_potential_derivative(E, params):
    """Closed form d i_rs / dE = alpha B (E - mmse(snr(E))) / (2 (delta + E)^2)."""
    E = _check_E(E, params.v)
    alpha_b = params.alpha * params.B
    return 0.5 * alpha_b * float(fixed_point_residual(E, params)) / (params.delta + E) ** 2


def _sign_change_roots(params, grid):
    """Roots of the fixed-point residual from sign changes on `grid`."""
    g = fixed_point_residual(grid, params)
    f = lambda e: float(fixed_point_residual(e, params))
    roots = []
    v = params.v
    for k in range(len(grid) - 1):
        a, b = g[k], g[k + 1]
        if a == 0.0:
            roots.append(float(grid[k]))
        elif a * b < 0:
            roots.append(brentq(f, grid[k], grid[k + 1], xtol=1e-15 * max(v, 1e-300), rtol=1e-15, maxiter=200))
    if g[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots, g


def count_stationary_points(params, grid_size=DEFAULT_GRID):
    """Number of sign changes of d i_rs / dE on a uniform grid (no refinement)."""
    v = params.v
    if v == 0 or params.prior.K == 1:
        return 1
    g = fixed_point_residual(np.linspace(0.0, v, grid_size), params)
    s = np.sign(g)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def analyze_potential(params, grid_size=DEFAULT_GRID):
    """Locate all stationary points of i_rs on [0, v] and its global minimizer.

    Ties between global minima are broken toward the smaller E, and the
    analysis is flagged `degenerate`.
    """
    if grid_size < 64:
        raise DomainError("grid_size must be >= 64")
    prior = params.prior
    v = params.v
    conj = params.conjectural
    if v == 0 or prior.K == 1:
        return PotentialAnalysis(0.0, 0.0, (0.0,), (0.0,), "no-transition", conjectural=conj)
    if params.delta == 0:
        h = prior_entropy(prior)
        return PotentialAnalysis(0.0, h, (0.0,), (0.0,), "no-transition", conjectural=conj)
    if math.isinf(params.delta):
        return PotentialAnalysis(prior.variance, 0.0, (prior.variance,), (prior.variance,), "no-transition",
                                 conjectural=conj)

    grid = np.linspace(0.0, v, grid_size)
    roots, _ = _sign_change_roots(params, grid)
    roots = sorted(set(roots))
    alpha_b = params.alpha * params.B
    minima = []
    for r in roots:
        lo, hi = max(r - 1e-7 * v, 0.0), min(r + 1e-7 * v, v)
        left = float(fixed_point_residual(lo, params)) if lo < r else -1.0
        right = float(fixed_point_residual(hi, params)) if hi > r else 1.0
        if left <= 0 <= right:
            minima.append(r)
        deriv = 0.5 * alpha_b * abs(float(fixed_point_residual(r, params))) / (params.delta + r) ** 2
        if deriv > 1e-10:
            log.debug("stationary point %.17g refined only to |di/dE|=%.3g", r, deriv)
    if len(roots) > 3:
        warnings.warn(f"{len(roots)} stationary points at delta={params.delta!r}; "
                      "more than three violates the standing assumption", StationaryPointWarning)

    candidates = sorted(set(roots) | {0.0, v})
    values = [rs_potential(e, params) for e in candidates]
    best = min(values)
    e_best = candidates[values.index(best)]
    # ties count only among local minima; an endpoint is one when the
    # derivative points out of [0, v]
    local = set(minima) | {e_best}
    if float(fixed_point_residual(0.0, params)) >= 0:
        local.add(0.0)
    if float(fixed_point_residual(v, params)) <= 0:
        local.add(v)
    winners = [e for e, val in zip(candidates, values)
               if e in local and val - best <= TIE_TOL * max(1.0, abs(best))]
    # an endpoint next to a stationary point is the same minimizer
    merged = [winners[0]]
    for e in winners[1:]:
        if e - merged[-1] > TIE_MERGE * v:
            merged.append(e)
    winners = merged
    e_tilde = winners[0]
    scenario = "first-order" if len(minima) >= 2 else "no-transition"
    return PotentialAnalysis(
        e_tilde=e_tilde,
        i_rs_min=best,
        stationary_points=tuple(roots),
        minima=tuple(minima),
        scenario=scenario,
        degenerate=len(winners) > 1,
        minimizers=tuple(winners),
        conjectural=conj,
    )


def rs_mutual_info(params, grid_size=DEFAULT_GRID):
    """min over E in [0, v] of i_rs(E; delta): the asymptotic MI per section."""
    return analyze_potential(params, grid_size).i_rs_min


def predicted_ymmse(params, grid_size=DEFAULT_GRID, delta_rs=None, tol=1e-4):
    """Asymptotic measurement MMSE E~ / (1 + E~/delta).

    Raises DegenerateMinimumError when delta sits on the transition (two
    global minimizers).  If `delta_rs` is given, warns within 10*tol of it.
    """
    if params.delta == 0:
        return 0.0
    if delta_rs is not None and math.isfinite(delta_rs) and abs(params.delta - delta_rs) <= 10 * tol:
        warnings.warn(f"delta={params.delta!r} is within {10 * tol:g} of delta_rs={delta_rs!r}; "
                      "the limit is discontinuous there", RuntimeWarning)
    analysis = analyze_potential(params, grid_size)
    if analysis.degenerate:
        raise DegenerateMinimumError(
            f"two global minimizers {analysis.minimizers} at delta={params.delta!r}")
    e = analysis.e_tilde
    if math.isinf(params.delta):
        return e
    return e / (1.0 + e / params.delta)


# ---------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class ThresholdReport:
    """Thresholds of one (prior, alpha) system."""

    delta_amp: float
    delta_rs: float
    delta_spinodal: float
    scenario: str
    conjectural: bool = False


def _scan_grid(lo, hi):
    n = max(2, int(math.ceil(math.log2(hi / lo) * SCAN_POINTS_PER_OCTAVE)) + 1)
    return np.geomspace(lo, hi, n)


def _multiplicity_window(base, grid_size, delta_max):
    """First contiguous Delta interval with several stationary points.

    Returns (last single, first multi, last multi, first single after) scan
    points, or None when no multiplicity is seen up to delta_max.
    """
    alpha_b = base.alpha * base.B
    hi = 10.0 * base.v / alpha_b
    lo = DELTA_MIN
    previous = None
    previous_single = 0.5 * lo
    window = []
    while True:
        hi = min(max(hi, lo * 2), delta_max)
        grid = _scan_grid(lo, hi)
        if previous is not None:
            grid = grid[1:]
        for d in grid:
            multi = count_stationary_points(base.with_delta(d), grid_size) > 1
            if multi:
                window.append(d)
            elif window:
                return previous_single, window[0], window[-1], d
            if not multi and not window:
                previous_single = d
            previous = d
        if hi >= delta_max:
            break
        lo, hi = hi, hi * 2
    if window:
        return previous_single, window[0], window[-1], math.inf
    return None


def _bisect(pred, lo, hi, tol):
    """pred(lo) is True and pred(hi) is False; shrink to width <= 2 tol."""
    while hi - lo > 2 * tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def _as_base(prior, alpha, B, quadrature):
    return SystemParams(alpha=alpha, delta=1.0, prior=load_prior(prior), B=B,
                        quadrature=quadrature or DEFAULT_QUADRATURE)


def _branch_gap(params, grid_size, split):
    """i_rs(low minimum) - i_rs(high minimum); sign only if a branch is missing."""
    a = analyze_potential(params, grid_size)
    low = [m for m in a.minima if m < split]
    high = [m for m in a.minima if m > split]
    if low and high:
        return rs_potential(low[0], params) - rs_potential(high[-1], params)
    return -1.0 if low else 1.0


def thresholds(prior, alpha, B=None, tol=1e-4, delta_max=DELTA_MAX,
               grid_size=DEFAULT_GRID, quadrature=None):
    """Compute delta_amp, delta_rs and the upper spinodal of a (prior, alpha) system.

    delta_amp is the first Delta at which the fixed-point equation stops
    having a unique solution; delta_rs is where the low and high local
    minima of i_rs exchange global status.  Both are +inf when no
    multiplicity is seen up to delta_max.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    base = _as_base(prior, alpha, B, quadrature)
    conj = base.conjectural
    if base.prior.K == 1 or base.v == 0:
        log.info("degenerate prior: no transition")
        return ThresholdReport(math.inf, math.inf, math.inf, "no-transition", conj)
    window = _multiplicity_window(base, grid_size, delta_max)
    if window is None:
        log.info("no multiplicity of fixed points up to delta_max=%g", delta_max)
        return ThresholdReport(math.inf, math.inf, math.inf, "no-transition", conj)
    single_lo, multi_lo, multi_hi, single_hi = window
    fine = 4 * grid_size
    # bracket well inside tol; the extra steps are cheap
    fine_tol = tol * REFINE

    def multi(d):
        return count_stationary_points(base.with_delta(d), fine) > 1

    if single_lo < DELTA_MIN:
        # multiplicity already at the bottom of the scan: probe toward delta = 0
        single_lo = None
        d = multi_lo
        while d > LOW_PROBE_LIMIT:
            d /= 2
            if not multi(d):
                single_lo = d
                break
    if single_lo is None:
        d_amp = 0.0
    else:
        lo, hi = _bisect(lambda d: not multi(d), single_lo, multi_lo, fine_tol)
        d_amp = 0.5 * (lo + hi)
    if math.isinf(single_hi):
        d_sp = math.inf
    else:
        lo_s, hi_s = _bisect(multi, multi_hi, single_hi, fine_tol)
        d_sp = 0.5 * (lo_s + hi_s)

    ref = analyze_potential(base.with_delta(multi_lo), grid_size)
    maxima = [s for s in ref.stationary_points if s not in ref.minima]
    split = maxima[0] if maxima else 0.5 * (ref.minima[0] + ref.minima[-1])

    def low_is_global(d):
        return _branch_gap(base.with_delta(d), grid_size, split) < 0

    def gap(d):
        return _branch_gap(base.with_delta(d), grid_size, split)

    # the gap is continuous where both minima exist and only its sign is
    # defined outside, so a bracketing root finder applies throughout
    if gap(multi_lo) >= 0:
        # exchange happened within the first scan step
        a, b = max(d_amp, multi_lo / 2**(1 / SCAN_POINTS_PER_OCTAVE)), multi_lo
        d_rs = brentq(gap, a, b, xtol=fine_tol) if gap(a) < 0 else a
    elif gap(multi_hi) < 0:
        log.info("minima never exchange inside the window; delta_rs = inf")
        return ThresholdReport(float(d_amp), math.inf, float(d_sp), "first-order", conj)
    else:
        d_rs = brentq(gap, multi_lo, multi_hi, xtol=fine_tol)
    d_rs = max(float(d_rs), d_amp)
    scenario = "first-order" if d_rs - d_amp > 2 * tol else "higher-order"
    return ThresholdReport(float(d_amp), float(d_rs), float(d_sp), scenario, conj)


def delta_amp(prior, alpha, B=None, tol=1e-4, **kwargs):
    """Algorithmic threshold: sup Delta with a unique state-evolution fixed point."""
    return thresholds(prior, alpha, B, tol, **kwargs).delta_amp


def delta_rs(prior, alpha, B=None, tol=1e-4, **kwargs):
    """Information-theoretic threshold: where the global minimum of i_rs jumps."""
    return thresholds(prior, alpha, B, tol, **kwargs).delta_rs


def classify_scenario(prior, alpha, B=None, tol=1e-4, **kwargs):
    return thresholds(prior, alpha, B, tol, **kwargs).scenario


def potential_scan(params, grid_size=DEFAULT_GRID):
    """Rows (E, psi, channel_mi, i_rs) on a uniform grid over [0, v]."""
    if params.prior.K == 1:
        # no uncertainty: the trial MSE range collapses to E = 0
        return [(0.0, 0.0, 0.0, 0.0)]
    rows = []
    for e in np.linspace(0.0, params.v, grid_size):
        e = float(e)
        p = psi(e, params)
        mi = _channel_term(e, params)
        rows.append((e, p, mi, p + mi))
    return rows
