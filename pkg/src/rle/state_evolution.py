"""State evolution for homogeneous and spatially coupled measurement ensembles.

Uncoupled recursion, started from E = v:

    E <- mmse(alpha B / (delta + E))

Coupled recursion on a profile E_1..E_Gamma (rows r, columns c):

    snr_c = (alpha B / Gamma) sum_r J[r, c] / (delta + E_r)
    E_r   <- (1/Gamma) sum_c J[r, c] mmse(snr_c)        for r not seeded
    E_r   =  0                                          for r seeded

With seeding="revealed", seeded column blocks contribute zero mmse instead of
pinning rows; this is the recursion tracked by AMP when the signal on the
boundary blocks is disclosed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError
from .potential import (DEFAULT_GRID, _as_base, _bisect,
                        _sign_change_roots, thresholds)
from .prior import channel_mmse

log = logging.getLogger(__name__)

ENSEMBLE_KINDS = ("periodic", "seeded")
SEEDING_MODES = ("pinned", "revealed")


@dataclass(frozen=True)
class SeTrajectory:
    """History of E profiles; uncoupled runs store length-1 profiles."""

    profile_history: list
    converged: bool
    iterations: int

    @property
    def final(self):
        return self.profile_history[-1]

    @property
    def mse(self):
        """Scalar MSE per iteration (profile mean for coupled runs)."""
        return np.array([float(np.mean(p)) for p in self.profile_history])


@dataclass(frozen=True, eq=False)
class CouplingEnsemble:
    gamma: int
    w: int
    J: np.ndarray
    boundary: frozenset = field(default_factory=frozenset)
    kind: str = "periodic"

    def __post_init__(self):
        self.J.setflags(write=False)

    @property
    def seeded_mask(self):
        mask = np.zeros(self.gamma, dtype=bool)
        mask[list(self.boundary)] = True
        return mask


def se_step(E, params):
    """One state-evolution update; vectorized over E."""
    snr = params.alpha * params.B / (params.delta + np.asarray(E, dtype=float))
    out = channel_mmse(params.prior, snr, params.quadrature)
    return float(out) if np.ndim(E) == 0 else out


def run_se(params, max_iter=100_000, tol=1e-12, init=None):
    """Iterate state evolution from E = v (or `init`) until |dE| < tol."""
    if max_iter < 1:
        raise DomainError("max_iter must be >= 1")
    E = params.v if init is None else float(init)
    history = [np.array([E])]
    converged = False
    for _ in range(max_iter):
        new = se_step(E, params)
        history.append(np.array([new]))
        done = abs(new - E) < tol
        E = new
        if done:
            converged = True
            break
    return SeTrajectory(history, converged, len(history) - 1)


def e_good(params, grid_size=DEFAULT_GRID):
    """Smallest fixed point of the state-evolution map."""
    v = params.v
    if v == 0 or params.prior.K == 1:
        return 0.0
    roots, _ = _sign_change_roots(params, np.linspace(0.0, v, grid_size))
    if not roots:
        # residual never changes sign: the map has its fixed point at v
        return v
    return min(roots)


def fixed_points(params, grid_size=DEFAULT_GRID):
    """All fixed points of the state-evolution map on [0, v], sorted."""
    v = params.v
    if v == 0 or params.prior.K == 1:
        return [0.0]
    roots, _ = _sign_change_roots(params, np.linspace(0.0, v, grid_size))
    return sorted(roots)


def _balance(band, tol=1e-15, max_iter=100_000):
    """Sinkhorn scaling of a nonnegative band matrix to unit row and column sums."""
    J = band / band.sum(axis=1, keepdims=True)
    for _ in range(max_iter):
        J /= J.sum(axis=0, keepdims=True)
        J /= J.sum(axis=1, keepdims=True)
        if np.max(np.abs(J.sum(axis=0) - 1.0)) < tol:
            break
    # symmetric band: average out round-off asymmetry
    J = 0.5 * (J + J.T)
    J /= J.sum(axis=1, keepdims=True)
    return J


def build_ensemble(kind, gamma, w):
    """Variance matrix of a periodic or seeded (opened) coupled ensemble.

    Odd gamma is recommended so the periodic window is symmetric.  The
    seeded ensemble zeroes the wrap-around entries and rescales the band so
    that every row and every column has mean one; entries near the corners
    grow as a result.  Its boundary is the first w and the last w blocks.
    """
    if kind not in ENSEMBLE_KINDS:
        raise DomainError(f"kind must be one of {ENSEMBLE_KINDS}, got {kind!r}")
    gamma, w = int(gamma), int(w)
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    if not 0 <= w <= (gamma - 1) / 2:
        raise DomainError(f"w={w} must satisfy 0 <= w <= (gamma - 1)/2 = {(gamma - 1) / 2}")
    r = np.arange(gamma)
    diff = np.abs(r[:, None] - r[None, :])
    if kind == "periodic":
        circ = np.minimum(diff, gamma - diff)
        J = np.where(circ <= w, gamma / (2 * w + 1), 0.0)
        return CouplingEnsemble(gamma, w, J, frozenset(), kind)
    J = _balance(np.where(diff <= w, 1.0, 0.0)) * gamma
    boundary = frozenset(range(w)) | frozenset(range(gamma - w, gamma))
    return CouplingEnsemble(gamma, w, J.astype(float), boundary, kind)


def coupled_step(E, ensemble, params, seeding="pinned"):
    """One synchronous update of the coupled profile."""
    gamma = ensemble.gamma
    J = ensemble.J
    snr = params.alpha * params.B / gamma * (J.T @ (1.0 / (params.delta + E)))
    mm = channel_mmse(params.prior, snr, params.quadrature)
    mask = ensemble.seeded_mask
    if seeding == "revealed":
        mm = np.where(mask, 0.0, mm)
        return J @ mm / gamma
    new = J @ mm / gamma
    new[mask] = 0.0
    return new


def run_se_coupled(ensemble, params, max_iter=100_000, tol=1e-10, seeding="pinned",
                   record_every=1, stop_below=None):
    """Iterate coupled state evolution from E_r = v (seeded rows at 0).

    Stops when the sup-norm change drops below `tol`.  If `stop_below` is
    given, also stops as soon as every E_r is at most that value (used by
    threshold bisection; the profile is componentwise nonincreasing).
    Only every `record_every`-th profile is kept, plus the last one.
    """
    if seeding not in SEEDING_MODES:
        raise DomainError(f"seeding must be one of {SEEDING_MODES}")
    if max_iter < 1:
        raise DomainError("max_iter must be >= 1")
    E = np.full(ensemble.gamma, params.v)
    if seeding == "pinned":
        E[ensemble.seeded_mask] = 0.0
    history = [E.copy()]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = coupled_step(E, ensemble, params, seeding)
        change = float(np.max(np.abs(new - E)))
        E = new
        if it % record_every == 0:
            history.append(E.copy())
        if change < tol:
            converged = True
            break
        if stop_below is not None and float(E.max()) <= stop_below:
            converged = True
            break
    if it % record_every != 0:
        history.append(E.copy())
    return SeTrajectory(history, converged, it)


def coupled_succeeds(ensemble, params, profile_tol=1e-6, seeding="pinned",
                     max_iter=100_000, tol=1e-10, good=None):
    """True when the coupled fixed profile is everywhere <= E_good + profile_tol."""
    good = e_good(params) if good is None else good
    limit = good + profile_tol
    traj = run_se_coupled(ensemble, params, max_iter=max_iter, tol=tol,
                          seeding=seeding, record_every=max_iter + 1, stop_below=limit)
    if not traj.converged:
        log.info("coupled SE hit max_iter=%d at delta=%g; profile still moving, "
                 "counted as propagating", max_iter, params.delta)
        return True
    return bool(traj.final.max() <= limit)


def delta_amp_coupled(prior, alpha, gamma, w, B=None, tol=1e-4, kind="seeded",
                      seeding="pinned", profile_tol=1e-6, max_iter=100_000, quadrature=None,
                      report=None):
    """Finite-(gamma, w) algorithmic threshold of the coupled ensemble.

    Bisection on "coupled fixed profile is everywhere <= E_good + profile_tol"
    between the uncoupled delta_amp (where it holds) and the upper end of the
    metastable window (where the uncoupled recursion is stuck).  Returns
    +inf when the uncoupled system has no transition.
    """
    base = _as_base(prior, alpha, B, quadrature)
    ens = build_ensemble(kind, gamma, w)
    report = report or thresholds(base.prior, base.alpha, base.B, tol=tol, quadrature=quadrature)
    if math.isinf(report.delta_amp):
        return math.inf

    def ok(d):
        return coupled_succeeds(ens, base.with_delta(d), profile_tol, seeding, max_iter)

    lo = report.delta_amp
    hi = report.delta_spinodal
    if math.isinf(hi):
        hi = report.delta_rs * 2 if math.isfinite(report.delta_rs) else lo * 2
    # stay strictly inside the window, where E_good is the low branch
    hi = hi - tol
    if lo <= 0:
        lo = tol / 4
    if not ok(lo):
        log.info("coupled recursion fails already at delta_amp=%g", lo)
        return float(report.delta_amp)
    if ok(hi):
        log.info("coupled recursion succeeds across the whole window up to %g", hi)
        return float(hi)
    a, b = _bisect(ok, lo, hi, tol)
    return float(0.5 * (a + b))


def saturation_sweep(prior, alpha, gamma, ws, B=None, tol=1e-4, **kwargs):
    """delta_amp_coupled for each w at fixed gamma: rows (gamma, w, value)."""
    base = _as_base(prior, alpha, B, kwargs.get("quadrature"))
    report = thresholds(base.prior, base.alpha, base.B, tol=tol, quadrature=kwargs.get("quadrature"))
    return [(int(gamma), int(w), delta_amp_coupled(base.prior, base.alpha, gamma, w, base.B,
                                                   tol=tol, report=report, **kwargs))
            for w in ws]
