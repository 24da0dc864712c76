"""Synthetic instances of y = phi s + z sqrt(delta) and Bayes-optimal AMP.

Random streams: the 64-bit seed feeds a numpy SeedSequence whose three
spawned children drive, in order, the signal s, the matrix phi and the
noise z, each through a Philox counter-based generator.  Changing the noise
level therefore keeps phi, s and z fixed.

The AMP iteration uses the block variances J[r, c] / L in place of the
squared matrix entries (exact in expectation).  With g = (y - omega) / (delta + V):

    V_mu      = sum_i phi_mu_i^2 var_i
    omega_mu  = sum_i phi_mu_i a_i - V_mu g_mu(previous)      (Onsager term)
    Sigma_i^2 = 1 / sum_mu phi_mu_i^2 / (delta + V_mu)
    R_i       = a_i + Sigma_i^2 sum_mu phi_mu_i g_mu
    a, var    = posterior mean and variance of the prior at (R, Sigma^2)
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DomainError, ResourceLimitError
from .prior import posterior_moments, section_power
from .state_evolution import CouplingEnsemble

DEFAULT_MAX_MEM_MIB = 2048
MEM_ENV = "RLE_MAX_MEM_MIB"


def max_matrix_bytes():
    mib = os.environ.get(MEM_ENV)
    try:
        mib = float(mib) if mib else DEFAULT_MAX_MEM_MIB
    except ValueError:
        raise DomainError(f"{MEM_ENV}={mib!r} is not a number") from None
    return int(mib * 2**20)


def _streams(seed):
    seq = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    return [np.random.Generator(np.random.Philox(child)) for child in seq.spawn(3)]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    phi: np.ndarray
    s: np.ndarray            # (L, B)
    z: np.ndarray            # (M,)
    y: np.ndarray            # (M,)
    params: object
    rng_seed: int
    ensemble: CouplingEnsemble | None = None
    revealed: frozenset = field(default_factory=frozenset)

    @property
    def L(self):
        return self.s.shape[0]

    @property
    def M(self):
        return self.phi.shape[0]

    @property
    def N(self):
        return self.phi.shape[1]

    @property
    def signal(self):
        return self.s.ravel()

    def with_delta(self, delta):
        """Same phi, s and z at another noise level."""
        params = self.params.with_delta(delta)
        y = self.phi @ self.signal + self.z * math.sqrt(params.delta)
        return replace(self, params=params, y=y)


@dataclass(frozen=True)
class AmpTrajectory:
    mse_per_iter: np.ndarray
    ymmse_per_iter: np.ndarray
    converged: bool
    estimate: np.ndarray
    diverged: bool = False

    @property
    def iterations(self):
        return len(self.mse_per_iter) - 1


def _sizes(params, L, allow_empty=False):
    if L < 1:
        raise DomainError("L must be >= 1")
    N = L * params.B
    M = int(round(params.alpha * N))
    if M < 1 and not allow_empty:
        raise DomainError(f"alpha={params.alpha} and L={L} give no measurements")
    need = M * N * 8
    if need > max_matrix_bytes():
        raise ResourceLimitError(
            f"a {M}x{N} dense matrix needs {need / 2**20:.0f} MiB; the cap is "
            f"{max_matrix_bytes() / 2**20:.0f} MiB (set {MEM_ENV} to raise it)")
    return N, M


def generate_instance(params, L, rng_seed, allow_empty=False):
    """Homogeneous instance: phi entries i.i.d. N(0, 1/L).

    allow_empty permits M = round(alpha N) = 0 (used by the exact oracle).
    """
    N, M = _sizes(params, L, allow_empty)
    rs, rphi, rz = _streams(rng_seed)
    s = params.prior.sample(L, rs)
    phi = rphi.standard_normal(size=(M, N)) / math.sqrt(L)
    z = rz.standard_normal(M)
    y = phi @ s.ravel() + z * math.sqrt(params.delta)
    return ProblemInstance(phi, s, z, y, params, int(rng_seed))


def _nearest_valid_L(params, L, gamma):
    best = None
    for cand in range(gamma, 2 * L + 2 * gamma * 64, gamma):
        M = int(round(params.alpha * cand * params.B))
        if M % gamma == 0 and M > 0:
            if best is None or abs(cand - L) < abs(best - L):
                best = cand
            if cand > L and best is not None:
                break
    return best


def generate_coupled_instance(ensemble, params, L, rng_seed):
    """Block instance: entries of block (r, c) i.i.d. N(0, J[r, c] / L).

    Seeded ensembles mark every section of the boundary column blocks as
    revealed.
    """
    gamma = ensemble.gamma
    N, M = _sizes(params, L)
    if L % gamma or M % gamma:
        raise DomainError(f"gamma={gamma} must divide L={L} and M={M}; "
                          f"nearest valid L is {_nearest_valid_L(params, L, gamma)}")
    rs, rphi, rz = _streams(rng_seed)
    s = params.prior.sample(L, rs)
    rows = M // gamma
    cols = N // gamma
    scale = np.sqrt(np.repeat(np.repeat(ensemble.J, rows, axis=0), cols, axis=1) / L)
    phi = rphi.standard_normal(size=(M, N)) * scale
    z = rz.standard_normal(M)
    y = phi @ s.ravel() + z * math.sqrt(params.delta)
    per_block = L // gamma
    revealed = frozenset(l for c in ensemble.boundary
                         for l in range(c * per_block, (c + 1) * per_block))
    return ProblemInstance(phi, s, z, y, params, int(rng_seed), ensemble, revealed)


def empirical_ymmse(instance, estimate):
    """||phi (s - estimate)||^2 / M for this realization."""
    est = np.asarray(estimate, dtype=float).ravel()
    if est.shape != instance.signal.shape:
        raise DomainError(f"estimate has {est.size} entries, signal has {instance.N}")
    r = instance.phi @ (instance.signal - est)
    return float(r @ r) / instance.M


def _block_structure(instance):
    """Row/column block labels and the variance matrix (J / L)."""
    M, N, L = instance.M, instance.N, instance.L
    ens = instance.ensemble
    if ens is None:
        return np.zeros(M, dtype=int), np.zeros(N, dtype=int), np.ones((1, 1)) / L
    return (np.arange(M) // (M // ens.gamma), np.arange(N) // (N // ens.gamma), ens.J / L)


def run_amp(instance, max_iter=500, tol=1e-12, damping=0.0):
    """Bayes-optimal AMP from the prior mean.

    Records the per-section MSE ||s - a||^2 / L and the measurement MSE at
    every iteration, starting with the prior-mean initialization.  Revealed
    sections are clamped to the truth with zero variance.  Stops when the
    mean squared change of the estimate per section falls below `tol`; halts
    with converged=False if the MSE exceeds 10 v.
    """
    params = instance.params
    prior = params.prior
    B, L, M = params.B, instance.L, instance.M
    if instance.phi.shape != (M, L * B) or instance.y.shape != (M,):
        raise DomainError("instance arrays have inconsistent dimensions")
    if not 0.0 <= damping < 1.0:
        raise DomainError("damping must be in [0, 1)")
    v = section_power(prior)
    phi, y, s = instance.phi, instance.y, instance.signal
    delta = params.delta
    row_blk, col_blk, Q = _block_structure(instance)
    n_rows = np.bincount(row_blk).astype(float)

    revealed = np.zeros(L, dtype=bool)
    revealed[list(instance.revealed)] = True
    clamp = np.repeat(revealed, B)

    a = np.tile(prior.mean, L)
    var = np.tile(np.einsum("k,kb->b", prior.probs, (prior.atoms - prior.mean) ** 2), L)
    a[clamp] = s[clamp]
    var[clamp] = 0.0

    def record(est):
        err = s - est
        return float(err @ err) / L, empirical_ymmse(instance, est)

    mse, ymse = record(a)
    mses, ymses = [mse], [ymse]
    g = np.zeros(M)
    converged = diverged = False
    if prior.K == 1 or L == 0:
        return AmpTrajectory(np.array(mses), np.array(ymses), True, a.copy())

    for _ in range(max_iter):
        col_var = np.bincount(col_blk, weights=var, minlength=Q.shape[1])
        V_blk = Q @ col_var
        V = V_blk[row_blk]
        omega = phi @ a - V * g
        g = (y - omega) / (delta + V)
        inv_blk = Q.T @ (n_rows / (delta + V_blk))
        sigma2 = 1.0 / inv_blk[col_blk]
        R = a + sigma2 * (phi.T @ g)
        mean, post_var = posterior_moments(prior, R.reshape(L, B), sigma2.reshape(L, B)[:, 0])
        new_a = mean.ravel()
        new_var = post_var.ravel()
        new_a[clamp] = s[clamp]
        new_var[clamp] = 0.0
        if damping:
            new_a = (1 - damping) * new_a + damping * a
            new_var = (1 - damping) * new_var + damping * var
        change = float((new_a - a) @ (new_a - a)) / L
        a, var = new_a, new_var
        mse, ymse = record(a)
        mses.append(mse)
        ymses.append(ymse)
        if not np.isfinite(mse) or mse > 10 * v:
            diverged = True
            break
        if change < tol:
            converged = True
            break
    return AmpTrajectory(np.array(mses), np.array(ymses), converged, a.copy(), diverged)
