"""Discrete priors over R^B sections and their Gaussian denoising channel.

The denoising channel is y = s + z / sqrt(snr) with s ~ P0 and z ~ N(0, I_B).
Writing d_i = a_i - s, the log-posterior weight of atom i is

    ln p_i + sqrt(snr) <d_i, z> - snr ||d_i||^2 / 2     (+ const)

which is what every routine below evaluates inside a log-sum-exp.  The same
form gives the channel mutual information directly:

    I(snr) = -E[ ln sum_i p_i exp(sqrt(snr) <d_i, Z> - snr ||d_i||^2 / 2) ]

which is 0 at snr = 0 and tends to H(S) as snr -> infinity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DomainError
from .quadrature import DEFAULT_QUADRATURE

_RENORMALIZE_TOL = 1e-9
_SUM_TOL = 1e-12
# cap on logits array elements per vectorized chunk
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True, eq=False)
class DiscretePrior:
    """P0(s) = sum_i probs[i] * delta(s - atoms[i]) over R^B.

    Arrays are stored read-only; a prior can be shared freely between
    threads and worker processes.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0 or atoms.shape[1] == 0:
            raise DomainError("atoms must be a non-empty list of equal-length vectors")
        probs = np.array(self.probs, dtype=float).ravel()
        if len(probs) != len(atoms):
            raise DomainError(f"{len(atoms)} atoms but {len(probs)} probabilities")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        if not np.all(np.isfinite(probs)) or np.any(probs <= 0):
            raise DomainError("probabilities must be strictly positive")
        total = probs.sum()
        if abs(total - 1.0) > _RENORMALIZE_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        probs = probs / total
        if len(np.unique(atoms, axis=0)) != len(atoms):
            raise DomainError("duplicate atoms")
        assert abs(probs.sum() - 1.0) <= _SUM_TOL
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def B(self):
        return self.atoms.shape[1]

    @property
    def K(self):
        return self.atoms.shape[0]

    @property
    def mean(self):
        return self.probs @ self.atoms

    @property
    def variance(self):
        """Total variance E||S - E S||^2 of one section."""
        return max(section_power(self) - float(self.mean @ self.mean), 0.0)

    @property
    def max_gap(self):
        if self.K == 1:
            return 0.0
        diff = self.atoms[:, None, :] - self.atoms[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    def __eq__(self, other):
        return (isinstance(other, DiscretePrior)
                and self.atoms.shape == other.atoms.shape
                and np.array_equal(self.atoms, other.atoms)
                and np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.probs.tobytes(), self.atoms.shape))

    def __repr__(self):
        return f"DiscretePrior(B={self.B}, atoms={self.atoms.tolist()}, probs={self.probs.tolist()})"

    def sample(self, n, rng):
        """Draw n i.i.d. sections, shape (n, B)."""
        idx = rng.choice(self.K, size=n, p=self.probs)
        return self.atoms[idx]

    def to_config(self):
        return {"B": self.B, "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_config(cls, config):
        try:
            atoms = config["atoms"]
            probs = config["probs"]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"prior config needs 'atoms' and 'probs': {exc}") from None
        prior = cls(atoms, probs)
        if "B" in config and int(config["B"]) != prior.B:
            raise DomainError(f"prior config declares B={config['B']} but atoms have dimension {prior.B}")
        return prior


def binary_prior():
    """Equiprobable +-1 (B = 1)."""
    return DiscretePrior([[-1.0], [1.0]], [0.5, 0.5])


def bernoulli_prior(rho):
    """Atoms {0, 1} with probabilities {1 - rho, rho} (B = 1)."""
    if not 0.0 < rho < 1.0:
        raise DomainError(f"bernoulli rho must be in (0, 1), got {rho}")
    return DiscretePrior([[0.0], [1.0]], [1.0 - rho, rho])


def load_prior(name):
    """Resolve `binary`, `bernoulli:<rho>` or a path to a JSON prior config."""
    if isinstance(name, DiscretePrior):
        return name
    text = str(name).strip()
    if text == "binary":
        return binary_prior()
    if text.startswith("bernoulli:"):
        try:
            rho = float(text.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"cannot parse bernoulli parameter in {text!r}") from None
        return bernoulli_prior(rho)
    path = Path(text)
    if not path.exists():
        raise DomainError(f"unknown prior {text!r}: not a built-in name or an existing file")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}:{exc.lineno}: invalid prior JSON: {exc.msg}") from None
    return DiscretePrior.from_config(config)


def section_power(prior):
    """v = E||S||^2 = sum_i p_i ||a_i||^2."""
    return float(prior.probs @ (prior.atoms**2).sum(axis=1))


def prior_entropy(prior):
    """Shannon entropy in nats."""
    p = prior.probs
    return float(-(p * np.log(p)).sum())


def posterior_moments(prior, y, noise_var):
    """Posterior mean and per-coordinate variance for y = s + noise.

    y has shape (B,) or (n, B); noise_var is a scalar or an array of shape
    (n,) giving one isotropic variance per observation.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    if y2.shape[1] != prior.B:
        raise DomainError(f"observation has dimension {y2.shape[1]}, prior has B={prior.B}")
    nv = np.asarray(noise_var, dtype=float)
    if np.any(~(nv > 0)):
        raise DomainError("noise_var must be > 0")
    nv = np.broadcast_to(nv, (y2.shape[0],))
    sq = ((y2[:, None, :] - prior.atoms[None, :, :]) ** 2).sum(-1)
    logits = np.log(prior.probs)[None, :] - sq / (2.0 * nv[:, None])
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ prior.atoms
    var = np.einsum("nk,nkb->nb", w, (prior.atoms[None, :, :] - mean[:, None, :]) ** 2)
    if single:
        return mean[0], var[0]
    return mean, var


def posterior_mean(prior, y, noise_var):
    """Bayes-optimal denoiser E[S | S + sqrt(noise_var) Z = y]."""
    return posterior_moments(prior, y, noise_var)[0]


def _moments_for_rule(prior, snr, z, w):
    """Channel mmse and mi for an array of snr values sharing one rule."""
    a = prior.atoms
    p = prior.probs
    d = a[None, :, :] - a[:, None, :]                 # (K_true, K, B): a_i - s_j
    proj = np.einsum("jib,nb->jni", d, z)              # (K_true, n, K)
    half_sq = 0.5 * (d**2).sum(-1)                     # (K_true, K)
    logp = np.log(p)
    K, n = prior.K, len(w)
    mmse = np.empty(len(snr))
    mi = np.empty(len(snr))
    step = max(1, _CHUNK_ELEMENTS // (K * n * K))
    for start in range(0, len(snr), step):
        s = snr[start:start + step]
        rs = np.sqrt(s)[:, None, None, None]
        logits = (logp[None, None, None, :] + rs * proj[None]
                  - s[:, None, None, None] * half_sq[None, :, None, :])
        top = logits.max(axis=-1, keepdims=True)
        e = np.exp(logits - top)
        total = e.sum(axis=-1)
        lse = top[..., 0] + np.log(total)
        mi[start:start + step] = -(lse @ w) @ p
        post = e / total[..., None]
        if prior.B == 1:
            err2 = np.einsum("mjni,ji->mjn", post, d[..., 0]) ** 2
        else:
            err2 = (np.einsum("mjni,jib->mjnb", post, d) ** 2).sum(-1)
        mmse[start:start + step] = (err2 @ w) @ p
    return np.maximum(mmse, 0.0), np.maximum(mi, 0.0)


def channel_moments(prior, snr, quadrature=None):
    """(mmse, mi) of the denoising channel at each snr (array in, arrays out)."""
    quad = quadrature or DEFAULT_QUADRATURE
    snr = np.atleast_1d(np.asarray(snr, dtype=float))
    if np.any(~(snr >= 0)):
        raise DomainError("snr must be >= 0")
    mmse = np.zeros(snr.shape)
    mi = np.zeros(snr.shape)
    if prior.K == 1:
        return mmse, mi
    zero = snr == 0
    mmse[zero] = prior.variance
    flat = snr.ravel()
    idx = np.flatnonzero(~zero.ravel())
    if len(idx):
        gap = prior.max_gap
        levels = np.array([quad.level(x, gap, prior.B) for x in flat[idx]])
        for level in np.unique(levels):
            sel = idx[levels == level]
            z, w = quad.rule(prior.B, int(level))
            m, i = _moments_for_rule(prior, flat[sel], z, w)
            mmse.ravel()[sel] = m
            mi.ravel()[sel] = i
    return mmse, mi


def channel_mmse(prior, snr, quadrature=None):
    """E||S - E[S|Y]||^2 for Y = S + Z / sqrt(snr); scalar in, scalar out."""
    mmse, _ = channel_moments(prior, snr, quadrature)
    return float(mmse[0]) if np.ndim(snr) == 0 else mmse


def channel_mi(prior, snr, quadrature=None):
    """I(S; S + Z / sqrt(snr)) in nats; scalar in, scalar out."""
    _, mi = channel_moments(prior, snr, quadrature)
    if np.ndim(snr) == 0:
        return float(min(mi[0], prior_entropy(prior)))
    return np.minimum(mi, prior_entropy(prior))


def is_zero_mean(prior):
    return bool(math.isclose(float(np.abs(prior.mean).max()), 0.0, abs_tol=1e-15))
