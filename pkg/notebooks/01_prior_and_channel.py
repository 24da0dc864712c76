"""
Discrete priors and the scalar Gaussian channel
===============================================

A signal section is drawn from a discrete prior over R^B.  Passing it
through y = x + z / sqrt(snr) gives the denoising channel whose MMSE and
mutual information drive everything else in the package.
"""

# %%
import numpy as np

from rle import DiscretePrior, bernoulli_prior, binary_prior, channel_mi, channel_mmse
from rle.prior import prior_entropy, section_power

# %%
# Three priors used throughout: equiprobable +-1, a sparse 0/1 signal and a
# ternary alphabet.

priors = {
    "binary": binary_prior(),
    "bernoulli:0.1": bernoulli_prior(0.1),
    "ternary": DiscretePrior([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25]),
}
for name, p in priors.items():
    print(f"{name:14s} v={section_power(p):.3f}  var={float(np.sum(p.variance)):.3f}  "
          f"H={prior_entropy(p):.4f} nats")

# %%
# MMSE falls from the prior variance to zero and the mutual information
# rises from zero to the entropy as snr grows.

snrs = np.geomspace(1e-2, 1e3, 6)
for name, p in priors.items():
    mmse = [channel_mmse(p, s) for s in snrs]
    mi = [channel_mi(p, s) for s in snrs]
    print(name)
    for s, m, i in zip(snrs, mmse, mi):
        print(f"  snr={s:9.3f}  mmse={m:.6f}  I={i:.6f}")

# %%
# I-MMSE in the scalar channel: dI/dsnr = mmse / 2.  A central difference
# makes the identity visible.

p, s, h = priors["binary"], 2.0, 1e-4
print((channel_mi(p, s + h) - channel_mi(p, s - h)) / (2 * h), channel_mmse(p, s) / 2)

# %%
# Vector sections (B = 2) work the same way; a product of two binary
# sections has twice the scalar MMSE.

pair = DiscretePrior([[a, b] for a in (-1, 1) for b in (-1, 1)], [0.25] * 4)
print(channel_mmse(pair, 1.0), 2 * channel_mmse(priors["binary"], 1.0))
