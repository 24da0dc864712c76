"""
The replica-symmetric potential and its thresholds
==================================================

i_rs(E; delta) = psi(E; delta) + I(snr(E)) is minimized over E in [0, v].
The position of the global minimizer predicts the MMSE, and the number of
stationary points separates the easy, hard and impossible regimes.
"""

# %%
import matplotlib.pyplot as plt
import numpy as np

from rle import SystemParams, analyze_potential, rs_potential, thresholds
from rle.potential import predicted_ymmse

# %%
# A sparse signal at measurement rate 0.25 has a first-order transition.

report = thresholds("bernoulli:0.1", 0.25)
print(report)
d_amp, d_rs = report.delta_amp, report.delta_rs

# %%
# Below delta_amp there is one minimum; between the thresholds a second,
# worse local minimum appears and becomes global past delta_rs.

E = np.linspace(0, 0.1, 400)
fig, ax = plt.subplots()
for delta in (0.5 * d_amp, 0.5 * (d_amp + d_rs), 1.5 * d_rs):
    p = SystemParams(0.25, delta, "bernoulli:0.1")
    i = np.array([rs_potential(e, p) for e in E])
    ax.plot(E, i - i.min(), label=f"delta={delta:.4f}")
    a = analyze_potential(p)
    print(f"delta={delta:.5f} scenario={a.scenario} stationary={np.round(a.stationary_points, 6)} "
          f"E~={a.e_tilde:.6f} ymmse={predicted_ymmse(p):.6f}")
ax.set_xlabel("E")
ax.set_ylabel("i_rs(E) - min")
ax.set_ylim(0, 0.02)
ax.legend()
plt.show()

# %%
# Thresholds across measurement rates.  Binary signals with enough
# measurements never have a transition.

for prior in ("binary", "bernoulli:0.1"):
    for alpha in (0.25, 0.5, 1.0):
        r = thresholds(prior, alpha)
        print(f"{prior:14s} alpha={alpha:<5} d_amp={r.delta_amp:.6g} d_rs={r.delta_rs:.6g} "
              f"{r.scenario}")
