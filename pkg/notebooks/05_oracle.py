"""
Exact posteriors on small instances
===================================

With a discrete prior the posterior can be enumerated exactly for a dozen
sections.  This gives the finite-size mutual information and MMSE, against
which the asymptotic formulas and the exact identities can be checked.
"""

# %%
from rle import SystemParams, exact_posterior, generate_instance, rs_mutual_info
from rle.oracle import (immse_check, mc_mutual_info, mc_ymmse, mmse_relation_check,
                        nishimori_check)
from rle.potential import predicted_ymmse

p = SystemParams(0.5, 1.0, "binary")

# %%
# One instance: log partition function and posterior mean.

inst = generate_instance(p, 10, 0)
post = exact_posterior(inst)
print(post.config_count, post.log_partition)
print(inst.signal)
print(post.posterior_mean.round(3))

# %%
# Finite-size MI and ymmse against the replica predictions.

for L in (6, 8, 10, 12):
    mi = mc_mutual_info(p, L, 500)
    print(f"L={L:2d}  MI {mi.value:.4f} +- {mi.std_error:.4f}   rs {rs_mutual_info(p):.4f}")
y = mc_ymmse(p, 12, 500)
print(f"ymmse {y.value:.4f} +- {y.std_error:.4f}   predicted {predicted_ymmse(p):.4f}")

# %%
# Identities that hold at every L.

for rep in (immse_check(p, 10, 500), nishimori_check(p, 10, 500), mmse_relation_check(p, 10, 500)):
    print(rep.row())
