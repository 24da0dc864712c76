"""Mutual information, state evolution and AMP for random linear estimation.

Gaussian measurement model y = phi s + z sqrt(delta), with signal sections
drawn i.i.d. from a discrete prior over R^B.
"""

from .amp import (AmpTrajectory, ProblemInstance, empirical_ymmse,
                  generate_coupled_instance, generate_instance, run_amp)
from .exceptions import DomainError, ResourceLimitError
from .oracle import (CheckReport, ExactPosterior, McEstimate, exact_posterior,
                     immse_check, mc_mutual_info, mc_ymmse, mmse_relation_check,
                     nishimori_check)
from .potential import (PotentialAnalysis, SystemParams, ThresholdReport,
                        analyze_potential, classify_scenario, delta_amp, delta_rs,
                        predicted_ymmse, psi, rs_mutual_info, rs_potential,
                        rs_potential_derivative, thresholds)
from .prior import (DiscretePrior, bernoulli_prior, binary_prior, channel_mi,
                    channel_mmse, load_prior, posterior_mean, prior_entropy,
                    section_power)
from .state_evolution import (CouplingEnsemble, SeTrajectory, build_ensemble,
                              delta_amp_coupled, e_good, run_se, run_se_coupled)

__version__ = "0.1.0"
