"""netmimo: evaluation and optimization of network-MIMO TDD architectures.

Closed-form large-system spectral efficiencies for beamforming schemes with
pilot and frequency reuse over lattice cell layouts, a finite-size Monte
Carlo oracle with pilot contamination and zero-forcing precoding, per-bin
scheme optimization, and fairness-driven scheduling.
"""

__version__ = "0.1.0"

from .asymptotic import (SchemeConfig, SchemeRate, allowed_zf_orders,
                         group_rate, net_rate, overhead_factor, rate_lsubf,
                         rate_lzfbf_cluster, rate_lzfbf_single,
                         rate_massive_limit)
from .channel import (PathlossModel, Scenario, TrainingCoefficients,
                      TrainingStats, aggregate_coefficients, make_scenario,
                      pathloss, training_coefficients)
from .errors import (ConfigurationError, DomainError, FeasibilityError,
                     NetMimoError, NumericalError, SingularRealizationError,
                     SymmetryViolationError)
from .geometry import (BinPattern, ClusterPattern, Layout, ReuseAssignment,
                       assign_reuse, build_bin, build_cluster_pattern,
                       build_layout, closest_bs_in_cluster,
                       default_cluster_root, mod_distance,
                       nearest_zf_clusters)
from .montecarlo import (ChannelRealization, Precoder, RateEstimate,
                         build_precoder, csv_diagnostics, estimate_rates, sample_precoder,
                         partial_trace_profile, simulate_training,
                         zf_residuals)
from .optimizer import (BinOptimum, SchemeFamily, SystemParams,
                        baseline_massive_net, baseline_net, best_loading,
                        optimize_bin, sweep_bins)
from .scheduler import (SchedulePlan, per_user_rates, schedule,
                        system_throughput)
