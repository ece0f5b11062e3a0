"""packetlab: a deterministic numerical laboratory for wavepacket physics.

The package groups five experiment families behind one CLI:

- spincorr: spin-pair correlations, CHSH combinations, hidden-variable
  audits and no-signaling checks for bipartite expansions;
- configspace: few-particle configuration-space wavefunctions, exchange
  symmetry, conditional densities and expansion reductions;
- actionprob: first-order transition probabilities of a broad packet on
  a localized scatterer and the factorization audit W = kappa |psi|^2;
- wavepacket: relativistic spreading kinematics, coherence lengths and
  desk-scale estimates (energy accumulation, beam-splitting deflection);
- quantstat: thermal mode statistics, detailed balance, entropy of cell
  occupations and detector counting distributions.

numkit carries the shared numerics: counter-based random streams,
sampled functions on uniform grids, width and spectral measures.
"""

from .errors import (
    AccuracyWarning,
    DegenerateInputError,
    DomainError,
    NumericalError,
    PacketLabError,
    PreconditionError,
    UnsupportedModelError,
)
from .numkit import (
    RandomStream,
    SampledFunction1D,
    UnitVector3,
    fourier_widths,
    integrate_1d,
    log_binomial,
    position_width,
    sample_isotropic_direction,
    sample_isotropic_directions,
    sampled_gaussian,
)
from .spincorr import (
    BipartiteCoefficients,
    JointProbability,
    LhvModel,
    PairModel,
    basis_change,
    bipartite_joint,
    chsh,
    coincidence_expectation,
    coplanar_axis,
    expectation,
    joint_probability,
    joint_table,
    lhv_chsh_audit,
    lhv_expectation,
    marginal,
    no_signaling_audit,
    random_lhv_model,
    sample_pair,
    sample_pair_counts,
    semiclassical_lhv_model,
    sign_anticorrelated_model,
    singlet_coefficients,
)
from .configspace import (
    ExpansionCoefficients,
    ManyBodyWavefunction,
    conditional_probability,
    one_particle_density,
    overlap_measure,
    product_form_test,
    reduce_expansion,
    region_action_probabilities,
    symmetrize,
)
from .actionprob import (
    ScattererSpec,
    TransitionSetup,
    action_ratio_audit,
    audit_scenario,
    efficiency_decomposition,
    final_packet_family,
    first_order_transition,
    width_ratio,
)
from .wavepacket import (
    BOHR_MAGNETON,
    Dispersion,
    PacketEvolution,
    SpectralPacket,
    accumulation_time,
    coherence_profile,
    group_velocity,
    instantaneous_spreading_velocity,
    intrinsic_moment,
    min_width_spreading_bound,
    spread_after_flight,
    spreading_velocities,
    stern_gerlach_deflection,
    tau_doubling,
    width_at_time,
)
from .quantstat import (
    CavitySpec,
    CountDistribution,
    ModeBin,
    OccupancyDistribution,
    Statistics,
    balance_residual,
    binomial_fold_check,
    binomial_pmf,
    count_distribution,
    count_variance,
    einstein_balance,
    entropy_and_derivatives,
    mode_count,
    occupancy,
    packet_quanta_dist,
    photon_bins,
    photon_mode_count,
    sample_counts,
    spectral_distribution,
    thinned_count_distribution,
    vonlaue_dof,
)

__version__ = "0.1.0"
