'''
Asymptotic ergodic capacity of dual-hop amplify-and-forward MIMO relays
with residual transceiver impairments. Eigenvalue densities come from
free probability (a quartic Stieltjes equation), and a Monte Carlo
random matrix oracle checks them against finite systems.
'''

# expose the most useful classes and functions
__all__ = [
    'capacity', 'cli', 'constants', 'exceptions', 'freeprob',
    'frozen_dict', 'montecarlo', 'params', 'util',

    # configuration
    'SystemConfig', 'Coefficients', 'validate_config', 'derive_coefficients',
    'nu_from_alpha', 'distortion_covariances',
    # densities and transforms
    'SpectralDensity', 'StieltjesSample', 'mp_density', 'mp_atom',
    'm_alpha_density', 'eta_numeric', 'inverse_eta_m_alpha',
    'inverse_eta_k_alpha', 's_transform_n2', 'quartic_coefficients',
    'stieltjes_k_alpha', 'aepdf_grid', 'aepdf_k_alpha', 'aepdf_density',
    # capacity
    'CapacityResult', 'shannon_integral', 'asymptotic_capacity',
    'logdet_capacity_sample', 'logdet_capacity_terms', 'mc_ergodic_capacity',
    # monte carlo
    'ChannelPair', 'EigenSampleSet', 'sample_channel_pair',
    'eigenvalues_k_alpha', 'sample_eigenvalues', 'empirical_density',
    'ks_distance', 'first_hop_power_check',
    ]

# ##############
#   metadata   #
# ##############
__author__ = "Sigmmma"
#           YYYY.MM.DD
__date__ = "2026.10.19"
__version__ = (0, 1, 0)
__website__ = "https://github.com/Sigmmma/relay_rmt"


from relay_rmt import constants, exceptions, frozen_dict, util
from relay_rmt.params import SystemConfig, Coefficients, validate_config,\
     derive_coefficients, nu_from_alpha, distortion_covariances
from relay_rmt.freeprob import SpectralDensity, StieltjesSample, mp_density,\
     mp_atom, m_alpha_density, eta_numeric, inverse_eta_m_alpha,\
     inverse_eta_k_alpha, s_transform_n2, quartic_coefficients,\
     stieltjes_k_alpha, aepdf_grid, aepdf_k_alpha, aepdf_density
from relay_rmt.montecarlo import ChannelPair, EigenSampleSet,\
     sample_channel_pair, eigenvalues_k_alpha, sample_eigenvalues,\
     empirical_density, ks_distance, first_hop_power_check
from relay_rmt.capacity import CapacityResult, shannon_integral,\
     asymptotic_capacity, logdet_capacity_sample, logdet_capacity_terms,\
     mc_ergodic_capacity
from relay_rmt import freeprob, montecarlo, capacity, params, cli
