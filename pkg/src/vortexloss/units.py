"""Unit conversions used at I/O boundaries.

Internally everything is SI: tesla for fields, ohm per tesla for
sensitivities. Display units are milligauss and nano-ohm per milligauss.
"""

TESLA_PER_MG = 1e-7
OHM_PER_T_PER_NOHM_PER_MG = 1e-2


def mg_to_tesla(b_mg):
    return b_mg * TESLA_PER_MG


def tesla_to_mg(b_t):
    return b_t / TESLA_PER_MG


def to_nohm_per_mg(s_ohm_per_t):
    return s_ohm_per_t / OHM_PER_T_PER_NOHM_PER_MG


def from_nohm_per_mg(s_nohm_per_mg):
    return s_nohm_per_mg * OHM_PER_T_PER_NOHM_PER_MG
