"""Resilient secure beamforming for IRS-assisted multiuser downlinks.

Library + CLI simulator: robust initialization of BS beamforming and discrete
IRS phase shifts under norm-bounded channel uncertainty and secrecy leakage
caps, fast beamforming-only recovery after failure, failure injection and
detection, and resilience metric evaluation.
"""

from resbeam.scenario import (
    Scenario,
    PhaseCodebook,
    Layout,
    default_paper_scenario,
    desk_scenario,
    build_codebook,
    make_layout,
    dbm_to_watts,
    watts_to_dbm,
)

__all__ = [
    "Scenario",
    "PhaseCodebook",
    "Layout",
    "default_paper_scenario",
    "desk_scenario",
    "build_codebook",
    "make_layout",
    "dbm_to_watts",
    "watts_to_dbm",
]

__version__ = "0.1.0"
