"""Simulation and security analysis of phase-flip key distribution with
mesoscopic coherent states."""

__version__ = "0.1.0"

from .fock import Amplitude, PhaseGrid, coherent_vector, fidelity, helstrom_error, rotate, truncation_dim
from .ensemble import (
    DensityMatrix,
    EntropyReport,
    entropy_scan,
    j_factor,
    poisson_entropy_bound,
    rho_closed,
    rho_direct,
    smax_scan,
    von_neumann_entropy,
)
from .measurement import RngStream
from .protocol import CoherentPulse, Outcome, ProtocolConfig, ProtocolTranscript, run_protocol
from .adversary import BeamSplit, FullMITM, InterceptResend, NoAttack, expected_mitm_pass_prob, holevo_leak, make_adversary

__all__ = [
    "Amplitude",
    "PhaseGrid",
    "coherent_vector",
    "fidelity",
    "helstrom_error",
    "rotate",
    "truncation_dim",
    "DensityMatrix",
    "EntropyReport",
    "entropy_scan",
    "j_factor",
    "poisson_entropy_bound",
    "rho_closed",
    "rho_direct",
    "smax_scan",
    "von_neumann_entropy",
    "RngStream",
    "CoherentPulse",
    "Outcome",
    "ProtocolConfig",
    "ProtocolTranscript",
    "run_protocol",
    "BeamSplit",
    "FullMITM",
    "InterceptResend",
    "NoAttack",
    "expected_mitm_pass_prob",
    "holevo_leak",
    "make_adversary",
]
