"""
Retrospective Interference Alignment

A Python package for exact DoF analysis and slot-level simulation of
interference-alignment schemes that exploit delayed channel knowledge,
full-duplex transmitters, output feedback and Shannon feedback.
"""

__version__ = "0.2.0"
__author__ = "HN_Anh"
__email__ = "vl2anh1@gmail.com"

# Import main components
from .dof_analysis import (
    ICFD, ICOF, ICSF, XFD, XOF, XSF, ModelId,
    dof_icfd, dof_icof, dof_icsf, dof_xfd, dof_xof, dof_xsf, dof_of,
    asymptote, consistency_sweep,
)
from .alignment_core import LinearExpr, SymbolPool, SymbolSpec, decodable, eliminate, generic_rank
from .feedback_sim import FeasibilityError, SimReport, apply_slot, finalize, generate_channel
from .schemes import UnsupportedRegimeError, build_policy, run_policy, verify_phase


def simulate(model: str, K: int, M: int = None, seed: int = 1, **kwargs) -> SimReport:
    """
    High-level function to run one scheme end to end.

    Args:
        model: Model name ("icfd", "icof", "icsf", "xfd", "xof", "xsf")
        K: Number of receivers
        M: Number of transmitters (full-duplex X channel only)
        seed: Channel and coefficient seed
        **kwargs: Passed to run_policy (field, strict)

    Returns:
        SimReport of the run
    """
    policy = build_policy(ModelId.from_name(model), K, M)
    return run_policy(policy, seed=seed, **kwargs)


__all__ = [
    "ICFD", "ICOF", "ICSF", "XFD", "XOF", "XSF", "ModelId",
    "dof_icfd", "dof_icof", "dof_icsf", "dof_xfd", "dof_xof", "dof_xsf", "dof_of",
    "asymptote", "consistency_sweep",
    "LinearExpr", "SymbolPool", "SymbolSpec", "decodable", "eliminate", "generic_rank",
    "FeasibilityError", "SimReport", "apply_slot", "finalize", "generate_channel",
    "UnsupportedRegimeError", "build_policy", "run_policy", "verify_phase", "simulate",
]
