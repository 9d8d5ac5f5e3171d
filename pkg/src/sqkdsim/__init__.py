"""Simulator and adversary framework for photonic QKD with a classical Alice.

Two-mode Fock-space state algebra with exact basis changes, protocol
engines for the two-way classical-Alice scheme plus one-way BB84/B92
baselines, a library of eavesdropping attacks, and exact detection and
leakage analysis.  Monte-Carlo round loops run on a jit backend with a
pure-numpy fallback (``SQKDSIM_BACKEND=numpy``).
"""

from .fock import (
    ExpansionRow,
    FockState,
    X,
    Z,
    inner,
    make_basis_state,
    measure_distribution,
    parity_state,
    to_x_basis,
    to_z_basis,
    x_expansion,
)
from .joint import ChannelBasis, JointState
from .attacks import (
    AttackSpec,
    constrained_random_attack,
    general_attack,
    identity_attack,
    pns_attack,
    tagging_attack,
    usd_attack_b92,
)
from .analysis import (
    ConstraintReport,
    LeakageReport,
    b92_breakable,
    b92_conclusive_prob,
    check_constraints,
    eve_leakage,
    lemma_verify,
    pns_feasibility,
)
from .protocol import (
    ProtocolConfig,
    RunReport,
    alice_ctrl,
    alice_sift,
    bob_measure_x,
    bob_measure_z,
    run,
    run_b92,
    run_bb84,
    run_protocol,
)
from .scenario import Scenario, describe_attack, list_attacks, load_scenario

__all__ = [
    "AttackSpec",
    "ChannelBasis",
    "ConstraintReport",
    "ExpansionRow",
    "FockState",
    "JointState",
    "LeakageReport",
    "ProtocolConfig",
    "RunReport",
    "Scenario",
    "X",
    "Z",
    "alice_ctrl",
    "alice_sift",
    "b92_breakable",
    "b92_conclusive_prob",
    "bob_measure_x",
    "bob_measure_z",
    "check_constraints",
    "constrained_random_attack",
    "describe_attack",
    "eve_leakage",
    "general_attack",
    "identity_attack",
    "inner",
    "lemma_verify",
    "list_attacks",
    "load_scenario",
    "make_basis_state",
    "measure_distribution",
    "parity_state",
    "pns_attack",
    "pns_feasibility",
    "run",
    "run_b92",
    "run_bb84",
    "run_protocol",
    "tagging_attack",
    "to_x_basis",
    "to_z_basis",
    "usd_attack_b92",
    "x_expansion",
]

__version__ = "0.1.0"
