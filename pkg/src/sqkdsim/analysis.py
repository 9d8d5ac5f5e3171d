"""Exact detection-probability and leakage analysis plus attack thresholds.

Everything here is computed from amplitudes, never by sampling: the
undetectability statements are exact, and tolerances only absorb float
error.  Monte-Carlo estimates of the same quantities live in the protocol
runners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .fock import FockState, X, Z, make_basis_state, parity_state
from .joint import JointState, THRESHOLD
from .attacks import AttackSpec, constrained_random_attack

EXACT_TOL = 1e-10


@dataclass
class ConstraintReport:
    """Exact detection probabilities and return-leg structure of one attack.

    ``bit_probe_distance`` is the norm of the difference between Eve's probe
    components attached to the two single-photon returns; the multiphoton map
    collects the combined norms of probe components attached to n-photon
    returns for n >= 2.  Any of those being nonzero forces a positive
    minus-click probability on reflected rounds.
    """
    alice_11_prob: float
    bob_minus_click_prob: float
    bit_probe_distance: float
    multiphoton_return_norms: Dict[int, float]
    sift_conflict_prob: float
    verdict: str

    def is_undetectable(self) -> bool:
        return self.verdict == "undetectable"


@dataclass
class LeakageReport:
    """Distinguishability of Eve's residual probe between the two key bits."""
    conditional_fidelity: Optional[float]
    trace_distance: Optional[float]
    status: str = "ok"
    detail: str = ""


def _emitted_plus(n_max: int) -> FockState:
    return make_basis_state((0, 1), X, n_max=n_max)


def _outbound_state(attack: AttackSpec, n_max: int) -> JointState:
    start = JointState.from_product(0, _emitted_plus(n_max), attack.probe_dim)
    return attack.apply_outbound(start)


def check_constraints(attack: AttackSpec, n_max: int = 3,
                      detector_model: str = THRESHOLD) -> ConstraintReport:
    """Exact undetectability audit of an attack on the reflecting protocol.

    Evaluates, without sampling: Alice's both-detectors probability on the
    outbound state, Bob's minus-mode click probability on reflected rounds
    after the linear return leg, the z-basis consistency of measured rounds,
    and the probe components attached to each return photon number.
    """
    attack.validate()
    psi = _outbound_state(attack, n_max)

    alice_11 = sum(p for occ, p in psi.occupation_distribution(Z).items()
                   if occ[0] >= 1 and occ[1] >= 1)

    ctrl_back = attack.apply_return(psi)
    minus_click = sum(p for occ, p in ctrl_back.occupation_distribution(X).items()
                      if occ[0] >= 1)

    # SIFT branches, kept unnormalized as weight sqrt(p) times the projection
    sifted = psi.apply_sift(detector_model)
    branches = {pat: (p, state) for pat, p, state in sifted.alice_branches()}

    def returned(pattern) -> Tuple[float, Optional[JointState]]:
        if pattern not in branches:
            return 0.0, None
        p, state = branches[pattern]
        return p, attack.apply_return(state)

    p01, back01 = returned((0, 1))
    p10, back10 = returned((1, 0))

    probe_dim = attack.probe_dim
    zero = np.zeros(probe_dim, dtype=np.complex128)
    bit0 = {n: (back01.probe_component((0, n)) * math.sqrt(p01)
                if back01 is not None else zero)
            for n in range(1, n_max + 1)}
    bit1 = {n: (back10.probe_component((n, 0)) * math.sqrt(p10)
                if back10 is not None else zero)
            for n in range(1, n_max + 1)}

    distance = float(np.linalg.norm(bit0[1] - bit1[1]))
    multi = {n: float(np.linalg.norm(bit0[n]) + np.linalg.norm(bit1[n]))
             for n in range(2, n_max + 1)}

    # z-basis consistency: Bob must never contradict a measured readout
    conflict = 0.0
    allowed = {
        (0, 1): lambda occ: occ[0] == 0,
        (1, 0): lambda occ: occ[1] == 0,
        (0, 0): lambda occ: occ == (0, 0),
    }
    for pattern, ok in allowed.items():
        p, back = returned(pattern)
        if back is None:
            continue
        conflict += p * sum(q for occ, q in back.occupation_distribution(Z).items()
                            if not ok(occ))

    detectable = (alice_11 > EXACT_TOL or minus_click > EXACT_TOL
                  or conflict > EXACT_TOL)
    return ConstraintReport(
        alice_11_prob=alice_11,
        bob_minus_click_prob=minus_click,
        bit_probe_distance=distance,
        multiphoton_return_norms=multi,
        sift_conflict_prob=conflict,
        verdict="detectable" if detectable else "undetectable",
    )


def _principal_vector(columns: List[np.ndarray], rank_tol: float = 1e-9
                      ) -> Tuple[Optional[np.ndarray], str]:
    """Collapse probe columns into one vector when they are effectively rank one."""
    mat = np.stack(columns, axis=1)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s[0] <= 1e-15:
        return None, "zero"
    if len(s) > 1 and s[1] > rank_tol * s[0]:
        return None, "mixed"
    return u[:, 0] * s[0], "ok"


def eve_leakage(attack: AttackSpec, n_max: int = 3,
                variant: str = "classical-alice") -> LeakageReport:
    """Fidelity and trace distance between Eve's probes for key bit 0 vs 1.

    Conditions on the branches that produce key bits: Alice measured a single
    detector and Bob's matching detector clicked.  Pure conditionals only;
    branches of zero probability or effective rank above one are reported as
    undefined rather than silently averaged.
    """
    attack.validate()
    if variant == "bb84":
        vecs = []
        for occ_in, occ_out in (((0, 2), (0, 1)), ((2, 0), (1, 0))):
            pulse = make_basis_state(occ_in, Z, n_max=max(n_max, 2))
            psi = attack.apply_outbound(
                JointState.from_product(0, pulse, attack.probe_dim))
            vecs.append(psi.probe_component(occ_out))
        v0, v1 = vecs
        status0 = status1 = "ok" if min(np.linalg.norm(v0), np.linalg.norm(v1)) > 1e-15 else "zero"
    else:
        psi = _outbound_state(attack, n_max)
        sifted = psi.apply_sift(THRESHOLD)
        branches = {pat: (p, st) for pat, p, st in sifted.alice_branches()}
        cols: Dict[int, List[np.ndarray]] = {0: [], 1: []}
        for bit, pattern in ((0, (0, 1)), (1, (1, 0))):
            if pattern not in branches:
                continue
            p, state = branches[pattern]
            back = attack.apply_return(state)
            for n in range(1, n_max + 1):
                occ = (0, n) if bit == 0 else (n, 0)
                cols[bit].append(back.probe_component(occ) * math.sqrt(p))
        if not cols[0] or not cols[1]:
            return LeakageReport(None, None, status="undefined",
                                 detail="a key-bit branch has zero probability")
        v0, status0 = _principal_vector(cols[0])
        v1, status1 = _principal_vector(cols[1])

    for status, bit in ((status0, 0), (status1, 1)):
        if status == "zero":
            return LeakageReport(None, None, status="undefined",
                                 detail=f"bit-{bit} branch has zero probability")
        if status == "mixed":
            return LeakageReport(None, None, status="undefined",
                                 detail=f"bit-{bit} conditional probe is not pure")

    n0, n1 = np.linalg.norm(v0), np.linalg.norm(v1)
    fid = float(abs(np.vdot(v0, v1)) / (n0 * n1))
    fid = min(fid, 1.0)
    return LeakageReport(conditional_fidelity=fid,
                         trace_distance=math.sqrt(max(0.0, 1.0 - fid * fid)))


@dataclass
class LemmaSummary:
    """Outcome of the numerical two-sided undetectability verification."""
    n_max: int
    probe_dims: Tuple[int, ...]
    forward_trials: int = 0
    forward_max_minus_prob: float = 0.0
    forward_min_fidelity: float = 1.0
    converse_trials: int = 0
    converse_min_minus_prob: float = math.inf
    single_photon_prediction_max_err: float = 0.0
    decomposition_max_err: float = 0.0
    passed: bool = False
    failures: List[str] = field(default_factory=list)


def lemma_verify(n_max: int = 3, trials: int = 200, seed: int = 0,
                 probe_dims: Tuple[int, ...] = (1, 2, 3, 4)) -> LemmaSummary:
    """Two-sided check of the reflection-round undetectability criterion.

    Forward: attacks built to satisfy every constraint never produce a
    minus-mode click and leak nothing.  Converse: attacks breaking exactly
    one constraint always produce a strictly positive minus-click
    probability, equal to half the squared probe mismatch for the
    single-photon case.  Also re-derives the even/odd split of an n-photon
    return component numerically.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2 to exercise every rule")
    summary = LemmaSummary(n_max=n_max, probe_dims=tuple(probe_dims))

    for t in range(trials):
        d = probe_dims[t % len(probe_dims)]
        attack = constrained_random_attack(seed * 1_000_003 + t, probe_dim=d,
                                           n_max=n_max)
        report = check_constraints(attack, n_max=n_max)
        summary.forward_trials += 1
        summary.forward_max_minus_prob = max(summary.forward_max_minus_prob,
                                             report.bob_minus_click_prob)
        leak = eve_leakage(attack, n_max=n_max)
        if leak.conditional_fidelity is None:
            summary.failures.append(f"forward trial {t}: leakage {leak.detail}")
        else:
            summary.forward_min_fidelity = min(summary.forward_min_fidelity,
                                               leak.conditional_fidelity)

    levels = list(range(2, n_max + 1))
    for t in range(trials):
        d = probe_dims[t % len(probe_dims)]
        if t % 2 == 0:
            attack = constrained_random_attack(
                seed * 2_000_003 + t, probe_dim=d, n_max=n_max,
                violation="single-photon-mismatch")
        else:
            attack = constrained_random_attack(
                seed * 2_000_003 + t, probe_dim=d, n_max=n_max,
                violation="multi-photon-return",
                violation_level=levels[(t // 2) % len(levels)])
        report = check_constraints(attack, n_max=n_max)
        summary.converse_trials += 1
        summary.converse_min_minus_prob = min(summary.converse_min_minus_prob,
                                              report.bob_minus_click_prob)
        if report.bob_minus_click_prob <= EXACT_TOL:
            summary.failures.append(
                f"converse trial {t}: violating attack stayed invisible")
        if t % 2 == 0:
            predicted = report.bit_probe_distance ** 2 / 2.0
            err = abs(report.bob_minus_click_prob - predicted)
            summary.single_photon_prediction_max_err = max(
                summary.single_photon_prediction_max_err, err)

    summary.decomposition_max_err = _parity_decomposition_error(n_max, seed)

    summary.passed = (
        not summary.failures
        and summary.forward_max_minus_prob <= EXACT_TOL
        and summary.forward_min_fidelity >= 1.0 - 1e-9
        and summary.converse_min_minus_prob > EXACT_TOL
        and summary.single_photon_prediction_max_err <= 1e-9
        and summary.decomposition_max_err <= 1e-12
    )
    return summary


def _parity_decomposition_error(n_max: int, seed: int) -> float:
    """Numerical check that an n-photon return splits over the parity states.

    For probe vectors A, B:  A|0,n> + B|n,0>  equals
    [(A+B)/sqrt(2)] (|0,n>+|n,0>)/sqrt(2) + [(A-B)/sqrt(2)] (|0,n>-|n,0>)/sqrt(2).
    """
    rng = np.random.default_rng(seed + 11)
    d = 4
    worst = 0.0
    for n in range(2, n_max + 1):
        a = rng.normal(size=d) + 1j * rng.normal(size=d)
        b = rng.normal(size=d) + 1j * rng.normal(size=d)
        r = 1.0 / math.sqrt(2.0)

        def embed(vec: np.ndarray, channel: FockState) -> JointState:
            probe = {e: vec[e] for e in range(d)}
            return JointState.from_product(probe, channel, d)

        lhs = embed(a, make_basis_state((0, n), Z, n_max)).plus(
            embed(b, make_basis_state((n, 0), Z, n_max)))
        rhs = embed((a + b) * r, parity_state(n, "even", Z, n_max)).plus(
            embed((a - b) * r, parity_state(n, "odd", Z, n_max)))
        diff = lhs.plus(rhs.scaled(-1.0))
        worst = max(worst, diff.norm())
    return worst


def b92_conclusive_prob(overlap: float) -> float:
    """Probability that the receiver's random-basis measurement is conclusive."""
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    return 0.5 * (1.0 - overlap ** 2)


def b92_breakable(lossrate: float, overlap: float) -> bool:
    """Intercept-resend through conclusive measurements hides inside the loss
    budget once the loss rate reaches one minus the conclusive probability."""
    return lossrate >= 0.5 * (1.0 + overlap ** 2)


def b92_povm_breakable(lossrate: float, overlap: float) -> bool:
    """Threshold for the stronger generalized-measurement discriminator:
    the loss rate only needs to reach the state overlap itself."""
    return lossrate >= overlap


@dataclass(frozen=True)
class PnsFeasibility:
    expected_count: float
    threshold_ratio: float
    feasible: bool


def pns_feasibility(p0: float, p1: float, p2: float, transmission: float,
                    rounds: int) -> PnsFeasibility:
    """Photon-splitting viability for a pulsed source over a lossy channel.

    The receiver expects ``X = (F*p1 + (1-(1-F)^2)*p2) * N`` non-empty pulses.
    Splitting alone can cover that exactly when ``p2*(1-F)^2 >= p1*F``, i.e.
    the two-photon pulse count itself reaches X.
    """
    for name, p in (("p0", p0), ("p1", p1), ("p2", p2)):
        if p < -1e-12:
            raise ValueError(f"{name} must be non-negative")
    if abs(p0 + p1 + p2 - 1.0) > 1e-12:
        raise ValueError("pulse-size probabilities must sum to 1")
    if not 0.0 <= transmission <= 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    f = transmission
    x = (f * p1 + (1.0 - (1.0 - f) ** 2) * p2) * rounds
    ratio = math.inf if f == 1.0 else f / (1.0 - f) ** 2
    # same inequality as p2/p1 >= F/(1-F)^2, kept division-free
    feasible = p2 * (1.0 - f) ** 2 >= p1 * f
    return PnsFeasibility(expected_count=x, threshold_ratio=ratio,
                          feasible=feasible)
