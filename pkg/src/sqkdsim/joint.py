"""Composite states over Eve's probe, Alice's detector probe, and the channel.

A key is ``(e, a, c)``: Eve probe basis index, Alice probe pattern, channel
occupation.  Channel amplitudes are always stored over z-basis keys; Bob's
x-basis detection converts on the fly.  Alice's probe starts in the idle
pattern ``(0, 0)`` and is entangled with the channel only by her SIFT
transform, which records one threshold (or counter) value per mode.
"""

from __future__ import annotations

import math
from typing import Dict, List, Mapping, Tuple

import numpy as np

from .fock import (
    AMPLITUDE_FLOOR,
    FockState,
    Occupation,
    TruncationError,
    transform_amplitudes,
    X,
)

THRESHOLD = "threshold"
COUNTER = "counter"

Pattern = Tuple[int, int]
JointKey = Tuple[int, Pattern, Occupation]

IDLE = (0, 0)


def detector_pattern(occ: Occupation, model: str) -> Pattern:
    """Per-mode detector readout: clicks for threshold, 0/1/2+ for counters."""
    cap = 1 if model == THRESHOLD else 2
    return (min(occ[0], cap), min(occ[1], cap))


def pattern_code(pattern: Pattern) -> int:
    """Stable integer code for a readout pattern (both detector models)."""
    return 3 * pattern[0] + pattern[1]


def code_pattern(code: int) -> Pattern:
    return (code // 3, code % 3)


class ChannelBasis:
    """Enumeration and index tables for the truncated two-mode space."""

    def __init__(self, n_max: int):
        self.n_max = n_max
        occs: List[Occupation] = []
        for total in range(n_max + 1):
            for n1 in range(total + 1):
                occs.append((n1, total - n1))
        self.occupations: Tuple[Occupation, ...] = tuple(occs)
        self.dim = len(occs)
        self.index: Dict[Occupation, int] = {o: i for i, o in enumerate(occs)}
        # involutive orthogonal mode rotation; rows and columns share indexing
        had = np.zeros((self.dim, self.dim))
        for i, occ in enumerate(occs):
            for key, coeff in transform_amplitudes({occ: 1.0}, n_max).items():
                had[i, self.index[key]] = coeff.real
        self.hadamard = had

    def vector(self, state: FockState) -> np.ndarray:
        """Dense z-basis amplitude vector of a channel state."""
        out = np.zeros(self.dim, dtype=np.complex128)
        for occ, amp in state.to_z().items():
            out[self.index[occ]] = amp
        return out


class JointState:
    """Sparse pure state on probe x Alice-probe x channel."""

    __slots__ = ("probe_dim", "n_max", "_amps")

    def __init__(self, probe_dim: int, n_max: int,
                 amps: Mapping[JointKey, complex]):
        self.probe_dim = probe_dim
        self.n_max = n_max
        clean: Dict[JointKey, complex] = {}
        for (e, a, c), amp in amps.items():
            if not 0 <= e < probe_dim:
                raise ValueError(f"probe index {e} outside dimension {probe_dim}")
            if c[0] + c[1] > n_max:
                raise TruncationError(f"channel occupation {c} exceeds cap {n_max}")
            amp = complex(amp)
            if abs(amp) > AMPLITUDE_FLOOR:
                clean[(e, tuple(a), tuple(c))] = amp
        self._amps = clean

    @classmethod
    def from_product(cls, probe: Mapping[int, complex] | int,
                     channel: FockState, probe_dim: int) -> "JointState":
        """Probe (index or amplitude map) tensored with a channel state, idle Alice probe."""
        if isinstance(probe, int):
            probe = {probe: 1.0}
        amps: Dict[JointKey, complex] = {}
        for occ, camp in channel.to_z().items():
            for e, pamp in probe.items():
                amps[(e, IDLE, occ)] = pamp * camp
        return cls(probe_dim, channel.n_max, amps)

    def items(self):
        return iter(sorted(self._amps.items()))

    def __len__(self) -> int:
        return len(self._amps)

    def norm_sq(self) -> float:
        return sum(abs(a) ** 2 for a in self._amps.values())

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def scaled(self, factor: complex) -> "JointState":
        return JointState(self.probe_dim, self.n_max,
                          {k: factor * a for k, a in self._amps.items()})

    def plus(self, other: "JointState") -> "JointState":
        if other.probe_dim != self.probe_dim:
            raise ValueError("probe dimensions differ")
        amps = dict(self._amps)
        for k, a in other._amps.items():
            amps[k] = amps.get(k, 0j) + a
        return JointState(self.probe_dim, max(self.n_max, other.n_max), amps)

    def inner(self, other: "JointState") -> complex:
        return sum(self._amps[k].conjugate() * other._amps[k]
                   for k in self._amps.keys() & other._amps.keys())

    # ---- Alice ----

    def apply_sift(self, model: str = THRESHOLD) -> "JointState":
        """Record per-mode detector values into Alice's probe.

        Requires the probe to be idle; the channel occupation is untouched.
        """
        amps: Dict[JointKey, complex] = {}
        for (e, a, c), amp in self._amps.items():
            if a != IDLE:
                raise ValueError("Alice probe must be idle before SIFT")
            amps[(e, detector_pattern(c, model), c)] = amp
        return JointState(self.probe_dim, self.n_max, amps)

    def alice_branches(self) -> List[Tuple[Pattern, float, "JointState"]]:
        """Project Alice's probe: one normalized branch per readout pattern."""
        groups: Dict[Pattern, Dict[JointKey, complex]] = {}
        for key, amp in self._amps.items():
            groups.setdefault(key[1], {})[key] = amp
        branches = []
        for pattern in sorted(groups):
            sub = JointState(self.probe_dim, self.n_max, groups[pattern])
            p = sub.norm_sq()
            branches.append((pattern, p, sub.scaled(1.0 / math.sqrt(p))))
        return branches

    def occupation_branches(self) -> List[Tuple[Occupation, float, np.ndarray]]:
        """Collapse the channel occupation completely (destructive detection).

        Returns ``(occupation, probability, probe amplitude vector)`` per
        outcome; the probe vector is normalized.
        """
        groups: Dict[Occupation, np.ndarray] = {}
        for (e, _a, c), amp in self._amps.items():
            vec = groups.setdefault(c, np.zeros(self.probe_dim, dtype=np.complex128))
            vec[e] += amp
        branches = []
        for occ in sorted(groups):
            vec = groups[occ]
            p = float(np.vdot(vec, vec).real)
            branches.append((occ, p, vec / math.sqrt(p)))
        return branches

    # ---- Eve ----

    def probe_component(self, occ: Occupation) -> np.ndarray:
        """Unnormalized probe vector attached to one channel occupation."""
        out = np.zeros(self.probe_dim, dtype=np.complex128)
        for (e, _a, c), amp in self._amps.items():
            if c == occ:
                out[e] += amp
        return out

    def photon_count_branches(self) -> List[Tuple[int, float, "JointState"]]:
        """Nondemolition total-photon count of the channel part."""
        groups: Dict[int, Dict[JointKey, complex]] = {}
        for key, amp in self._amps.items():
            groups.setdefault(key[2][0] + key[2][1], {})[key] = amp
        branches = []
        for count in sorted(groups):
            sub = JointState(self.probe_dim, self.n_max, groups[count])
            p = sub.norm_sq()
            branches.append((count, p, sub.scaled(1.0 / math.sqrt(p))))
        return branches

    def replace_channel(self, channel: FockState) -> "JointState":
        """Swap the channel content for a fresh state, keeping the probe.

        Only defined when probe and channel are unentangled (the absorbed
        channel factor is then a constant that can be dropped).
        """
        rows: Dict[Tuple[int, Pattern], int] = {}
        cols: Dict[Occupation, int] = {}
        for (e, a, c) in self._amps:
            rows.setdefault((e, a), len(rows))
            cols.setdefault(c, len(cols))
        mat = np.zeros((len(rows), len(cols)), dtype=np.complex128)
        for (e, a, c), amp in self._amps.items():
            mat[rows[(e, a)], cols[c]] = amp
        u, s, _vh = np.linalg.svd(mat, full_matrices=False)
        if len(s) > 1 and s[1] > 1e-12 * s[0]:
            raise ValueError("probe is entangled with the channel; "
                             "cannot swap the channel factor out")
        probe_vec = u[:, 0] * s[0]
        amps: Dict[JointKey, complex] = {}
        for occ, camp in channel.to_z().items():
            for (e, a), row in rows.items():
                amps[(e, a, occ)] = probe_vec[row] * camp
        return JointState(self.probe_dim, self.n_max, amps)

    # ---- Bob ----

    def occupation_distribution(self, basis: str) -> Dict[Occupation, float]:
        """Channel photon-count distribution in the requested basis."""
        probs: Dict[Occupation, float] = {}
        groups: Dict[Tuple[int, Pattern], Dict[Occupation, complex]] = {}
        for (e, a, c), amp in self._amps.items():
            groups.setdefault((e, a), {})[c] = amp
        for sub in groups.values():
            if basis == X:
                sub = transform_amplitudes(sub, self.n_max)
            for occ, amp in sub.items():
                probs[occ] = probs.get(occ, 0.0) + abs(amp) ** 2
        return probs

    def bob_distribution(self, basis: str, model: str = THRESHOLD
                         ) -> Dict[Pattern, float]:
        """Detector pattern distribution for Bob measuring in ``basis``."""
        probs: Dict[Pattern, float] = {}
        for occ, p in self.occupation_distribution(basis).items():
            pat = detector_pattern(occ, model)
            probs[pat] = probs.get(pat, 0.0) + p
        return probs

    def channel_loss_branches(self, survival: float
                              ) -> List[Tuple[Tuple[int, int], float, "JointState"]]:
        """Per-photon loss with the environment counting lost photons per mode.

        Each branch fixes ``(k1, k0)`` photons lost from the two modes; the
        amplitude map keeps within-branch coherence.  Branch probabilities
        sum to one.  Loss treats both modes identically, so acting on the
        stored z keys matches acting in the x basis.
        """
        if not 0.0 <= survival <= 1.0:
            raise ValueError("survival fraction must lie in [0, 1]")
        branches = []
        max1 = max((c[0] for (_e, _a, c) in self._amps), default=0)
        max0 = max((c[1] for (_e, _a, c) in self._amps), default=0)
        for k1 in range(max1 + 1):
            for k0 in range(max0 + 1):
                amps: Dict[JointKey, complex] = {}
                for (e, a, c), amp in self._amps.items():
                    n1, n0 = c
                    if k1 > n1 or k0 > n0:
                        continue
                    w = (math.comb(n1, k1) * survival ** (n1 - k1) * (1 - survival) ** k1
                         * math.comb(n0, k0) * survival ** (n0 - k0) * (1 - survival) ** k0)
                    if w <= 0.0:
                        continue
                    amps[(e, a, (n1 - k1, n0 - k0))] = amp * math.sqrt(w)
                if not amps:
                    continue
                sub = JointState(self.probe_dim, self.n_max, amps)
                p = sub.norm_sq()
                if p > AMPLITUDE_FLOOR:
                    branches.append(((k1, k0), p, sub.scaled(1.0 / math.sqrt(p))))
        return branches

    def __repr__(self) -> str:
        terms = ", ".join(f"{k}: {a:.4g}" for k, a in self.items())
        return f"JointState({{{terms}}}, probe_dim={self.probe_dim})"
