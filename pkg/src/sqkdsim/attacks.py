"""Eve's two-pass attacks: linear maps on probe x channel plus round strategies.

An attack holds an outbound map (applied on the way to Alice), a return map
(applied on the way back to Bob), and optionally a classical per-round
strategy for attacks that measure and act adaptively.  Maps are partial
isometries given by orthonormal domain vectors and their images; inputs the
protocol never produces are outside the domain and raise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .fock import AMPLITUDE_FLOOR, Occupation
from .joint import ChannelBasis, JointState, JointKey, Pattern

ISOMETRY_TOL = 1e-10
DOMAIN_TOL = 1e-9

ECKey = Tuple[int, Occupation]
ECVec = Dict[ECKey, complex]


class IsometryError(ValueError):
    """A supplied attack map fails to preserve inner products."""


class AttackDomainError(ValueError):
    """An attack map was applied to a state outside its declared domain."""


def _ec_norm_sq(v: ECVec) -> float:
    return sum(abs(a) ** 2 for a in v.values())


def _ec_inner(a: ECVec, b: ECVec) -> complex:
    return sum(a[k].conjugate() * b[k] for k in a.keys() & b.keys())


def _ec_scale(v: ECVec, c: complex) -> ECVec:
    return {k: c * a for k, a in v.items()}


class ProbeChannelMap:
    """Linear map on probe x channel, acting identically for every Alice readout.

    Stored as orthonormal domain vectors and their images.  ``apply`` expands
    the input over the domain; any residual outside the span is an error.
    """

    def __init__(self, columns: Sequence[Tuple[ECVec, ECVec]],
                 identity: bool = False):
        self.identity = identity
        self.columns: List[Tuple[ECVec, ECVec]] = [
            ({k: complex(v) for k, v in dom.items()},
             {k: complex(v) for k, v in img.items()})
            for dom, img in columns
        ]

    @classmethod
    def identity_map(cls) -> "ProbeChannelMap":
        return cls([], identity=True)

    @classmethod
    def from_occupation_rules(
            cls,
            rules: Mapping[ECKey, Sequence[Tuple[int, Occupation, complex]]],
            identity_keys: Sequence[ECKey] = ()) -> "ProbeChannelMap":
        """Basis-key columns: explicit rewrite rules plus pass-through keys."""
        columns = []
        for key in sorted(rules):
            image: ECVec = {}
            for (e, occ, amp) in rules[key]:
                image[(e, tuple(occ))] = image.get((e, tuple(occ)), 0j) + complex(amp)
            columns.append(({key: 1.0 + 0j}, image))
        for key in sorted(identity_keys):
            if key in rules:
                raise ValueError(f"key {key} both rewritten and passed through")
            columns.append(({key: 1.0 + 0j}, {key: 1.0 + 0j}))
        return cls(columns)

    @classmethod
    def from_dense(cls, matrix: np.ndarray, probe_dim: int,
                   channel: ChannelBasis) -> "ProbeChannelMap":
        """Dense matrix over the full probe x channel basis, probe-major indexing."""
        dim = probe_dim * channel.dim
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (dim, dim):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match probe_dim x channel "
                f"dim = {probe_dim} x {channel.dim} = {dim}")
        columns = []
        for j in range(dim):
            dom = {(j // channel.dim, channel.occupations[j % channel.dim]): 1.0 + 0j}
            img: ECVec = {}
            col = matrix[:, j]
            for i in np.nonzero(np.abs(col) > AMPLITUDE_FLOOR)[0]:
                img[(int(i) // channel.dim,
                     channel.occupations[int(i) % channel.dim])] = complex(col[i])
            columns.append((dom, img))
        return cls(columns)

    def isometry_defect(self) -> float:
        """Largest deviation of the map from inner-product preservation."""
        if self.identity:
            return 0.0
        worst = 0.0
        for i, (dom_i, img_i) in enumerate(self.columns):
            for j, (dom_j, img_j) in enumerate(self.columns):
                want = _ec_inner(dom_i, dom_j)
                got = _ec_inner(img_i, img_j)
                worst = max(worst, abs(want - got))
                if i == j:
                    worst = max(worst, abs(want - 1.0))  # domain must be orthonormal
        return worst

    def apply(self, state: JointState) -> JointState:
        if self.identity:
            return state
        groups: Dict[Pattern, ECVec] = {}
        for (e, a, c), amp in state.items():
            groups.setdefault(a, {})[(e, c)] = amp
        out: Dict[JointKey, complex] = {}
        for a, vec in groups.items():
            total = _ec_norm_sq(vec)
            captured = 0.0
            for dom, img in self.columns:
                coeff = _ec_inner(dom, vec)
                if abs(coeff) <= AMPLITUDE_FLOOR:
                    continue
                captured += abs(coeff) ** 2
                for (e, c), amp in img.items():
                    key = (e, a, c)
                    out[key] = out.get(key, 0j) + coeff * amp
            if total - captured > DOMAIN_TOL * max(total, 1.0):
                raise AttackDomainError(
                    f"input component of weight {total - captured:.3e} lies outside "
                    f"the attack map's domain")
        return JointState(state.probe_dim, state.n_max, out)


@dataclass(frozen=True)
class CountDecodeStrategy:
    """Eve counts returned photons to decode Alice's action.

    Counts at or above ``ctrl_min_count`` are read as a reflection (apply the
    return map); smaller counts are read as a measured-and-resent pulse, which
    Eve measures in the computational basis and forwards unchanged.
    """
    ctrl_min_count: int = 2
    kind: str = "count-decode"

    def action(self, count: int) -> Tuple[str, str]:
        if count >= self.ctrl_min_count:
            return "ctrl", "apply_map"
        return "sift", "measure_resend"


@dataclass(frozen=True)
class UsdStrategy:
    """Intercept-resend through an unambiguous discrimination of the two
    non-orthogonal signal states; forward only conclusive outcomes."""
    overlap: float
    kind: str = "usd-b92"


@dataclass(frozen=True)
class PnsStrategy:
    """Split two-photon pulses, keep one photon, and forward just enough
    pulses to match the receiver's expected count; block the rest."""
    kind: str = "pns"


@dataclass
class AttackSpec:
    """Validated description of one attack: maps, flags, and strategy."""
    name: str
    probe_dim: int
    outbound: Optional[ProbeChannelMap] = None
    returning: Optional[ProbeChannelMap] = None
    lossless_channel: bool = False
    strategy: object = None
    params: dict = field(default_factory=dict)

    def validate(self, tol: float = ISOMETRY_TOL) -> float:
        worst = 0.0
        for label, m in (("outbound", self.outbound), ("return", self.returning)):
            if m is None:
                continue
            defect = m.isometry_defect()
            worst = max(worst, defect)
            if defect > tol:
                raise IsometryError(
                    f"{label} map of attack {self.name!r} is not an isometry "
                    f"(max deviation {defect:.3e} > {tol:g})")
        return worst

    def apply_outbound(self, state: JointState) -> JointState:
        return state if self.outbound is None else self.outbound.apply(state)

    def apply_return(self, state: JointState) -> JointState:
        return state if self.returning is None else self.returning.apply(state)


def _plus_column(probe_index: int = 0) -> ECVec:
    r = 1.0 / math.sqrt(2.0)
    return {(probe_index, (0, 1)): r, (probe_index, (1, 0)): r}


def identity_attack(probe_dim: int = 1) -> AttackSpec:
    spec = AttackSpec(name="identity", probe_dim=probe_dim)
    spec.validate()
    return spec


def pns_attack(n_max: int = 2) -> AttackSpec:
    """Nondemolition splitting of two-photon pulses.

    Eve's probe is itself a two-mode register (vacuum, one photon in either
    mode).  Pulses with a photon number other than two pass untouched; on a
    two-photon pulse she keeps one photon, matching the pulse's own modes, so
    the split is invisible in both measurement bases.
    """
    if n_max < 2:
        raise ValueError("photon cap must be at least 2 for photon splitting")
    probe_occupations = ((0, 0), (0, 1), (1, 0))
    vac, keep0, keep1 = 0, 1, 2
    r = 1.0 / math.sqrt(2.0)
    rules: Dict[ECKey, list] = {
        (vac, (0, 2)): [(keep0, (0, 1), 1.0)],
        (vac, (2, 0)): [(keep1, (1, 0), 1.0)],
        (vac, (1, 1)): [(keep1, (0, 1), r), (keep0, (1, 0), r)],
    }
    identity_keys = []
    for total in range(n_max + 1):
        if total == 2:
            continue
        for n1 in range(total + 1):
            identity_keys.append((vac, (n1, total - n1)))
    outbound = ProbeChannelMap.from_occupation_rules(rules, identity_keys)
    spec = AttackSpec(
        name="pns", probe_dim=3, outbound=outbound, returning=None,
        lossless_channel=True, strategy=PnsStrategy(),
        params={"probe_occupations": probe_occupations})
    spec.validate()
    return spec


def tagging_attack() -> AttackSpec:
    """Replace the outbound pulse by the photon-number tag (|0,2>+|2,0>)/sqrt(2).

    The outbound leg swaps whatever arrives into a three-level register of
    Eve's (keeping the map an isometry even when the source mixes in other
    states) and sends the tag on.  The return map folds the tag back into a
    single photon, so reflected rounds hand Bob exactly the plus state.
    When Alice detects destructively and resends single photons, the
    returned photon number alone decodes her action, which the bundled
    count strategy exploits.
    """
    d = 3
    r = 1 / math.sqrt(2.0)
    tag_out = [
        ({(0, occ_in): 1.0 + 0j},
         {(store, (0, 2)): r, (store, (2, 0)): r})
        for store, occ_in in enumerate(((0, 1), (1, 0), (0, 0)))
    ]
    outbound = ProbeChannelMap(tag_out)
    rules: Dict[ECKey, list] = {}
    identity_keys = []
    for e in range(d):
        rules[(e, (0, 2))] = [(e, (0, 1), 1.0)]
        rules[(e, (2, 0))] = [(e, (1, 0), 1.0)]
        identity_keys.append((e, (0, 0)))
    returning = ProbeChannelMap.from_occupation_rules(rules, identity_keys)
    spec = AttackSpec(
        name="tagging", probe_dim=d, outbound=outbound, returning=returning,
        lossless_channel=True, strategy=CountDecodeStrategy())
    spec.validate()
    return spec


def usd_attack_b92(overlap: float) -> AttackSpec:
    """Unambiguous-discrimination intercept for the two-state protocol."""
    if not 0.0 <= overlap < 1.0:
        raise ValueError("state overlap must lie in [0, 1)")
    spec = AttackSpec(
        name="usd-b92", probe_dim=1, lossless_channel=True,
        strategy=UsdStrategy(overlap=overlap), params={"overlap": overlap})
    spec.validate()
    return spec


def general_attack(outbound_matrix: np.ndarray, return_matrix: np.ndarray,
                   probe_dim: int, n_max: int) -> AttackSpec:
    """User-supplied dense maps over the full probe x channel basis."""
    channel = ChannelBasis(n_max)
    spec = AttackSpec(
        name="general", probe_dim=probe_dim,
        outbound=ProbeChannelMap.from_dense(outbound_matrix, probe_dim, channel),
        returning=ProbeChannelMap.from_dense(return_matrix, probe_dim, channel),
        lossless_channel=True)
    spec.validate()
    return spec


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _orthonormal_triple(rng: np.random.Generator, dim: int) -> np.ndarray:
    m = rng.normal(size=(dim, 3)) + 1j * rng.normal(size=(dim, 3))
    q, _ = np.linalg.qr(m)
    return q[:, :3].T


def _vec_to_ec(vec: np.ndarray, occ: Occupation) -> ECVec:
    return {(e, occ): complex(vec[e]) for e in range(len(vec))
            if abs(vec[e]) > AMPLITUDE_FLOOR}


def _merge(*vecs: ECVec) -> ECVec:
    out: ECVec = {}
    for v in vecs:
        for k, a in v.items():
            out[k] = out.get(k, 0j) + a
    return out


def constrained_random_attack(seed: int, probe_dim: int = 4, n_max: int = 3,
                              violation: Optional[str] = None,
                              violation_level: int = 2) -> AttackSpec:
    """Random attack obeying (or minimally breaking) every undetectability rule.

    The outbound leg spreads the plus pulse over single-mode occupations only,
    so Alice never sees both detectors click.  The return leg sends each
    measured bit back as the matching single photon with a common probe
    component, plus loss terms, which keeps reflected rounds free of
    minus-mode clicks and makes the probe independent of the key bit.

    ``violation='single-photon-mismatch'`` detunes the two single-photon probe
    components; ``violation='multi-photon-return'`` leaks an n-photon return
    component at ``violation_level``.  Everything else stays compliant, so
    each violating attack breaks exactly one rule.
    """
    if probe_dim < 1:
        raise ValueError("probe dimension must be at least 1")
    if n_max < 1:
        raise ValueError("photon cap must be at least 1")
    if violation not in (None, "single-photon-mismatch", "multi-photon-return"):
        raise ValueError(f"unknown violation kind {violation!r}")
    if violation == "multi-photon-return" and not 2 <= violation_level <= n_max:
        raise ValueError("violation level must lie in [2, n_max]")

    rng = np.random.default_rng(seed)
    d = probe_dim

    # outbound components per occupation, zero on mixed occupations
    bit0_keys = [(0, n) for n in range(1, n_max + 1)]
    bit1_keys = [(n, 0) for n in range(1, n_max + 1)]
    comps: Dict[Occupation, np.ndarray] = {}
    for occ in bit0_keys + bit1_keys + [(0, 0)]:
        comps[occ] = (rng.normal(size=d) + 1j * rng.normal(size=d)) * rng.uniform(0.3, 1.0)
    if d < 3:
        # no room for orthogonal loss components: balance the two bit sectors
        s0 = math.sqrt(sum(np.vdot(comps[k], comps[k]).real for k in bit0_keys))
        s1 = math.sqrt(sum(np.vdot(comps[k], comps[k]).real for k in bit1_keys))
        for k in bit1_keys:
            comps[k] = comps[k] * (s0 / s1)
    total = math.sqrt(sum(np.vdot(v, v).real for v in comps.values()))
    comps = {k: v / total for k, v in comps.items()}

    outbound = ProbeChannelMap([(
        _plus_column(),
        _merge(*(_vec_to_ec(v, occ) for occ, v in comps.items())),
    )])

    # return map on the three orthogonal branch states Alice can send back
    branch0 = _merge(*(_vec_to_ec(comps[k], k) for k in bit0_keys))
    branch1 = _merge(*(_vec_to_ec(comps[k], k) for k in bit1_keys))
    branch_vac = _vec_to_ec(comps[(0, 0)], (0, 0))
    n0 = math.sqrt(_ec_norm_sq(branch0))
    n1 = math.sqrt(_ec_norm_sq(branch1))
    nv = math.sqrt(_ec_norm_sq(branch_vac))

    if d >= 3:
        h_dirs = _orthonormal_triple(rng, d)
        keep = rng.uniform(0.4, 0.95) * min(n0, n1)
        h0 = math.sqrt(n0 ** 2 - keep ** 2)
        h1 = math.sqrt(n1 ** 2 - keep ** 2)
    else:
        h_dirs = np.vstack([_random_unit(rng, d)] * 3)
        keep = n0  # balanced above, so n0 == n1
        h0 = h1 = 0.0

    common = _random_unit(rng, d) * keep
    probe_bit0 = common
    probe_bit1 = common.copy()
    leak: Dict[str, np.ndarray] = {}
    if violation == "single-photon-mismatch":
        # rotate the bit-1 component away from the bit-0 one, keeping its norm
        other = _random_unit(rng, d)
        mix = rng.uniform(0.2, 0.9)
        cand = (1 - mix) * common + mix * other * keep
        probe_bit1 = cand / np.linalg.norm(cand) * keep
    elif violation == "multi-photon-return":
        frac = rng.uniform(0.2, 0.8)
        leak_norm = frac * min(keep, min(n0, n1))
        keep_adj = math.sqrt(keep ** 2 - leak_norm ** 2)
        probe_bit0 = common / keep * keep_adj
        probe_bit1 = probe_bit0
        leak["vec"] = _random_unit(rng, d) * leak_norm

    img0 = _vec_to_ec(probe_bit0, (0, 1))
    img1 = _vec_to_ec(probe_bit1, (1, 0))
    if leak:
        nlev = violation_level
        img0 = _merge(img0, _vec_to_ec(leak["vec"], (0, nlev)))
        img1 = _merge(img1, _vec_to_ec(leak["vec"], (nlev, 0)))
    img0 = _merge(img0, _vec_to_ec(h_dirs[0] * h0, (0, 0)))
    img1 = _merge(img1, _vec_to_ec(h_dirs[1] * h1, (0, 0)))

    columns = [
        (_ec_scale(branch0, 1.0 / n0), _ec_scale(img0, 1.0 / n0)),
        (_ec_scale(branch1, 1.0 / n1), _ec_scale(img1, 1.0 / n1)),
    ]
    if nv > AMPLITUDE_FLOOR:
        columns.append((_ec_scale(branch_vac, 1.0 / nv),
                        _vec_to_ec(h_dirs[2], (0, 0))))

    name = "constrained-random" if violation is None else f"violating-{violation}"
    spec = AttackSpec(
        name=name, probe_dim=d, outbound=outbound,
        returning=ProbeChannelMap(columns), lossless_channel=True,
        params={"seed": seed, "n_max": n_max, "violation": violation,
                "violation_level": violation_level})
    spec.validate()
    return spec


def load_matrix_file(path: str) -> np.ndarray:
    """Read a dense complex matrix: whitespace floats, re/im pairs, row-major."""
    values: List[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                values.extend(float(tok) for tok in line.split())
    if len(values) % 2:
        raise ValueError(f"{path}: odd float count, expected re/im pairs")
    pairs = len(values) // 2
    dim = math.isqrt(pairs)
    if dim * dim != pairs:
        raise ValueError(f"{path}: {pairs} entries do not form a square matrix")
    flat = np.array(values).reshape(-1, 2)
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(dim, dim)
