"""Scenario files: INI-style sections describing one reproducible run.

Sections: ``[scenario]`` (name, seed), ``[protocol]`` (variant, rounds,
transmission, detectors, policy, caps), ``[source]`` (pulse-size
probabilities), ``[strengthening]`` (counters, cross-basis tests, extra
states), ``[attack]`` (name plus parameters), ``[expectations]`` (one
``metric = analytic mode value`` line each).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List

from . import attacks as attacks_mod
from .joint import COUNTER
from .protocol import ConfigError, ProtocolConfig
from .report import Expectation


class ScenarioError(ValueError):
    """A scenario file could not be parsed or validated."""


ATTACK_NAMES = ("identity", "pns", "usd-b92", "tagging",
                "constrained-random", "general")

ATTACK_SUMMARIES: Dict[str, str] = {
    "identity": (
        "Eve does nothing: both passes are the identity, the channel keeps "
        "its natural loss, and no information leaks."),
    "pns": (
        "Nondemolition splitting of two-photon pulses: Eve keeps one photon "
        "in a matching mode of her own two-mode register and forwards the "
        "other, an operation invisible in both measurement bases; she reads "
        "her photon after the basis announcement.  Pulse selection forwards "
        "split photons until the receiver's expected count is met and blocks "
        "everything else over a lossless substitute channel.  Parameters: "
        "none (two-photon rules; other pulse sizes pass through)."),
    "usd-b92": (
        "Intercept-resend on the two-state protocol: Eve measures each pulse "
        "in one of the receiver's two bases; an unambiguous outcome "
        "identifies the state, which she resends over a lossless channel, "
        "otherwise she sends vacuum.  Only worth attempting when the loss "
        "rate reaches (1+overlap^2)/2.  Parameters: overlap (defaults to the "
        "configured signal-state overlap)."),
    "tagging": (
        "Photon-number tag: the outbound pulse is replaced by "
        "(|0,2>+|2,0>)/sqrt(2); the return map folds the tag back into a "
        "single photon so reflected rounds look untouched.  Against "
        "destructive measure-and-resend detectors, the returned photon "
        "count alone decodes the classical party's action with certainty, "
        "though it yields no key information either way.  Parameters: none."),
    "constrained-random": (
        "Random attack satisfying every undetectability rule: the outbound "
        "pulse spreads over single-mode occupations only and the return leg "
        "attaches one common probe component to both key bits.  Used to "
        "exercise the robustness statement numerically.  Parameters: seed, "
        "probe_dim (default 4), optional violation in "
        "{single-photon-mismatch, multi-photon-return} with violation_level."),
    "general": (
        "User-supplied dense outbound/return maps over probe x channel, "
        "validated as isometries.  Parameters: probe_dim, outbound_file, "
        "return_file (row-major re/im float pairs)."),
}


@dataclass
class Scenario:
    name: str
    config: ProtocolConfig
    attack_name: str
    attack_params: Dict[str, str] = field(default_factory=dict)
    expectations: List[Expectation] = field(default_factory=list)

    def build_attack(self) -> attacks_mod.AttackSpec:
        return build_attack(self.attack_name, self.attack_params, self.config)


def _suggest(name: str) -> str:
    close = [n for n in ATTACK_NAMES
             if n.startswith(name[:3]) or name in n or n in name]
    return f" (did you mean {close[0]!r}?)" if close else ""


def list_attacks() -> List[str]:
    return list(ATTACK_NAMES)


def describe_attack(name: str) -> str:
    if name not in ATTACK_SUMMARIES:
        raise ScenarioError(f"unknown attack {name!r}{_suggest(name)}")
    return f"{name}: {ATTACK_SUMMARIES[name]}"


def build_attack(name: str, params: Dict[str, str],
                 config: ProtocolConfig) -> attacks_mod.AttackSpec:
    if name not in ATTACK_NAMES:
        raise ScenarioError(f"unknown attack {name!r}{_suggest(name)}")
    if name == "identity":
        return attacks_mod.identity_attack(
            probe_dim=int(params.get("probe_dim", 1)))
    if name == "pns":
        return attacks_mod.pns_attack(n_max=config.channel_n_max())
    if name == "tagging":
        return attacks_mod.tagging_attack()
    if name == "usd-b92":
        overlap = float(params.get("overlap", config.b92_overlap))
        return attacks_mod.usd_attack_b92(overlap)
    if name == "constrained-random":
        violation = params.get("violation") or None
        return attacks_mod.constrained_random_attack(
            seed=int(params.get("seed", config.rng_seed + 1)),
            probe_dim=int(params.get("probe_dim", 4)),
            n_max=config.channel_n_max(),
            violation=violation,
            violation_level=int(params.get("violation_level", 2)))
    # general
    for key in ("outbound_file", "return_file", "probe_dim"):
        if key not in params:
            raise ScenarioError(f"general attack needs {key!r}")
    return attacks_mod.general_attack(
        attacks_mod.load_matrix_file(params["outbound_file"]),
        attacks_mod.load_matrix_file(params["return_file"]),
        probe_dim=int(params["probe_dim"]),
        n_max=config.channel_n_max())


_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _parse_bool(raw: str, where: str) -> bool:
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ScenarioError(f"{where}: expected a boolean, got {raw!r}")


def load_scenario(path: str) -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ScenarioError(f"cannot read scenario file {path!r}")

    known = {"scenario", "protocol", "source", "strengthening", "attack",
             "expectations"}
    for section in parser.sections():
        if section not in known:
            raise ScenarioError(f"{path}: unknown section [{section}]")

    def get(section: str, key: str, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    name = get("scenario", "name") or path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    cfg = ProtocolConfig()
    try:
        if get("scenario", "seed") is not None:
            cfg.rng_seed = int(get("scenario", "seed"))
        sec = "protocol"
        if parser.has_section(sec):
            for key in parser.options(sec):
                raw = parser.get(sec, key).strip()
                if key == "variant":
                    cfg.variant = raw
                elif key == "rounds":
                    cfg.rounds = int(raw)
                elif key == "transmission":
                    cfg.transmission = float(raw)
                elif key == "detector_model":
                    cfg.detector_model = raw
                elif key == "residual_policy":
                    cfg.residual_policy = raw
                elif key == "test_fraction":
                    cfg.test_fraction = float(raw)
                elif key == "n_max":
                    cfg.n_max = int(raw)
                elif key == "b92_overlap":
                    cfg.b92_overlap = float(raw)
                else:
                    raise ScenarioError(f"{path}: unknown key {key!r} in "
                                        f"[protocol]")
        if parser.has_section("source"):
            p0 = float(get("source", "p0", "0"))
            p1 = float(get("source", "p1", "1"))
            p2 = float(get("source", "p2", "0"))
            cfg.source_stats = (p0, p1, p2)
        sec = "strengthening"
        if parser.has_section(sec):
            for key in parser.options(sec):
                raw = parser.get(sec, key).strip()
                where = f"{path}: [{sec}] {key}"
                if key == "counters":
                    if _parse_bool(raw, where):
                        cfg.detector_model = COUNTER
                elif key == "cross_basis_tests":
                    cfg.cross_basis_tests = _parse_bool(raw, where)
                elif key == "cross_basis_fraction":
                    cfg.cross_basis_fraction = float(raw)
                elif key == "extra_bob_states":
                    cfg.extra_bob_states = _parse_bool(raw, where)
                elif key == "extra_state_fraction":
                    cfg.extra_state_fraction = float(raw)
                else:
                    raise ScenarioError(f"{where}: unknown key")
    except ValueError as exc:
        if isinstance(exc, (ScenarioError, ConfigError)):
            raise
        raise ScenarioError(f"{path}: {exc}") from exc

    attack_name = get("attack", "name", "identity")
    attack_params = {}
    if parser.has_section("attack"):
        attack_params = {k: parser.get("attack", k).strip()
                         for k in parser.options("attack") if k != "name"}

    expectations: List[Expectation] = []
    if parser.has_section("expectations"):
        for metric in parser.options("expectations"):
            raw = parser.get("expectations", metric).strip()
            parts = raw.split()
            if len(parts) != 3 or parts[1] not in ("abs", "sigma"):
                raise ScenarioError(
                    f"{path}: [expectations] {metric} must read "
                    f"'<analytic> abs|sigma <value>', got {raw!r}")
            try:
                expectations.append(Expectation(
                    metric=metric, analytic=float(parts[0]),
                    mode=parts[1], value=float(parts[2])))
            except ValueError as exc:
                raise ScenarioError(f"{path}: [expectations] {metric}: {exc}")

    try:
        cfg.validate()
    except ConfigError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return Scenario(name=name, config=cfg, attack_name=attack_name,
                    attack_params=attack_params, expectations=expectations)
