import math

import numpy as np
import pytest

from sqkdsim.fock import TruncationError, X, Z, make_basis_state, parity_state
from sqkdsim.joint import (
    COUNTER,
    ChannelBasis,
    JointState,
    THRESHOLD,
    code_pattern,
    detector_pattern,
    pattern_code,
)

SQRT2 = math.sqrt(2.0)


def plus_with_probe(n_max=2, probe_dim=1):
    return JointState.from_product(0, make_basis_state((0, 1), X, n_max), probe_dim)


class TestChannelBasis:
    def test_dimension(self):
        assert ChannelBasis(2).dim == 6
        assert ChannelBasis(6).dim == 28

    def test_hadamard_is_symmetric_orthogonal_involution(self):
        h = ChannelBasis(5).hadamard
        assert np.allclose(h, h.T, atol=1e-12)
        assert np.allclose(h @ h, np.eye(h.shape[0]), atol=1e-12)

    def test_pattern_codes_roundtrip(self):
        for code in range(9):
            assert pattern_code(code_pattern(code)) == code
        assert detector_pattern((3, 0), THRESHOLD) == (1, 0)
        assert detector_pattern((3, 1), COUNTER) == (2, 1)


class TestSiftTransform:
    def test_plus_pulse_branches(self):
        sifted = plus_with_probe().apply_sift()
        branches = {pat: (p, resid) for pat, p, resid in sifted.alice_branches()}
        assert set(branches) == {(0, 1), (1, 0)}
        p, resid = branches[(0, 1)]
        assert p == pytest.approx(0.5)
        assert dict(resid.items()) == {(0, (0, 1), (0, 1)): pytest.approx(1.0)}

    def test_vacuum_untouched(self):
        j = JointState.from_product(0, make_basis_state((0, 0), Z, 2), 1)
        branches = j.apply_sift().alice_branches()
        assert len(branches) == 1
        pat, p, resid = branches[0]
        assert pat == (0, 0) and p == pytest.approx(1.0)
        assert dict(resid.items()) == {(0, (0, 0), (0, 0)): pytest.approx(1.0)}

    def test_parity_pulse_keeps_both_photons(self):
        j = JointState.from_product(0, parity_state(2, "even", Z, 2), 1)
        branches = {pat: (p, resid) for pat, p, resid in
                    j.apply_sift().alice_branches()}
        assert branches[(0, 1)][0] == pytest.approx(0.5)
        # the reflected residual still carries two photons
        resid = branches[(0, 1)][1]
        assert list(k[2] for k, _ in resid.items()) == [(0, 2)]

    def test_two_plus_photons_fire_both_detectors(self):
        j = JointState.from_product(0, make_basis_state((0, 2), X, 2), 1)
        branches = {pat: p for pat, p, _ in j.apply_sift().alice_branches()}
        assert branches[(1, 1)] == pytest.approx(0.5)

    def test_requires_idle_probe(self):
        sifted = plus_with_probe().apply_sift()
        with pytest.raises(ValueError):
            sifted.apply_sift()

    def test_branch_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            amps = {}
            for e in range(2):
                for occ in [(0, 0), (0, 1), (1, 0), (1, 1), (0, 2)]:
                    amps[(e, (0, 0), occ)] = complex(rng.normal(), rng.normal())
            j = JointState(2, 2, amps)
            j = j.scaled(1 / j.norm())
            total = sum(p for _pat, p, _r in j.apply_sift().alice_branches())
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_reflection_preserves_photon_number_distribution(self):
        rng = np.random.default_rng(4)
        amps = {(0, (0, 0), occ): complex(rng.normal(), rng.normal())
                for occ in [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1)]}
        j = JointState(1, 2, amps)
        j = j.scaled(1 / j.norm())
        before = {}
        for occ, p in j.occupation_distribution(Z).items():
            before[occ[0] + occ[1]] = before.get(occ[0] + occ[1], 0.0) + p
        after = {}
        for _pat, p, resid in j.apply_sift().alice_branches():
            for occ, q in resid.occupation_distribution(Z).items():
                n = occ[0] + occ[1]
                after[n] = after.get(n, 0.0) + p * q
        for n in set(before) | set(after):
            assert after.get(n, 0.0) == pytest.approx(before.get(n, 0.0), abs=1e-10)


class TestCollapseAndCounting:
    def test_occupation_branches(self):
        j = JointState.from_product(0, parity_state(2, "even", Z, 2), 1)
        branches = {occ: p for occ, p, _vec in j.apply_sift().occupation_branches()}
        assert branches == {(0, 2): pytest.approx(0.5), (2, 0): pytest.approx(0.5)}

    def test_photon_count_branches(self):
        amps = {(0, (0, 0), (0, 0)): 0.6, (0, (0, 0), (0, 2)): 0.8}
        j = JointState(1, 2, amps)
        counts = {c: p for c, p, _s in j.photon_count_branches()}
        assert counts == {0: pytest.approx(0.36), 2: pytest.approx(0.64)}

    def test_probe_component(self):
        j = JointState(2, 2, {(0, (0, 0), (0, 1)): 0.6, (1, (0, 0), (0, 1)): 0.8j})
        vec = j.probe_component((0, 1))
        assert vec[0] == pytest.approx(0.6)
        assert vec[1] == pytest.approx(0.8j)

    def test_replace_channel(self):
        j = plus_with_probe()
        swapped = j.replace_channel(make_basis_state((0, 0), Z, 2))
        assert list(k[2] for k, _ in swapped.items()) == [(0, 0)]
        assert swapped.norm() == pytest.approx(1.0)


class TestBobDistributions:
    def test_mixed_key_is_illicit(self):
        j = JointState.from_product(0, make_basis_state((1, 1), Z, 2), 1)
        assert j.bob_distribution(Z) == {(1, 1): pytest.approx(1.0)}

    def test_parity_pulse_threshold_vs_counter(self):
        j = JointState.from_product(0, parity_state(2, "even", Z, 2), 1)
        thresh = j.bob_distribution(Z, THRESHOLD)
        assert thresh[(0, 1)] == pytest.approx(0.5)
        assert thresh[(1, 0)] == pytest.approx(0.5)
        counted = j.bob_distribution(Z, COUNTER)
        assert counted[(0, 2)] == pytest.approx(0.5)
        assert counted[(2, 0)] == pytest.approx(0.5)

    def test_parity_pulse_minus_mode_click(self):
        j = JointState.from_product(0, parity_state(2, "even", Z, 2), 1)
        xdist = j.bob_distribution(X)
        assert xdist[(1, 0)] == pytest.approx(0.5)   # both photons in minus
        assert xdist[(0, 1)] == pytest.approx(0.5)

    def test_plus_never_clicks_minus(self):
        xdist = plus_with_probe().bob_distribution(X)
        assert xdist == {(0, 1): pytest.approx(1.0)}


class TestLossChannel:
    def test_branches_form_a_distribution(self):
        j = JointState.from_product(0, make_basis_state((2, 1), Z, 3), 1)
        branches = j.channel_loss_branches(0.7)
        assert sum(p for _k, p, _s in branches) == pytest.approx(1.0, abs=1e-12)

    def test_single_photon_survival(self):
        j = plus_with_probe()
        branches = {k: p for k, p, _s in j.channel_loss_branches(0.25)}
        # the x pulse lives in the second mode of its own basis but the map
        # is applied over z keys; total survival must still be 0.25
        survival = 0.0
        for (_k1, _k0), p, state in j.channel_loss_branches(0.25):
            for occ, q in state.occupation_distribution(Z).items():
                if occ[0] + occ[1] == 1:
                    survival += p * q
        assert survival == pytest.approx(0.25, abs=1e-12)

    def test_full_transmission_is_identity(self):
        j = plus_with_probe()
        branches = j.channel_loss_branches(1.0)
        assert len(branches) == 1
        assert branches[0][1] == pytest.approx(1.0)

    def test_two_photon_binomial(self):
        j = JointState.from_product(0, make_basis_state((0, 2), Z, 2), 1)
        by_count = {}
        for _k, p, state in j.channel_loss_branches(0.8):
            for occ, q in state.occupation_distribution(Z).items():
                n = occ[0] + occ[1]
                by_count[n] = by_count.get(n, 0.0) + p * q
        assert by_count[2] == pytest.approx(0.64)
        assert by_count[1] == pytest.approx(2 * 0.8 * 0.2)
        assert by_count[0] == pytest.approx(0.04)

    def test_rejects_bad_survival(self):
        with pytest.raises(ValueError):
            plus_with_probe().channel_loss_branches(1.5)


class TestJointValidation:
    def test_cap_enforced(self):
        with pytest.raises(TruncationError):
            JointState(1, 1, {(0, (0, 0), (1, 1)): 1.0})

    def test_probe_range(self):
        with pytest.raises(ValueError):
            JointState(1, 2, {(2, (0, 0), (0, 1)): 1.0})
