import math

import numpy as np
import pytest

from sqkdsim import analysis
from sqkdsim.attacks import (
    AttackDomainError,
    IsometryError,
    ProbeChannelMap,
    constrained_random_attack,
    general_attack,
    identity_attack,
    load_matrix_file,
    pns_attack,
    tagging_attack,
    usd_attack_b92,
)
from sqkdsim.fock import X, Z, make_basis_state
from sqkdsim.joint import ChannelBasis, JointState

SQRT2 = math.sqrt(2.0)


def probe_state(index, channel_occ, basis, n_max, probe_dim):
    return JointState.from_product(
        index, make_basis_state(channel_occ, basis, n_max), probe_dim)


class TestIdentity:
    def test_leaves_states_alone(self):
        spec = identity_attack()
        j = probe_state(0, (0, 1), X, 2, 1)
        assert spec.apply_outbound(j) is j
        assert spec.apply_return(j) is j
        assert spec.validate() == 0.0


class TestSplitting:
    def test_two_photons_mode_zero(self):
        spec = pns_attack(n_max=2)
        out = spec.apply_outbound(probe_state(0, (0, 2), Z, 2, 3))
        assert dict(out.items()) == {(1, (0, 0), (0, 1)): pytest.approx(1.0)}

    def test_two_photons_mode_one(self):
        spec = pns_attack(n_max=2)
        out = spec.apply_outbound(probe_state(0, (2, 0), Z, 2, 3))
        assert dict(out.items()) == {(2, (0, 0), (1, 0)): pytest.approx(1.0)}

    def test_one_photon_each_mode(self):
        spec = pns_attack(n_max=2)
        out = spec.apply_outbound(probe_state(0, (1, 1), Z, 2, 3))
        got = dict(out.items())
        assert got[(2, (0, 0), (0, 1))] == pytest.approx(1 / SQRT2)
        assert got[(1, (0, 0), (1, 0))] == pytest.approx(1 / SQRT2)

    def test_other_pulse_sizes_untouched(self):
        spec = pns_attack(n_max=3)
        j = probe_state(0, (0, 3), Z, 3, 3)
        assert dict(spec.apply_outbound(j).items()) == dict(j.items())

    @pytest.mark.parametrize("occ_in,keep,out_occ", [((0, 2), 1, (0, 1)),
                                                     ((2, 0), 2, (1, 0))])
    def test_split_in_rotated_basis(self, occ_in, keep, out_occ):
        # splitting two plus (minus) photons keeps one plus (minus) photon on
        # each side; the probe's own two modes rotate just like the channel
        spec = pns_attack(n_max=2)
        out = spec.apply_outbound(probe_state(0, occ_in, X, 2, 3))
        sign = -1.0 if keep == 2 else 1.0
        expected = {}
        for e, pamp in ((1, 1 / SQRT2), (2, sign / SQRT2)):
            for occ, camp in (((0, 1), 1 / SQRT2), ((1, 0), sign / SQRT2)):
                expected[(e, (0, 0), occ)] = pamp * camp
        got = dict(out.items())
        assert set(got) == set(expected)
        for key, amp in expected.items():
            assert got[key] == pytest.approx(amp, abs=1e-12)

    def test_requires_two_photon_cap(self):
        with pytest.raises(ValueError):
            pns_attack(n_max=1)


class TestTagging:
    def test_outbound_replaces_pulse(self):
        spec = tagging_attack()
        out = spec.apply_outbound(probe_state(0, (0, 1), X, 2, spec.probe_dim))
        # the pulse is swapped into Eve's register; the channel carries the tag
        assert out.occupation_distribution(Z) == {
            (0, 2): pytest.approx(0.5), (2, 0): pytest.approx(0.5)}
        got = dict(out.items())
        assert got[(0, (0, 0), (0, 2))] == pytest.approx(0.5)
        assert got[(1, (0, 0), (2, 0))] == pytest.approx(0.5)

    def test_outbound_accepts_other_source_states(self):
        spec = tagging_attack()
        for occ in ((0, 1), (1, 0), (0, 0)):
            out = spec.apply_outbound(probe_state(0, occ, Z, 2, spec.probe_dim))
            assert out.occupation_distribution(Z) == {
                (0, 2): pytest.approx(0.5), (2, 0): pytest.approx(0.5)}

    def test_return_restores_plus(self):
        spec = tagging_attack()
        out = spec.apply_outbound(probe_state(0, (0, 1), X, 2, spec.probe_dim))
        back = spec.apply_return(out)
        assert back.bob_distribution(X) == {(0, 1): pytest.approx(1.0)}

    def test_return_domain_excludes_single_photons(self):
        spec = tagging_attack()
        with pytest.raises(AttackDomainError):
            spec.apply_return(probe_state(0, (0, 1), Z, 2, spec.probe_dim))

    def test_count_strategy_decodes(self):
        strat = tagging_attack().strategy
        assert strat.action(2) == ("ctrl", "apply_map")
        assert strat.action(1) == ("sift", "measure_resend")
        assert strat.action(0) == ("sift", "measure_resend")


class TestGeneral:
    def test_identity_matrices_accepted(self):
        dim = 2 * ChannelBasis(2).dim
        eye = np.eye(dim)
        spec = general_attack(eye, eye, probe_dim=2, n_max=2)
        j = probe_state(1, (0, 1), Z, 2, 2)
        assert dict(spec.apply_outbound(j).items()) == dict(j.items())

    def test_random_unitary_accepted(self):
        rng = np.random.default_rng(8)
        dim = 1 * ChannelBasis(2).dim
        m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        q, _ = np.linalg.qr(m)
        spec = general_attack(q, np.eye(dim), probe_dim=1, n_max=2)
        assert spec.validate() < 1e-10

    def test_non_isometry_rejected_with_deviation(self):
        dim = ChannelBasis(2).dim
        bad = np.eye(dim) * 0.5
        with pytest.raises(IsometryError, match="deviation"):
            general_attack(bad, np.eye(dim), probe_dim=1, n_max=2)

    def test_pns_matches_dense_form_on_two_photon_keys(self):
        channel = ChannelBasis(2)
        spec = pns_attack(n_max=2)
        dim = 3 * channel.dim
        dense = np.zeros((dim, dim), dtype=complex)
        for dom, img in spec.outbound.columns:
            (e_in, occ_in), = dom.keys()
            j = e_in * channel.dim + channel.index[occ_in]
            for (e_out, occ_out), amp in img.items():
                dense[e_out * channel.dim + channel.index[occ_out], j] += amp
        rebuilt = ProbeChannelMap.from_dense(dense, 3, channel)
        for occ in [(0, 2), (2, 0), (1, 1)]:
            j = probe_state(0, occ, Z, 2, 3)
            a = dict(spec.apply_outbound(j).items())
            b = dict(rebuilt.apply(j).items())
            assert set(a) == set(b)
            for key in a:
                assert a[key] == pytest.approx(b[key], abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            general_attack(np.eye(3), np.eye(3), probe_dim=2, n_max=2)


class TestConstrainedRandom:
    @pytest.mark.parametrize("probe_dim", [1, 2, 3, 4])
    def test_meets_every_rule(self, probe_dim):
        spec = constrained_random_attack(101 + probe_dim, probe_dim, n_max=3)
        report = analysis.check_constraints(spec, n_max=3)
        assert report.alice_11_prob <= 1e-10
        assert report.bob_minus_click_prob <= 1e-10
        assert report.bit_probe_distance <= 1e-10
        assert all(v <= 1e-10 for v in report.multiphoton_return_norms.values())
        assert report.is_undetectable()

    def test_single_photon_violation_is_visible(self):
        spec = constrained_random_attack(7, 4, n_max=3,
                                         violation="single-photon-mismatch")
        report = analysis.check_constraints(spec, n_max=3)
        assert report.bob_minus_click_prob > 1e-10
        assert report.bob_minus_click_prob == pytest.approx(
            report.bit_probe_distance ** 2 / 2, abs=1e-12)

    @pytest.mark.parametrize("level", [2, 3])
    def test_multiphoton_violation_is_visible(self, level):
        spec = constrained_random_attack(9, 3, n_max=3,
                                         violation="multi-photon-return",
                                         violation_level=level)
        report = analysis.check_constraints(spec, n_max=3)
        assert report.bob_minus_click_prob > 1e-10
        assert report.multiphoton_return_norms[level] > 1e-10

    def test_rejects_bad_violation(self):
        with pytest.raises(ValueError):
            constrained_random_attack(1, 4, n_max=3, violation="nope")
        with pytest.raises(ValueError):
            constrained_random_attack(1, 4, n_max=3,
                                      violation="multi-photon-return",
                                      violation_level=7)


class TestUsd:
    def test_stores_overlap(self):
        spec = usd_attack_b92(0.5)
        assert spec.strategy.overlap == 0.5
        assert spec.lossless_channel

    def test_rejects_bad_overlap(self):
        with pytest.raises(ValueError):
            usd_attack_b92(1.0)


class TestMatrixFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        path = tmp_path / "m.txt"
        rows = ["# test matrix"]
        for row in m:
            rows.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
        path.write_text("\n".join(rows), encoding="utf-8")
        back = load_matrix_file(str(path))
        assert np.allclose(back, m, atol=1e-15)

    def test_rejects_non_square(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 2 0 3 0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="square"):
            load_matrix_file(str(path))
