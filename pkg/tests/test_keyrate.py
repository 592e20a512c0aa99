import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvqpon import keyrate as kr
from cvqpon import network as nw
from cvqpon.network import DetectorParams, LinkParams, NetworkParams, SourceParams

from .oracles import plain_gaussian_mi, ptp_heterodyne_key
from .strategies import networks, random_network, symmetric_networks


def ideal_ptp(eta, v_mod):
    return NetworkParams.from_user_totals(1, v_mod, eta, 0.0, 1.0, 0.0)


def permuted(p: NetworkParams, perm):
    lk, det = p.link, p.detectors
    pick = lambda t: tuple(t[i] for i in perm)
    split = None if lk.split is None else pick(lk.split)
    return NetworkParams(p.source, LinkParams(lk.eta_a, lk.eps_a, pick(lk.eta_b), pick(lk.eps_b), split),
                         DetectorParams(pick(det.tau), pick(det.nu)), "sequential")


class TestPartition:
    def test_reference_not_trusted(self):
        with pytest.raises(ValueError):
            kr.TrustPartition(1, frozenset({1}))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            kr.TrustPartition(0, frozenset({5})).validate(3)

    def test_all_trusted_flag(self):
        assert kr.TrustPartition(0, frozenset({1, 2})).is_all_trusted(3)
        assert not kr.TrustPartition(0, frozenset({1})).is_all_trusted(3)


class TestInformation:
    def test_snr_formula(self):
        p = NetworkParams.from_user_totals(1, 4.0, 0.2, 0.01, 0.8, 0.05)
        assert kr.snr(p, 0) == pytest.approx(0.2 * 0.4 * 4.0 / (1 + 0.05 + 0.4 * 0.01))

    def test_i_ab_two_arms(self):
        p = NetworkParams.from_user_totals(1, 4.0, 0.2, 0.01, 0.8, 0.05)
        assert kr.mutual_information_ab(p, 0) == pytest.approx(2 * kr.mutual_information_ab(p, 0, True))

    def test_i_ab_matches_gaussian_channel(self):
        p = NetworkParams.from_user_totals(1, 4.0, 0.2, 0.01, 0.8, 0.05)
        gain = math.sqrt(0.2 * 0.8 / 2)
        expected = plain_gaussian_mi(4.0, nw.user_arm_variance(p, 0), gain * 4.0)
        assert kr.mutual_information_ab(p, 0, True) == pytest.approx(expected, rel=1e-12)

    def test_user_information_symmetric(self):
        p = NetworkParams.from_user_totals(3, 2.0, [0.1, 0.2, 0.3], [0.01, 0.0, 0.02], 0.8, 0.05)
        assert kr.mutual_information_users(p, 0, 2) == pytest.approx(kr.mutual_information_users(p, 2, 0))
        assert kr.mutual_information_users(p, 0, 1) > 0


class TestKeyRate:
    @pytest.mark.parametrize("eta", [0.01, 0.1, 0.5, 0.9])
    @pytest.mark.parametrize("v_mod", [0.5, 4.0, 50.0])
    def test_single_user_matches_textbook(self, eta, v_mod):
        key = kr.key_rate(ideal_ptp(eta, v_mod), 0)
        assert key == pytest.approx(float(ptp_heterodyne_key(eta, v_mod)), abs=1e-8)

    def test_zero_beta_gives_zero(self):
        assert kr.key_rate(ideal_ptp(0.5, 4.0), 0, beta=0.0) == 0.0

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            kr.key_rate(ideal_ptp(0.5, 4.0), 0, beta=1.5)

    def test_partition_mismatch(self):
        p = NetworkParams.symmetric(2, 4.0, 0.5, 0.0, 0.9, 0.0)
        with pytest.raises(ValueError):
            kr.key_rate(p, 0, kr.TrustPartition(1))

    def test_high_noise_gives_zero_key(self):
        p = NetworkParams.from_user_totals(1, 4.0, 0.05, 0.5, 0.8, 0.05)
        assert kr.key_rate(p, 0, beta=0.9) == 0.0

    def test_vacuum_modulation_has_no_key(self):
        p = NetworkParams.from_user_totals(2, 0.0, 0.3, 0.0, 0.8, 0.0)
        assert kr.key_rate(p, 0) == 0.0

    @given(networks(n_min=2, n_max=4), st.data())
    def test_holevo_monotone_in_trust(self, p, data):
        state = nw.assemble(p)
        l = data.draw(st.integers(0, p.n_users - 1))
        others = [u for u in range(p.n_users) if u != l]
        order = data.draw(st.permutations(others))
        chis = [kr.holevo_bound(state, kr.TrustPartition(l, frozenset(order[:k]))) for k in range(len(order) + 1)]
        assert all(c >= 0 for c in chis)
        assert all(b <= a + 1e-9 for a, b in zip(chis, chis[1:]))

    @given(networks(n_min=1, n_max=3), st.floats(0.0, 0.2))
    def test_electronic_noise_trust(self, p, extra):
        # Adding trusted electronic noise cannot help Eve.
        state = nw.assemble(p)
        noisy = NetworkParams(p.source, p.link, DetectorParams(p.detectors.tau, tuple(v + extra for v in p.detectors.nu)),
                              p.topology)
        for l in range(p.n_users):
            part = kr.TrustPartition(l)
            assert kr.holevo_bound(nw.assemble(noisy), part) <= kr.holevo_bound(state, part) + 1e-9

    @given(networks(n_min=2, n_max=4), st.data())
    def test_relabel_invariance(self, p, data):
        perm = data.draw(st.permutations(range(p.n_users)))
        q = permuted(p, perm)
        # Sign patterns differ between splitter realizations; the keys do not.
        base = [kr.key_rate(p, l) for l in range(p.n_users)]
        moved = [kr.key_rate(q, k) for k in range(q.n_users)]
        assert np.allclose(moved, [base[i] for i in perm], atol=1e-9)

    @given(symmetric_networks(n_min=2))
    def test_symmetric_untrusted_keys_equal(self, p):
        keys = [kr.key_rate(p, l) for l in range(p.n_users)]
        assert np.allclose(keys, keys[0], atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_evaluate_matches_key_rate(self, seed):
        p = random_network(np.random.default_rng(seed), 2, 4)
        parts = [kr.TrustPartition(l) for l in range(p.n_users)]
        rep = kr.evaluate(p, parts, 0.95, with_user_information=True)
        for rec in rep.users:
            assert rec.key_per_symbol == pytest.approx(kr.key_rate(p, rec.user, beta=0.95))
        assert rep.i_users.shape == (p.n_users, p.n_users)
        assert rep.total_per_symbol == pytest.approx(sum(r.key_per_symbol for r in rep.users))

    def test_all_trusted_is_flagged_unsafe(self):
        p = NetworkParams.symmetric(2, 4.0, 0.5, 0.0, 0.9, 0.0)
        rep = kr.evaluate(p, [kr.TrustPartition(0, frozenset({1}))], 1.0)
        assert rep.users[0].unsafe
