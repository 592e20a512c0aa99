import math
import warnings

import numpy as np
import pytest
from hypothesis import given

from cvqpon import gaussian as gs
from cvqpon import network as nw
from cvqpon.network import DetectorParams, LinkParams, NetworkParams, NetworkParamsError, SourceParams

from .oracles import entanglement_picture_user_moments
from .strategies import networks, random_network


def broadcast_view(params):
    state = nw.build_broadcast_state(params)
    return gs.reorder(state, [gs.alice("x"), gs.alice("p")] + [gs.user(l) for l in range(params.n_users)])


class TestParams:
    def test_symmetric_totals(self):
        p = NetworkParams.symmetric(4, 4.0, 0.5, 0.01, 0.86, 0.02)
        assert np.allclose(p.eta, 0.125)
        assert np.allclose(p.eps, 0.01)
        assert p.is_symmetric()
        assert p.resolved_topology == "tree"

    def test_non_power_of_two_is_sequential(self):
        assert NetworkParams.symmetric(3, 4.0, 0.5, 0.0, 0.9, 0.0).resolved_topology == "sequential"

    def test_from_user_totals_round_trip(self):
        p = NetworkParams.from_user_totals(3, 1.26, [0.03, 0.04, 0.05], [0.001, 0.002, 0.0], 0.685, 0.05)
        assert np.allclose(p.eta, [0.03, 0.04, 0.05])
        assert np.allclose(p.eps, [0.001, 0.002, 0.0])
        assert not p.is_symmetric()

    def test_feeder_noise_reaches_users_scaled(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = NetworkParams(SourceParams(2.0), LinkParams(0.5, 0.02, (0.8, 0.6), (0.01, 0.0)),
                              DetectorParams((0.9, 0.9), (0.0, 0.0)))
        assert np.allclose(p.eps, [0.02 * 0.8 * 0.5 + 0.01, 0.02 * 0.6 * 0.5])
        assert np.allclose(p.eta, [0.5 * 0.8 * 0.5, 0.5 * 0.6 * 0.5])

    def test_feeder_noise_warns(self):
        with pytest.warns(UserWarning):
            NetworkParams(SourceParams(2.0), LinkParams(0.5, 0.02, (0.8,), (0.0,)), DetectorParams((0.9,), (0.0,)))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(eta_a=0.0, eps_a=0.0, eta_b=(0.5,), eps_b=(0.0,)),
            dict(eta_a=1.0, eps_a=0.0, eta_b=(1.5,), eps_b=(0.0,)),
            dict(eta_a=1.0, eps_a=0.0, eta_b=(0.5,), eps_b=(-0.1,)),
            dict(eta_a=1.0, eps_a=0.0, eta_b=(1.0,), eps_b=(0.1,)),
            dict(eta_a=1.0, eps_a=0.0, eta_b=(0.5, 0.5), eps_b=(0.0, 0.0), split=(0.7, 0.7)),
            dict(eta_a=1.0, eps_a=0.0, eta_b=(), eps_b=()),
        ],
    )
    def test_invalid_links(self, kwargs):
        with pytest.raises(NetworkParamsError):
            LinkParams(**kwargs)

    def test_invalid_detector(self):
        with pytest.raises(NetworkParamsError):
            DetectorParams((0.0,), (0.0,))
        with pytest.raises(NetworkParamsError):
            DetectorParams((0.5,), (-0.1,))

    def test_detector_count_mismatch(self):
        with pytest.raises(NetworkParamsError):
            NetworkParams(SourceParams(1.0), LinkParams(1.0, 0.0, (0.5, 0.5), (0, 0)), DetectorParams((0.9,), (0.0,)))

    def test_negative_modulation(self):
        with pytest.raises(NetworkParamsError):
            SourceParams(-1.0)

    def test_tree_needs_equal_split(self):
        with pytest.raises(NetworkParamsError):
            NetworkParams(SourceParams(1.0), LinkParams(1.0, 0.0, (0.5, 0.5), (0, 0), (0.3, 0.7)),
                          DetectorParams((0.9, 0.9), (0, 0)), "tree")

    def test_with_user_replaces_totals(self):
        p = NetworkParams.symmetric(4, 4.0, 0.5, 0.01, 0.86, 0.02).with_user(2, eta=0.05, eps=0.03)
        assert p.eta[2] == pytest.approx(0.05)
        assert p.eps[2] == pytest.approx(0.03)
        assert p.eta[1] == pytest.approx(0.125)


class TestSplitterSigns:
    def test_sequential_alternates(self):
        p = NetworkParams.symmetric(4, 1.0, 0.5, 0.0, 0.9, 0.0, "sequential")
        assert list(nw.splitter_signs(p)) == [1, -1, 1, -1]

    def test_tree_four(self):
        p = NetworkParams.symmetric(4, 1.0, 0.5, 0.0, 0.9, 0.0, "tree")
        assert list(nw.splitter_signs(p)) == [1, -1, -1, 1]

    def test_single_user(self):
        assert list(nw.splitter_signs(NetworkParams.symmetric(1, 1.0, 0.5, 0.0, 0.9, 0.0))) == [1]


class TestAssembly:
    def test_signal_stage_alice_blocks(self):
        s = nw.build_signal_stage(SourceParams(3.0))
        v = 4.0
        assert np.allclose(s.block(gs.alice("x")), (v + 1) / 2 * np.eye(2))
        assert np.allclose(s.block(gs.alice("x"), gs.alice("p")), (v - 1) / 2 * np.eye(2))

    def test_two_user_example(self):
        # V = 4, two users at eta = 0.5 each after the split, no noise.
        p = NetworkParams(SourceParams(3.0), LinkParams(1.0, 0.0, (1.0, 1.0), (0.0, 0.0)),
                          DetectorParams((1.0, 1.0), (0.0, 0.0)))
        g = broadcast_view(p).matrix
        assert np.allclose(g[0:2, 0:2], 2.5 * np.eye(2))
        assert np.allclose(g[0:2, 2:4], 1.5 * np.eye(2))
        assert np.allclose(g[4:6, 4:6], 2.5 * np.eye(2))
        assert np.allclose(np.abs(g[4:6, 6:8]), 1.5 * np.eye(2))

    @given(networks())
    def test_closed_form_broadcast(self, p):
        assert np.allclose(broadcast_view(p).matrix, nw.closed_form_broadcast(p), atol=1e-10, rtol=0)

    @given(networks())
    def test_closed_form_user_blocks(self, p):
        full = nw.assemble(p)
        for l in range(p.n_users):
            labs = [gs.user(l, "x"), gs.detector(l, "x"), gs.purifier(l, "x")]
            got = gs.restrict(full, labs).matrix
            assert np.allclose(got, nw.closed_form_user_block(p, l), atol=1e-10, rtol=0)

    @given(networks())
    def test_arm_variance_and_cross_terms(self, p):
        full = nw.assemble(p)
        for i in range(p.n_users):
            vb = full.block(gs.user(i, "x"))[0, 0]
            assert vb == pytest.approx(nw.user_arm_variance(p, i), abs=1e-10)
            var, cov = entanglement_picture_user_moments(p.v_mod, p.eta[i], p.eps[i], p.tau[i], p.nu[i])
            assert vb == pytest.approx(var, abs=1e-10)
            alice_cov = full.block(gs.alice("x"), gs.user(i, "x"))[0, 0]
            assert abs(alice_cov) == pytest.approx(cov, abs=1e-10)
            for j in range(p.n_users):
                if i != j:
                    c = full.block(gs.user(i, "x"), gs.user(j, "x"))[0, 0]
                    assert c == pytest.approx(nw.cross_user_correlation(p, i, j), abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_feeder_noise_closed_form(self, seed):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = random_network(np.random.default_rng(seed), 1, 5, feeder=True)
            assert np.allclose(broadcast_view(p).matrix, nw.closed_form_broadcast(p), atol=1e-10, rtol=0)

    @pytest.mark.parametrize("seed", range(10))
    def test_purification_is_pure(self, seed):
        p = random_network(np.random.default_rng(100 + seed), 1, 5)
        state = nw.build_broadcast_state(p, keep_eve=True)
        assert gs.von_neumann_entropy(state) < 1e-8

    def test_lossless_network_is_pure(self):
        p = NetworkParams(SourceParams(10.0), LinkParams(1.0, 0.0, (1.0,) * 4, (0.0,) * 4),
                          DetectorParams((1.0,) * 4, (0.0,) * 4))
        assert gs.von_neumann_entropy(nw.build_broadcast_state(p)) < 1e-8

    def test_mode_count(self):
        p = NetworkParams.symmetric(3, 1.0, 0.5, 0.01, 0.9, 0.05)
        assert nw.assemble(p).n_modes == 2 + 6 * 3

    def test_cross_correlation_index_errors(self):
        p = NetworkParams.symmetric(2, 1.0, 0.5, 0.0, 0.9, 0.0)
        with pytest.raises(IndexError):
            nw.cross_user_correlation(p, 0, 5)
        with pytest.raises(ValueError):
            nw.cross_user_correlation(p, 1, 1)

    def test_sign_cannot_be_uniform_for_three_users(self):
        # Three real amplitudes with pairwise products all negative do not exist.
        p = NetworkParams.symmetric(3, 4.0, 0.9, 0.0, 1.0, 0.0)
        c = [nw.cross_user_correlation(p, i, j) for i, j in ((0, 1), (0, 2), (1, 2))]
        assert not all(x < 0 for x in c)
        assert math.prod(np.sign(c)) > 0
