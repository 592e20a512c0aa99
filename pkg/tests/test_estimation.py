import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqpon import estimation as est
from cvqpon import keyrate as kr
from cvqpon import network as nw
from cvqpon.network import NetworkParams

from .oracles import prepare_measure_moments


@pytest.fixture(scope="module")
def net():
    return NetworkParams.from_user_totals(3, 1.26, [0.037, 0.042, 0.046], [0.0012, 0.0023, 0.0013], 0.685, 0.052)


@pytest.fixture(scope="module")
def batch(net):
    return est.simulate_channel(net, 200_000, seed=7)


class TestSimulation:
    def test_shapes(self, batch, net):
        assert batch.meas_x.shape == (net.n_users, 200_000)
        assert batch.n_rounds == 200_000 and batch.n_users == 3

    def test_deterministic(self, net):
        a = est.simulate_channel(net, 5000, seed=3)
        b = est.simulate_channel(net, 5000, seed=3)
        assert np.array_equal(a.columns(), b.columns())
        c = est.simulate_channel(net, 5000, seed=4)
        assert not np.array_equal(a.columns(), c.columns())

    def test_user_stream_independent_of_user_count(self, net):
        # User l's noise stream depends only on (seed, l), not on how many users follow.
        two = NetworkParams.from_user_totals(2, 1.26, [0.037, 0.042], [0.0012, 0.0023], 0.685, 0.052)
        a = est.simulate_channel(net, 3000, seed=11)
        b = est.simulate_channel(two, 3000, seed=11)
        assert np.allclose(a.meas_x[:2], b.meas_x, rtol=1e-12, atol=0)

    def test_moments_match_closed_form(self, batch, net):
        cov = prepare_measure_moments(net.v_mod, net.eta, net.eps, net.tau, net.nu, nw.splitter_signs(net))
        m = batch.n_rounds
        for q in ("x", "p"):
            data = np.vstack([getattr(batch, f"alice_{q}"), getattr(batch, f"meas_{q}")])
            emp = data @ data.T / m
            se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / m)
            assert np.all(np.abs(emp - cov) < 5 * se)

    def test_arm_variance_matches_entanglement_picture(self, batch, net):
        for l in range(net.n_users):
            emp = float(np.var(batch.meas_x[l]))
            ref = nw.user_arm_variance(net, l)
            assert abs(emp - ref) < 5 * ref * math.sqrt(2 / batch.n_rounds)

    def test_rejects_bad_arrays(self):
        with pytest.raises(est.EstimationError):
            est.SampleBatch(np.zeros(3), np.zeros(2), np.zeros((1, 3)), np.zeros((1, 3)), 0)
        with pytest.raises(est.EstimationError):
            est.SampleBatch(np.array([np.nan]), np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1)), 0)


class TestSerialization:
    def test_csv_round_trip(self, net, tmp_path):
        b = est.simulate_channel(net, 1000, seed=5)
        b.to_csv(tmp_path / "s.csv")
        back = est.SampleBatch.from_csv(tmp_path / "s.csv")
        assert np.array_equal(back.columns(), b.columns())
        assert back.rng_seed == 5
        assert (tmp_path / "s.csv").read_text().splitlines()[1].startswith("# alice_x[SNU],alice_p[SNU],bob1_x[SNU]")

    def test_binary_round_trip(self, net, tmp_path):
        b = est.simulate_channel(net, 1000, seed=5)
        b.to_binary(tmp_path / "s.bin")
        assert (tmp_path / "s.bin").stat().st_size == 1000 * (2 + 2 * 3) * 8
        back = est.SampleBatch.from_binary(tmp_path / "s.bin", 3, 5)
        assert np.array_equal(back.columns(), b.columns())

    def test_column_count_checked(self):
        with pytest.raises(est.EstimationError):
            est.SampleBatch.from_columns(np.zeros((10, 5)))


class TestEstimation:
    def test_recovers_truth(self, batch, net):
        for l in range(net.n_users):
            e = est.estimate_parameters((batch.alice_x, batch.alice_p), (batch.meas_x[l], batch.meas_p[l]),
                                        net.tau[l], net.nu[l])
            assert e.eta.contains(net.eta[l])
            assert e.eps.contains(net.eps[l])
            assert e.eta.point == pytest.approx(net.eta[l], rel=0.05)

    def test_coverage(self, net):
        hits = total = 0
        for seed in range(40):
            b = est.simulate_channel(net, 20_000, seed)
            for l in range(net.n_users):
                e = est.estimate_parameters(b.alice_x, b.meas_x[l], net.tau[l], net.nu[l], z=3.0)
                hits += e.eta.contains(net.eta[l]) + e.eps.contains(net.eps[l])
                total += 2
        assert hits / total > 0.98

    def test_interval_shrinks_with_m(self, net):
        widths = []
        for m in (10_000, 160_000):
            b = est.simulate_channel(net, m, 1)
            widths.append(est.estimate_parameters(b.alice_x, b.meas_x[0], net.tau[0], net.nu[0]).eps.width)
        assert widths[1] == pytest.approx(widths[0] / 4, rel=0.1)

    def test_delta_sets_z(self, batch, net):
        e = est.estimate_parameters(batch.alice_x, batch.meas_x[0], net.tau[0], net.nu[0], delta=1e-10)
        assert e.eps.z == pytest.approx(6.47, abs=0.01)
        assert est.z_from_delta(1e-10) == pytest.approx(6.4673, abs=1e-3)

    def test_too_few_samples(self, net):
        b = est.simulate_channel(net, 999, 0)
        with pytest.raises(est.EstimationError):
            est.estimate_parameters(b.alice_x, b.meas_x[0], net.tau[0], net.nu[0])

    def test_noise_free_channel(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(5000)
        e = est.estimate_parameters(a, 0.3 * a + rng.standard_normal(5000), 1.0, 0.0)
        assert e.eta.point == pytest.approx(0.18, rel=0.1)
        assert abs(e.eps.point) < 5 * e.eps.width


class TestCorrelations:
    @given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=25)
    def test_inferred_noise_orthogonal_to_alice(self, g, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(2000)
        xi = est.infer_noise(g * a + rng.standard_normal(2000) + 0.3, a)
        ac = a - a.mean()
        assert abs(np.dot(ac, xi)) / len(a) < 1e-12

    def test_scaling_factor(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal(100_000)
        assert est.scaling_factor(0.7 * a + 0.1 * rng.standard_normal(100_000), a) == pytest.approx(0.7, abs=1e-3)

    def test_mi_saturates(self):
        x = np.arange(2000, dtype=float)
        assert est.empirical_mi(x, 2 * x) == math.inf

    def test_mi_independent_small(self):
        rng = np.random.default_rng(2)
        assert est.empirical_mi(rng.standard_normal(100_000), rng.standard_normal(100_000)) < 1e-3

    def test_mi_needs_samples(self):
        with pytest.raises(est.EstimationError):
            est.empirical_mi(np.ones(10), np.ones(10))

    def test_correlation_analysis_hierarchy(self, batch):
        ca = est.correlation_analysis(batch, 0)
        users = ca.mi_users[1:]
        noises = ca.mi_noises[1:]
        assert np.all(ca.mi_alice > 10 * users)
        assert np.all(users > 3 * noises)
        assert np.isnan(ca.mi_users[0])

    def test_mi_matches_model(self, batch, net):
        ca = est.correlation_analysis(batch, 0)
        expected = kr.mutual_information_users(net, 0, 1)
        assert ca.mi_users[1] == pytest.approx(expected, rel=0.25)


class TestWorstCase:
    def test_interval_ordering(self, batch, net):
        e = est.estimate_parameters((batch.alice_x, batch.alice_p), (batch.meas_x[0], batch.meas_p[0]),
                                    net.tau[0], net.nu[0])
        ki = est.worst_case_key(net, e, 0, 0.95)
        assert ki.key_low <= ki.key_point <= ki.key_high

    def test_point_equals_direct(self, batch, net):
        e = est.estimate_parameters((batch.alice_x, batch.alice_p), (batch.meas_x[1], batch.meas_p[1]),
                                    net.tau[1], net.nu[1])
        ki = est.worst_case_key(net, e, 1, 0.95)
        direct = kr.key_rate(net.with_user(1, eta=e.eta.point, eps=max(e.eps.point, 0.0)), 1, beta=0.95)
        assert ki.key_point == pytest.approx(direct)
