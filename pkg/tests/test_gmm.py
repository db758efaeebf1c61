import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hctn.engine.tensor import Tensor
from hctn.exceptions import ShapeError
from hctn.model.gmm import (
    N_STATS, STAT_NAMES, GMMParams, combine, gdi, gdi_from_matrix, gmm_forward, greysheep_report,
    inject, label_greysheep, local_features, local_stats, scale_local_features,
)

from conftest import tensor_from_matrix


def _gdi_oracle(values, mask):
    """Discrepancy index written as explicit loops over users and services."""
    n, m = values.shape

    def profile(vals):
        vals = sorted(vals)
        mean = sum(vals) / len(vals) if vals else 0.0
        trimmed = sum(vals[1:-1]) / (len(vals) - 2) if len(vals) > 2 else mean
        std = (sum((v - mean) ** 2 for v in vals) / len(vals)) ** 0.5 if vals else 0.0
        return mean, trimmed, std

    users = [profile([values[i, j] for j in range(m) if mask[i, j]]) for i in range(n)]
    services = [profile([values[i, j] for i in range(n) if mask[i, j]]) for j in range(m)]

    def consistency(stats, active):
        stds = [stats[k][2] for k in range(len(stats)) if active[k]]
        lo, hi = (min(stds), max(stds)) if stds else (0.0, 0.0)
        out = []
        for k in range(len(stats)):
            if not active[k]:
                out.append(0.0)
            elif hi == lo:
                out.append(1.0)
            else:
                out.append(1.0 - (stats[k][2] - lo) / (hi - lo))
        return out

    u_active = [mask[i].any() for i in range(n)]
    s_active = [mask[:, j].any() for j in range(m)]
    u_weight = consistency(users, u_active)
    s_weight = consistency(services, s_active)

    gdi_u = []
    for i in range(n):
        terms = [abs(values[i, j] - users[i][0] - services[j][1]) * s_weight[j] for j in range(m) if mask[i, j]]
        gdi_u.append(sum(terms) / len(terms) if terms else 0.0)
    gdi_s = []
    for j in range(m):
        terms = [abs(values[i, j] - services[j][0] - users[i][1]) * u_weight[i] for i in range(n) if mask[i, j]]
        gdi_s.append(sum(terms) / len(terms) if terms else 0.0)
    return np.array(gdi_u), np.array(gdi_s)


class TestGdi:
    def test_identical_rows_score_equal(self):
        values = np.tile([1.0, 4.0, 2.0, 3.0], (4, 1))
        users, _ = gdi_from_matrix(values, np.ones_like(values))
        np.testing.assert_allclose(users, users[0])

    def test_deviating_user_scores_highest(self):
        values = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [9.0, 2.0, 3.0]])
        users, _ = gdi_from_matrix(values, np.ones_like(values))
        assert users[2] > users[0]
        assert users[0] == pytest.approx(users[1])
        np.testing.assert_allclose(users, [4 / 3, 4 / 3, 28 / 9])

    def test_two_user_services_stay_finite(self):
        values = np.array([[1.0, 5.0], [2.0, 0.5]])
        users, services = gdi_from_matrix(values, np.ones_like(values))
        assert np.all(np.isfinite(users)) and np.all(np.isfinite(services))

    def test_empty_profiles_score_zero(self):
        values = np.array([[1.0, 0.0], [0.0, 0.0]])
        mask = (values > 0).astype(float)
        users, services = gdi_from_matrix(values, mask)
        assert users[1] == 0.0 and services[1] == 0.0

    @pytest.mark.parametrize('seed', range(50))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        mask = (rng.random((6, 5)) < 0.7).astype(float)
        values = rng.uniform(0.1, 5.0, size=(6, 5)) * mask
        users, services = gdi_from_matrix(values, mask)
        oracle_users, oracle_services = _gdi_oracle(values, mask)
        np.testing.assert_allclose(users, oracle_users, atol=1e-12)
        np.testing.assert_allclose(services, oracle_services, atol=1e-12)

    def test_tensor_entry_point(self, small_tensor):
        users, services = gdi(small_tensor, 3)
        values, mask = small_tensor.slice_matrix(3)
        expected = gdi_from_matrix(values, mask)
        np.testing.assert_array_equal(users, expected[0])
        np.testing.assert_array_equal(services, expected[1])


class TestLabeling:
    def test_equal_scores_label_nobody(self):
        scores = np.full((1, 4), 0.7)
        active = np.ones((1, 4), dtype=bool)
        indicator, thresholds = label_greysheep(scores, scores, active, active)
        assert indicator.sum() == 0
        assert thresholds[0]['sigma_user'] == 0.0

    def test_higher_constant_labels_fewer(self, rng):
        scores = rng.random((3, 30))
        active = np.ones_like(scores, dtype=bool)
        counts = [label_greysheep(scores, scores, active, active, c, c)[0].sum() for c in (0.0, 0.5, 1.0, 2.0)]
        assert counts == sorted(counts, reverse=True)

    def test_inactive_entities_are_never_labeled(self):
        scores = np.array([[0.0, 0.1, 0.1, 5.0]])
        active = np.array([[True, True, True, False]])
        indicator, _ = label_greysheep(scores, scores, active, active, 0.0, 0.0)
        assert indicator[0, 3] == 0.0 and indicator[0, 7] == 0.0

    def test_report_layout(self, small_tensor):
        report = greysheep_report(small_tensor, [2, 3, 4, 5])
        assert report.indicator.shape == (4, 22)
        assert list(report.thresholds['time_step']) == [2, 3, 4, 5]
        frame = report.to_frame()
        assert list(frame.columns) == ['entity_kind', 'entity_id', 'time_step', 'gdi', 'labeled']
        assert len(frame) == 4 * 22
        assert frame['labeled'].sum() == int(report.indicator.sum())


class TestLocalStats:
    def test_reference_values(self):
        out = dict(zip(STAT_NAMES, local_stats([1.0, 2.0, 3.0, 4.0])))
        assert out['mean'] == pytest.approx(2.5)
        assert out['std'] == pytest.approx(np.sqrt(1.25))
        assert out['ptp'] == pytest.approx(3.0)
        assert out['abs_energy'] == pytest.approx(30.0)
        assert out['rms'] == pytest.approx(np.sqrt(7.5))
        assert out['median'] == pytest.approx(2.5)
        assert out['iqr'] == pytest.approx(1.5)

    def test_constant_profile(self):
        out = dict(zip(STAT_NAMES, local_stats([2.0, 2.0, 2.0])))
        for name in ('std', 'skewness', 'kurtosis', 'iqr', 'ptp', 'entropy', 'mean_abs_dev', 'median_abs_dev'):
            assert out[name] == 0.0, name
        for name in ('mean', 'median', 'min', 'max'):
            assert out[name] == pytest.approx(2.0)

    def test_empty_profile(self):
        np.testing.assert_array_equal(local_stats([]), np.zeros(N_STATS))
        assert N_STATS == 14

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 1000).map(lambda k: k / 10.0), min_size=1, max_size=12),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, profile, random):
        shuffled = list(profile)
        random.shuffle(shuffled)
        np.testing.assert_allclose(local_stats(profile), local_stats(shuffled), rtol=1e-9, atol=1e-9)

    def test_local_features_layout(self):
        tensor = tensor_from_matrix([[1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
        out = local_features(tensor, [0])
        assert out.shape == (1, 5, 14)
        np.testing.assert_allclose(out[0, 0], local_stats([1.0, 2.0]))
        np.testing.assert_array_equal(out[0, 1], np.zeros(14))
        np.testing.assert_allclose(out[0, 2], local_stats([1.0]))

    def test_scaling_bounds_by_max_abs(self, small_tensor):
        scaled = scale_local_features(local_features(small_tensor, [1, 2]))
        assert np.abs(scaled).max() <= 1.0 + 1e-12
        assert np.all(np.isfinite(scaled))


class TestInjection:
    @pytest.fixture
    def maps(self, rng):
        return Tensor(rng.normal(size=(2, 3, 4))), Tensor(rng.normal(size=(2, 3, 4)))

    def test_all_greysheep_keeps_injected(self, maps):
        y3, y1 = maps
        _, _, z3 = combine(np.ones((2, 3)), y3, y1)
        np.testing.assert_array_equal(z3.data, y3.data)

    def test_no_greysheep_keeps_collaborative(self, maps):
        y3, y1 = maps
        _, _, z3 = combine(np.zeros((2, 3)), y3, y1)
        np.testing.assert_array_equal(z3.data, y1.data)

    def test_single_row(self, maps):
        y3, y1 = maps
        indicator = np.zeros((2, 3))
        indicator[:, 1] = 1.0
        _, _, z3 = combine(indicator, y3, y1)
        np.testing.assert_array_equal(z3.data[:, 1], y3.data[:, 1])
        np.testing.assert_array_equal(z3.data[:, [0, 2]], y1.data[:, [0, 2]])

    def test_mask_shape_mismatch(self, maps):
        with pytest.raises(ShapeError):
            inject(np.ones((2, 4)), maps[0])

    def test_forward_widths(self, rng):
        params = GMMParams.create(rng, f2=4)
        collaborative = Tensor(rng.normal(size=(2, 3, 4)))
        local = rng.random((2, 3, 14))
        out = gmm_forward(collaborative, local, np.zeros((2, 3)), params)
        assert out.concatenated.shape == (2, 3, 18)
        assert out.injected.shape == (2, 3, 4)
        np.testing.assert_array_equal(out.combined.data, collaborative.data)
