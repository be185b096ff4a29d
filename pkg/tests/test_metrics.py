import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prunekit.errors import AllClassesEmpty, NoPositives
from prunekit.metrics import average_precision, mean_average_precision

from helpers import ap_oracle


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.1], [1, 0]) == 1.0

    def test_worst_ranking_two_items(self):
        assert average_precision([0.9, 0.1], [0, 1]) == 0.5

    def test_three_items(self):
        assert average_precision([0.3, 0.2, 0.1], [1, 0, 1]) == pytest.approx(5 / 6)

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            average_precision([0.5, 0.2], [0, 0])

    def test_ties_processed_as_group(self):
        # all scores tied: single threshold, AP = precision of full set
        assert average_precision([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_matches_bruteforce_oracle_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 101))
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int)
            if labels.sum() == 0:
                labels[int(rng.integers(n))] = 1
            assert average_precision(scores, labels) == ap_oracle(scores, labels)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        scores = rng.random(n)
        labels = (rng.random(n) < 0.5).astype(int)
        if labels.sum() == 0:
            labels[0] = 1
        a = average_precision(scores, labels)
        b = average_precision(3 * scores + 1, labels)        # strictly monotone
        c = average_precision(np.exp(scores), labels)
        assert a == pytest.approx(b, abs=1e-12)
        assert a == pytest.approx(c, abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            scores = rng.random(n)
            labels = (rng.random(n) < 0.4).astype(int)
            if labels.sum() == 0:
                continue
            assert 0.0 <= average_precision(scores, labels) <= 1.0


class TestMeanAveragePrecision:
    def test_perfect_predictor(self):
        labels = np.array([[1, 0], [0, 1], [1, 1]])
        assert mean_average_precision(labels.astype(float), labels).map == 1.0

    def test_mean_of_per_class_values(self):
        scores = np.array([[0.9, 0.9], [0.1, 0.1]])
        labels = np.array([[1, 0], [0, 1]])
        res = mean_average_precision(scores, labels)
        assert res.ap[0] == 1.0 and res.ap[1] == 0.5
        assert res.map == 0.75

    def test_all_negative_class_skipped(self):
        scores = np.array([[0.9, 0.5], [0.1, 0.4]])
        labels = np.array([[1, 0], [0, 0]])
        res = mean_average_precision(scores, labels)
        assert res.skipped == 1
        assert np.isnan(res.ap[1])
        assert res.map == res.ap[0] == 1.0

    def test_all_classes_empty(self):
        with pytest.raises(AllClassesEmpty):
            mean_average_precision(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_random_labels_concentrate_near_prior(self):
        rng = np.random.default_rng(2)
        prior = 0.3
        labels = (rng.random((1000, 4)) < prior).astype(int)
        scores = rng.random((1000, 4))
        res = mean_average_precision(scores, labels)
        assert abs(res.map - prior) < 0.1

    def test_csv_and_json(self):
        import json
        scores = np.array([[0.9, 0.5], [0.1, 0.4]])
        labels = np.array([[1, 0], [0, 1]])
        res = mean_average_precision(scores, labels)
        assert res.to_csv().startswith("class,ap\n")
        doc = json.loads(res.to_json())
        assert doc["map"] == res.map
        assert len(doc["ap"]) == 2
