import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st

from retiram import Checkpoint, ConfigurationError, NumericError, build, builtin_specs
from retiram import dataio
from retiram.metrics import (
    KappaReport,
    confusion_matrix,
    discretize,
    evaluate,
    kappa_from_confusion,
    quadratic_weighted_kappa,
)


def kappa_oracle(truth, pred):
    """Brute-force evaluation straight from the O/E definition, all loops."""
    n = len(truth)
    observed = [[0.0] * 5 for _ in range(5)]
    hist_t, hist_p = [0] * 5, [0] * 5
    for t, p in zip(truth, pred):
        observed[t][p] += 1
        hist_t[t] += 1
        hist_p[p] += 1
    num = den = 0.0
    for i in range(5):
        for j in range(5):
            w = (i - j) ** 2 / 16.0
            num += w * observed[i][j]
            den += w * hist_t[i] * hist_p[j] / n
    return 1.0 - num / den


class TestDiscretize:
    @pytest.mark.parametrize("score,level", [
        (0.49, 0), (0.5, 1), (1.49, 1), (1.5, 2), (2.5, 3), (3.5, 4),
        (5.06, 4), (-0.3, 0), (100.0, 4),
    ])
    def test_thresholds(self, score, level):
        assert discretize(score) == level

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            discretize(float("nan"))
        with pytest.raises(NumericError):
            discretize(float("inf"))

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert discretize(lo) <= discretize(hi)


class TestQuadraticWeightedKappa:
    def test_perfect_agreement(self):
        assert quadratic_weighted_kappa([0, 1, 2, 3, 4], [0, 1, 2, 3, 4]) == 1.0

    def test_maximal_disagreement(self):
        assert quadratic_weighted_kappa([0, 4], [4, 0]) == -1.0

    def test_matches_oracle_on_random_vectors(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            n = int(rng.integers(2, 1000))
            truth = rng.integers(0, 5, n).tolist()
            pred = rng.integers(0, 5, n).tolist()
            if len(set(truth)) == 1 and truth == pred:
                continue
            npt.assert_allclose(quadratic_weighted_kappa(truth, pred),
                                kappa_oracle(truth, pred), atol=1e-12)

    def test_thousand_sample_oracle_agreement(self):
        rng = np.random.default_rng(99)
        truth = rng.integers(0, 5, 1000).tolist()
        pred = rng.integers(0, 5, 1000).tolist()
        npt.assert_allclose(quadratic_weighted_kappa(truth, pred),
                            kappa_oracle(truth, pred), atol=1e-12)

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)),
                    min_size=2, max_size=60), st.randoms())
    def test_invariant_under_sample_permutation(self, pairs, rnd):
        truth = [t for t, _ in pairs]
        pred = [p for _, p in pairs]
        try:
            before = quadratic_weighted_kappa(truth, pred)
        except NumericError:
            return
        order = list(range(len(pairs)))
        rnd.shuffle(order)
        after = quadratic_weighted_kappa([truth[i] for i in order],
                                         [pred[i] for i in order])
        assert before == after

    def test_self_agreement_is_one_for_nonconstant(self):
        for truth in ([0, 1], [2, 2, 3], [4, 0, 4, 1]):
            assert quadratic_weighted_kappa(truth, truth) == 1.0

    def test_constant_equal_raters_return_one(self):
        assert quadratic_weighted_kappa([2, 2, 2], [2, 2, 2]) == 1.0

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            quadratic_weighted_kappa([0, 1], [0])
        with pytest.raises(ConfigurationError):
            quadratic_weighted_kappa([], [])
        with pytest.raises(ConfigurationError):
            quadratic_weighted_kappa([0, 5], [0, 1])

    def test_report_text_shape(self):
        conf = confusion_matrix([0, 1, 1], [0, 1, 2])
        report = KappaReport(conf, kappa_from_confusion(conf), 3)
        text = report.to_text()
        assert text.startswith("n: 3\nkappa: ")
        assert len(text.strip().splitlines()) == 8


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyset")
    records = dataio.generate_synthetic(12, 64, seed=5, out_dir=root)
    return root, records


def constant_checkpoint(value: float) -> Checkpoint:
    """A net_small checkpoint that predicts ``value`` for every image."""
    net = build(builtin_specs()["net_small"])
    w, b = net.dense_params
    b.data = np.array([value], np.float32)
    ckpt = Checkpoint.from_network(net)
    ckpt.meta.resolution = 64
    return ckpt


class TestEvaluate:
    def test_single_correct_image_scores_one(self, tiny_dataset):
        root, records = tiny_dataset
        level0 = [r for r in records if r.level == 0][:1]
        report = evaluate(constant_checkpoint(0.1), level0, root)
        assert report.n == 1
        assert report.kappa == 1.0
        assert report.confusion[0, 0] == 1 and report.confusion.sum() == 1

    def test_constant_zero_predictions_match_oracle(self, tiny_dataset):
        root, records = tiny_dataset
        report = evaluate(constant_checkpoint(0.0), records, root)
        truth = [r.level for r in records]
        pred = [0] * len(records)
        npt.assert_allclose(report.kappa, kappa_oracle(truth, pred), atol=1e-12)
        assert report.kappa <= 0.0
        assert report.confusion.sum() == report.n == len(records)

    def test_missing_images_collected_not_fatal(self, tiny_dataset):
        root, records = tiny_dataset
        ghost = dataio.ManifestRecord("nonexistent_9", 2)
        report = evaluate(constant_checkpoint(0.0), list(records) + [ghost], root)
        assert ("nonexistent_9", "image file not found") in report.failures
        assert report.n == len(records)

    def test_empty_manifest_rejected(self, tiny_dataset):
        root, _ = tiny_dataset
        with pytest.raises(ConfigurationError):
            evaluate(constant_checkpoint(0.0), [], root)
