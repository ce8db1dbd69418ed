import numpy as np
import pytest

from src.data.dataset import NOK, OK, Dataset, TimeSeries
from src.utils.errors import DataError, DimensionError, ParameterError
from src.xai.explanation import Explanation
from src.xai.quality import (
    PerturbationConfig, QMConfig, QMResult, evaluate, evaluate_methods, explanation_stability, iqr_stats,
    latent_distance, measure_stability, perturb_by_explanation, perturb_random, qm_distance,
    select_protocol_instances, summarize, top_positions,
)
from src.xai.explainers import ExplainerConfigs
from src.xai.kernel_shap import KernelShapConfig
from src.xai.lime import LimeConfig
from tests.toys import linear_encoder


def test_iqr_stats_of_one_to_five():
    stats = iqr_stats([1, 2, 3, 4, 5])
    assert (stats.q1, stats.median, stats.q3) == (2.0, 3.0, 4.0)
    assert (stats.lower_fence, stats.upper_fence) == (-1.0, 7.0)
    assert stats.iqr == 2.0
    with pytest.raises(DataError):
        iqr_stats([])


def test_distance_of_a_series_to_itself_is_zero(tiny_model, small_corpus):
    assert qm_distance(tiny_model, small_corpus[0], small_corpus[0]) == 0.0
    assert qm_distance(tiny_model, small_corpus[0], small_corpus[1]) > 0.0


def test_latent_distance_scales_by_dimension():
    assert latent_distance(np.zeros(4), np.full(4, 2.0)) == pytest.approx(2.0)


def test_top_positions_ties_go_low():
    positions, degenerate = top_positions(np.array([0.1, -0.9, 0.5, 0.9, 0.0]), 2)
    np.testing.assert_array_equal(positions, [1, 3])
    assert not degenerate
    positions, degenerate = top_positions(np.ones(5), 3)
    np.testing.assert_array_equal(positions, [0, 1, 2])
    assert degenerate


@pytest.mark.parametrize("strategy", ["shuffle", "zero", "mean"])
def test_explanation_guided_perturbation_touches_only_chosen_points(rng, strategy):
    x = rng.normal(size=40)
    importance = np.zeros(40)
    importance[[5, 17, 30, 31]] = [4.0, 3.0, 2.0, 1.0]
    result = perturb_by_explanation(x, importance, PerturbationConfig(fraction=0.1, strategy=strategy, seed=1))
    np.testing.assert_array_equal(result.positions, [5, 17, 30, 31])
    untouched = np.setdiff1d(np.arange(40), result.positions)
    np.testing.assert_array_equal(result.values[untouched], x[untouched])
    if strategy == "shuffle":
        assert sorted(result.values[result.positions]) == sorted(x[result.positions])
    elif strategy == "zero":
        np.testing.assert_array_equal(result.values[result.positions], 0.0)


def test_perturbation_counts_round_up(rng):
    x = rng.normal(size=25)
    assert len(perturb_random(x, PerturbationConfig(fraction=0.1)).positions) == 3
    assert len(perturb_by_explanation(x, np.arange(25.0), PerturbationConfig(fraction=0.1)).positions) == 3
    with pytest.raises(DimensionError):
        perturb_by_explanation(x, np.zeros(24))
    with pytest.raises(ParameterError):
        PerturbationConfig(fraction=0.0).validate()
    with pytest.raises(ParameterError):
        PerturbationConfig(strategy="reverse").validate()


def test_random_perturbation_is_seeded(rng):
    x = rng.normal(size=50)
    a = perturb_random(x, PerturbationConfig(seed=3))
    b = perturb_random(x, PerturbationConfig(seed=3))
    np.testing.assert_array_equal(a.values, b.values)


def test_faithful_explanation_beats_random_points():
    weights = np.zeros((1, 20))
    weights[0, :4] = 10.0
    model = linear_encoder(weights)
    series = [TimeSeries(np.r_[np.arange(1.0, 5.0) * (i + 1), np.zeros(16)], OK if i else NOK, f"s{i}")
              for i in range(3)]
    dataset = Dataset(series)
    source = {s.series_id: Explanation(np.r_[np.ones(4), np.zeros(16)], "lime", series_id=s.series_id) for s in series}
    evaluation = evaluate(model, dataset, source, QMConfig(PerturbationConfig(0.2, "zero"), trials=3), master_seed=1)
    for result in evaluation.results:
        assert result.d_self == 0.0
        assert result.d_xai > result.d_random
        assert result.ordering_satisfied
        assert len(result.d_random_trials) == 3
        assert 0.0 <= result.d_random_normalized <= 1.0
        assert 0.0 <= result.d_xai_normalized <= 1.0
    assert max(r.d_xai_normalized for r in evaluation.results) == 1.0
    assert evaluation.summary.ordering_rates[("lime", "OK")] == 1.0
    assert evaluation.summary.stats[("lime", "NOK", "xai")].count == 1


def test_missing_explanation_or_label_is_an_error():
    model = linear_encoder(np.ones((1, 20)))
    with pytest.raises(DataError):
        evaluate(model, Dataset([TimeSeries(np.zeros(20), OK, "a")]), {})
    unlabeled = Dataset([TimeSeries(np.zeros(20), None, "a")])
    with pytest.raises(DataError):
        evaluate(model, unlabeled, {"a": Explanation(np.zeros(20), "lrp", series_id="a")})


def test_evaluate_methods_merges_results(tiny_model, small_corpus):
    subset = small_corpus.subset(np.arange(4))
    flat = {s.series_id: Explanation(np.linspace(0, 1, 64), "gradcam", series_id=s.series_id) for s in subset}
    ramp = {s.series_id: Explanation(np.linspace(1, 0, 64), "lrp", series_id=s.series_id) for s in subset}
    evaluation = evaluate_methods(tiny_model, subset, {"gradcam": flat, "lrp": ramp}, QMConfig(trials=2))
    assert len(evaluation.results) == 8
    assert evaluation.summary.methods == ["gradcam", "lrp"]
    again = evaluate_methods(tiny_model, subset, {"gradcam": flat, "lrp": ramp}, QMConfig(trials=2))
    assert [r.to_dict() for r in again.results] == [r.to_dict() for r in evaluation.results]


def test_summary_marks_empty_strata():
    results = [QMResult("a", OK, "lime", 0.0, 0.2, 0.4, True)]
    summary = summarize(results)
    assert summary.stats[("lime", "NOK", "xai")] is None
    assert summary.ordering_rates[("lime", "NOK")] is None
    assert summary.to_dict()["methods"]["lime"]["NOK"]["xai"] == {"empty": True}


def test_protocol_takes_every_nok_and_sampled_oks(small_corpus):
    chosen = select_protocol_instances(small_corpus, ok_count=5, seed=2)
    assert int(np.sum(chosen.labels == NOK)) == int(np.sum(small_corpus.labels == NOK))
    assert int(np.sum(chosen.labels == OK)) == 5
    positions = [small_corpus.ids.index(i) for i in chosen.ids]
    assert positions == sorted(positions)
    assert len(select_protocol_instances(small_corpus, ok_count=1000)) == len(small_corpus)


def test_stability():
    assert explanation_stability([np.arange(5.0), 2.0 * np.arange(5.0)]) == 0.0
    assert explanation_stability([np.arange(5.0), np.arange(5.0)[::-1]]) > 0.0
    with pytest.raises(ParameterError):
        explanation_stability([np.arange(5.0)])


def definition_quantile(values, p):
    """Linear interpolation between the order statistics at rank (n - 1) p."""
    ordered = sorted(values)
    rank = (len(ordered) - 1) * p
    low = int(rank // 1)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (rank - low) * (ordered[high] - ordered[low])


def test_iqr_stats_matches_definition_quantiles():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        values = rng.normal(size=int(rng.integers(1, 60))) * rng.uniform(0.1, 10.0)
        stats = iqr_stats(values)
        q1, median, q3 = (definition_quantile(values.tolist(), p) for p in (0.25, 0.5, 0.75))
        assert abs(stats.q1 - q1) <= 1e-12
        assert abs(stats.median - median) <= 1e-12
        assert abs(stats.q3 - q3) <= 1e-12
        assert stats.q1 <= stats.median <= stats.q3


def test_qm_distance_is_a_metric(tiny_model):
    rng = np.random.default_rng(8)
    for _ in range(50):
        a, b, c = (rng.normal(size=64) for _ in range(3))
        ab, ba = qm_distance(tiny_model, a, b), qm_distance(tiny_model, b, a)
        assert ab == ba
        assert ab <= qm_distance(tiny_model, a, c) + qm_distance(tiny_model, c, b) + 1e-12


def test_random_positions_overlap_a_fixed_set_as_expected():
    length, fraction, fixed = 100, 0.1, np.arange(30, 50)
    draws = 10_000
    overlaps = np.array([
        np.isin(perturb_random(np.zeros(length), PerturbationConfig(fraction, seed=seed)).positions, fixed).sum()
        for seed in range(draws)
    ])
    k, m, n = fraction, len(fixed), length
    count = int(k * n)
    variance = count * (m / n) * (1 - m / n) * (n - count) / (n - 1)
    assert abs(overlaps.mean() - k * m) <= 3.0 * np.sqrt(variance / draws)


SMALL_EXPLAINERS = ExplainerConfigs(lime=LimeConfig(segments=8, samples=40), shap=KernelShapConfig(segments=8, samples=64))


def test_stability_of_repeated_explanations(tiny_model, small_corpus):
    subset = small_corpus.subset(np.arange(2))
    report = measure_stability(tiny_model, subset, ["gradcam", "lime", "shap", "lrp"], SMALL_EXPLAINERS, runs=3)
    assert report.runs == 3
    assert sorted(report.per_instance) == sorted(subset.ids)
    assert sorted(report.methods) == ["aee", "gradcam", "lime", "lrp", "shap"]
    assert report.methods["gradcam"] == pytest.approx(0.0, abs=1e-12)
    assert report.methods["lrp"] == pytest.approx(0.0, abs=1e-12)
    assert report.methods["lime"] > 0.0
    assert report.to_dict()["instances"] == sorted(subset.ids)
    again = measure_stability(tiny_model, subset, ["gradcam", "lime", "shap", "lrp"], SMALL_EXPLAINERS, runs=3)
    assert again.to_dict() == report.to_dict()


def test_stability_skips_the_aggregate_without_its_members(tiny_model, small_corpus):
    subset = small_corpus.subset(np.arange(1))
    report = measure_stability(tiny_model, subset, ["gradcam", "lime"], SMALL_EXPLAINERS, runs=2,
                               ensemble_methods=["gradcam", "lime", "shap"])
    assert sorted(report.methods) == ["gradcam", "lime"]
    with pytest.raises(ParameterError):
        measure_stability(tiny_model, subset, ["lime"], SMALL_EXPLAINERS, runs=1)
    with pytest.raises(ParameterError):
        QMConfig(stability_runs=1).validate()
    with pytest.raises(ParameterError):
        QMConfig(stability_instances=-1).validate()
