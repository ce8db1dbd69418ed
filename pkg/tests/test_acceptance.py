"""
End-to-end checks on the full desk-scale corpus. Run with --run-slow.
"""

import json
import os

import numpy as np
import pytest

from src.data.datagen import AnomalyKind, AnomalySpec, inject_anomaly
from src.data.dataset import read_dataset
from src.models.serialization import load_model
from src.pipeline import Pipeline
from src.utils.config_loader import build_pipeline_config, default_config_dict, set_config_value
from src.utils.helper_functions import read_json
from src.xai.explanation import read_explanations_ndjson

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    raw = set_config_value(default_config_dict(), "paths.output_dir", str(root / "output"))
    raw = set_config_value(raw, "paths.log_directory", str(root / "logs"))
    config = build_pipeline_config(raw)
    Pipeline(config).cmd_run()
    return config, str(root / "output")


def test_detection_scores(desk_run):
    _, output = desk_run
    report = read_json(os.path.join(output, "detection", "report.json"))["report"]
    assert report["NOK"]["f1-score"] >= 0.70
    assert report["OK"]["f1-score"] >= 0.99


def test_qm_separation(desk_run):
    _, output = desk_run
    summary = read_json(os.path.join(output, "qm", "summary.json"))["methods"]
    for method in ("gradcam", "shap", "aee"):
        nok = summary[method]["NOK"]
        assert nok["xai"]["median"] > nok["noise"]["median"]
        assert nok["ordering_rate"] >= 0.70
    for method in ("gradcam", "lime", "shap", "lrp"):
        assert summary["aee"]["NOK"]["ordering_rate"] >= summary[method]["NOK"]["ordering_rate"] - 0.05


def test_self_distance_is_exactly_zero(desk_run):
    _, output = desk_run
    with open(os.path.join(output, "qm", "results.ndjson"), "r", encoding="utf-8") as handle:
        records = [json.loads(line) for line in handle if line.strip()]
    assert records
    assert all(r["d_self"] == 0.0 for r in records)


def test_noise_moves_latents_less_than_anomalies(desk_run):
    config, output = desk_run
    model = load_model(os.path.join(output, "model", "model.aee"))
    dataset = read_dataset(os.path.join(output, "data", "corpus.csv"))
    rng = np.random.default_rng(0)
    ok = [s for s in dataset if s.label == 0][:50]
    boundary = config.generator.boundary
    noisy, anomalous = [], []
    for i, series in enumerate(ok):
        origin = model.encode(series)
        jittered = series.values + rng.normal(0.0, 0.01, size=series.values.shape)
        injected = inject_anomaly(series, AnomalySpec(AnomalyKind.REGIME_MISSING, (boundary, len(series))), i,
                                  config.generator)
        noisy.append(np.linalg.norm(model.encode(jittered) - origin))
        anomalous.append(np.linalg.norm(model.encode(injected) - origin))
    assert np.mean(noisy) < np.mean(anomalous)


def test_gradcam_marks_the_anomaly_window(desk_run):
    _, output = desk_run
    manifest = read_json(os.path.join(output, "data", "manifest.json"))
    windows = {r["id"]: r["anomaly"]["window"] for r in manifest["instances"] if r["anomaly"]}
    explanations = read_explanations_ndjson(os.path.join(output, "explanations", "gradcam_combined.ndjson"))
    for explanation in explanations:
        assert np.all(explanation.values >= 0)
        if explanation.series_id in windows:
            start, stop = windows[explanation.series_id]
            assert explanation.values[start:stop].max() > 0
