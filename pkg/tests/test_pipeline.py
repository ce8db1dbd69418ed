import os
import shutil

import numpy as np
import pytest

from src.data.dataset import read_dataset
from src.pipeline import Pipeline
from src.utils.config_loader import build_pipeline_config, set_config_value
from src.utils.errors import DataError, MissingArtifactError, ParameterError
from src.utils.helper_functions import read_json
from src.xai.explanation import read_explanations_ndjson
from tests.toys import tiny_pipeline_dict


def artifact_bytes(root):
    """Relative path -> content of every file except the run manifests."""
    files = {}
    for folder, _, names in os.walk(root):
        for name in names:
            path = os.path.join(folder, name)
            relative = os.path.relpath(path, root)
            if relative.split(os.sep)[0] != "manifests":
                with open(path, "rb") as handle:
                    files[relative] = handle.read()
    return files


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    """Output directory of a complete run on the tiny configuration."""
    root = tmp_path_factory.mktemp("run")
    config = build_pipeline_config(tiny_pipeline_dict(str(root / "output"), str(root / "logs")))
    manifests = Pipeline(config).cmd_run()
    return config, str(root / "output"), manifests


def test_run_produces_every_artifact(finished_run):
    _, output, manifests = finished_run
    for relative in ("data/corpus.csv", "data/manifest.json", "model/model.aee", "model/train_report.json",
                     "model/loss.csv", "detection/detections.csv", "detection/scatter.csv",
                     "detection/report.json", "aee/aee_combined.ndjson", "qm/results.csv", "qm/summary.json",
                     "qm/stability.json",
                     "figures/latent_scatter.svg", "figures/qm_boxplot_nok.svg", "report.json", "report.md"):
        assert os.path.exists(os.path.join(output, relative)), relative
    for method in ("gradcam", "lime", "shap", "lrp"):
        assert os.path.exists(os.path.join(output, "explanations", f"{method}_combined.ndjson"))
    assert [m.command for m in manifests][:6] == ["gen", "train", "detect", "explain", "aee", "qm"]
    assert manifests[-1].command == "report"


def test_run_is_reproducible(finished_run, tmp_path):
    _, output, _ = finished_run
    again = build_pipeline_config(tiny_pipeline_dict(str(tmp_path / "output"), str(tmp_path / "logs")))
    Pipeline(again).cmd_run()
    first, second = artifact_bytes(output), artifact_bytes(str(tmp_path / "output"))
    assert sorted(first) == sorted(second)
    for relative in first:
        assert first[relative] == second[relative], relative


def test_report_carries_explanation_stability(finished_run):
    _, output, _ = finished_run
    stability = read_json(os.path.join(output, "qm", "stability.json"))
    assert stability["runs"] == 2
    assert len(stability["instances"]) == 3
    report = read_json(os.path.join(output, "report.json"))
    assert set(report["stability"]) == {"aee", "gradcam", "lime", "lrp", "shap"}
    assert report["stability"]["gradcam"] == pytest.approx(0.0, abs=1e-12)
    assert report["stability"]["lrp"] == pytest.approx(0.0, abs=1e-12)
    assert report["stability"]["lime"] > 0.0
    with open(os.path.join(output, "report.md"), "r", encoding="utf-8") as handle:
        assert "## Explanation stability" in handle.read()


def test_manifests_record_artifact_hashes(finished_run):
    _, output, manifests = finished_run
    train = read_json(os.path.join(output, "manifests", "train.json"))
    assert {a["path"] for a in train["artifacts"]} == {
        os.path.join("model", "model.aee"), os.path.join("model", "train_report.json"), os.path.join("model", "loss.csv"),
    }
    assert train["seeds"]["master_seed"] == 5
    assert len(train["config_hash"]) == 64
    assert manifests[0].timing["seconds"] >= 0


def test_detection_runs_on_the_test_split(finished_run):
    _, output, _ = finished_run
    report = read_json(os.path.join(output, "detection", "report.json"))
    train_report = read_json(os.path.join(output, "model", "train_report.json"))
    assert report["instances"] == len(train_report["split_ids"]["test"]) == 8
    assert report["report"]["NOK"]["support"] + report["report"]["OK"]["support"] == 8


def test_explained_instances_are_the_protocol_sample(finished_run):
    config, output, _ = finished_run
    dataset = read_dataset(os.path.join(output, "data", "corpus.csv"))
    explained = read_explanations_ndjson(os.path.join(output, "explanations", "lrp_combined.ndjson"))
    labels = {s.series_id: s.label for s in dataset}
    ids = [e.series_id for e in explained]
    assert sum(labels[i] == 1 for i in ids) == int(np.sum(dataset.labels == 1))
    assert sum(labels[i] == 0 for i in ids) == config.qm.ok_count
    aggregated = read_explanations_ndjson(os.path.join(output, "aee", "aee_combined.ndjson"))
    assert sorted(e.series_id for e in aggregated) == sorted(ids)
    assert all(np.all((e.values >= 0) & (e.values <= 1)) for e in aggregated)


def test_qm_covers_every_method(finished_run):
    _, output, _ = finished_run
    summary = read_json(os.path.join(output, "qm", "summary.json"))
    assert sorted(summary["methods"]) == ["aee", "gradcam", "lime", "lrp", "shap"]


def test_latent_target_explanations(finished_run, tmp_path):
    config, finished, _ = finished_run
    output = str(tmp_path / "copy")
    shutil.copytree(finished, output)
    pipeline = Pipeline(config)
    pipeline.output_dir = output
    pipeline.cmd_explain(["lrp", "gradcam"], "latent(1)", None)
    pipeline.cmd_aee("latent(1)", ["gradcam", "lrp"])
    assert os.path.exists(os.path.join(output, "aee", "aee_latent1.ndjson"))
    pipeline.cmd_render("heatmap", "features", ["s00000"], ["lrp"])
    assert os.path.exists(os.path.join(output, "figures", "features_lrp_s00000.svg"))


def test_missing_prerequisites(pipeline_dict):
    pipeline = Pipeline(build_pipeline_config(pipeline_dict))
    with pytest.raises(MissingArtifactError, match="gen"):
        pipeline.cmd_train()
    pipeline.cmd_gen()
    with pytest.raises(MissingArtifactError, match="train"):
        pipeline.cmd_detect()
    with pytest.raises(MissingArtifactError, match="explain"):
        pipeline.cmd_aee()
    with pytest.raises(ParameterError):
        pipeline.cmd_render("histogram")


def test_unknown_explain_id(finished_run):
    config, output, _ = finished_run
    pipeline = Pipeline(config)
    with pytest.raises(DataError):
        pipeline.cmd_explain(["lrp"], None, ["nope"])


def test_external_dataset_path(tmp_path, finished_run):
    _, output, _ = finished_run
    raw = tiny_pipeline_dict(str(tmp_path / "out"), str(tmp_path / "logs"))
    raw = set_config_value(raw, "paths.dataset", os.path.join(output, "data", "corpus.csv"))
    pipeline = Pipeline(build_pipeline_config(raw))
    pipeline.cmd_train()
    assert os.path.exists(str(tmp_path / "out" / "model" / "model.aee"))
