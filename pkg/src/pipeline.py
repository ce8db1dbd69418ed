"""
Pipeline Module

This module orchestrates the command-line pipeline: generate -> train -> detect -> explain ->
aggregate -> qm -> render -> report, plus the architecture search. Every command reads its
prerequisites from the output directory, writes canonical artifacts and a run manifest.
"""

import os
import csv
import json
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import matplotlib
import numpy as np
import scipy

from src import __version__
from src.data.datagen import generate_corpus
from src.data.dataset import NOK, OK, Dataset, read_dataset, write_dataset
from src.detection.latent_anomaly import (
    DetectionResult, LatentScatter, detect, scatter_from_detection, score,
)
from src.models.autoencoder import AEModel
from src.models.search import random_search
from src.models.serialization import load_model, save_model
from src.models.training import SPLIT_NAMES, TrainReport, train
from src.utils.config_loader import PipelineConfig
from src.utils.errors import DataError, MissingArtifactError, ParameterError
from src.utils.helper_functions import (
    config_hash, create_required_directories, derive_seed, file_sha256, get_current_timestamp,
    read_json, sanitize_filename, write_csv, write_json, write_ndjson,
)
from src.utils.logger import get_logger
from src.visualization import plots
from src.xai.ensemble import aggregate
from src.xai.explainers import EXPLAINER_METHODS, explain, explain_individual
from src.xai.explanation import (
    Explanation, ExplanationTarget, read_explanations_ndjson, write_explanation_csv,
    write_explanations_ndjson,
)
from src.xai.quality import (
    QM_CSV_HEADER, QMResult, evaluate_methods, measure_stability, select_protocol_instances, summarize,
)

RENDER_KINDS = ("heatmap", "boxplot", "scatter", "reconstruction")
FEATURES_TARGET = "features"
DEFAULT_RENDER_COUNT = 3

DETECTION_CSV_HEADER = ["id", "outlier", "cluster", "core"]
SCATTER_CSV_HEADER = ["id", "x", "y", "tag", "label"]
QM_RESULTS_HEADER = ["id", "label", "method", "d_self", "d_random", "d_xai",
                     "d_random_normalized", "d_xai_normalized", "ordering_satisfied", "degenerate"]


@dataclass
class RunManifest:
    """
    Record of one command run.

    Attributes:
        command: Command name
        config_hash: SHA-256 of the canonical configuration tree
        versions: Package versions
        seeds: Master seed and the seeds derived from it
        artifacts: Produced files with their SHA-256
        timing: Start timestamp and duration (the only non-reproducible field)
        config: Configuration tree the command ran with
    """

    command: str
    config_hash: str
    versions: Dict[str, str]
    seeds: Dict[str, Any]
    artifacts: List[Dict[str, str]] = field(default_factory=list)
    timing: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "versions": dict(self.versions),
            "seeds": dict(self.seeds),
            "artifacts": list(self.artifacts),
            "timing": dict(self.timing),
            "config": self.config,
        }


class Pipeline:
    """
    Command runner bound to one validated configuration.

    Attributes:
        config: Pipeline configuration
        output_dir: Root of every artifact
        logger: Logger instance
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.paths.output_dir
        self.logger = get_logger()
        self._produced: List[str] = []

    # paths

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    @property
    def dataset_path(self) -> str:
        return self.config.paths.dataset or self.path("data", "corpus.csv")

    @property
    def model_path(self) -> str:
        return self.config.paths.model or self.path("model", "model.aee")

    @property
    def train_report_path(self) -> str:
        return self.path("model", "train_report.json")

    def explanation_path(self, method: str, target: ExplanationTarget) -> str:
        folder = "aee" if method == "aee" else "explanations"
        return self.path(folder, f"{method}_{target.slug}.ndjson")

    def _require(self, path: str, command: str) -> str:
        if not os.path.exists(path):
            self.logger.error(f"Missing prerequisite {path}")
            raise MissingArtifactError(path, command)
        return path

    # loading

    def load_dataset(self) -> Dataset:
        return read_dataset(self._require(self.dataset_path, "gen"))

    def load_model(self) -> AEModel:
        return load_model(self._require(self.model_path, "train"))

    def load_train_report(self) -> TrainReport:
        return TrainReport.from_dict(read_json(self._require(self.train_report_path, "train")))

    def split_dataset(self, dataset: Dataset, split: str) -> Dataset:
        """Members of a training split ("all" for the whole corpus)."""
        if split == "all":
            return dataset
        if split not in SPLIT_NAMES:
            raise ParameterError(f"unknown split {split!r}")
        ids = self.load_train_report().split_ids.get(split, [])
        return dataset.by_ids(ids)

    def load_explanations(self, method: str, target: ExplanationTarget) -> Dict[str, Explanation]:
        command = "aee" if method == "aee" else f"explain --method {method} --target {target}"
        path = self._require(self.explanation_path(method, target), command)
        return {e.series_id: e for e in read_explanations_ndjson(path)}

    # bookkeeping

    def _record(self, path: str) -> str:
        self._produced.append(path)
        return path

    def _seeds(self) -> Dict[str, Any]:
        return {
            "master_seed": self.config.master_seed,
            "generator": self.config.generator.master_seed,
            "training": self.config.autoencoder.training.seed,
            "protocol": self._protocol_seed(),
        }

    def _protocol_seed(self) -> int:
        return derive_seed(self.config.master_seed, "protocol")

    def _write_manifest(self, command: str, started: float, started_at: str) -> RunManifest:
        manifest = RunManifest(
            command=command,
            config_hash=config_hash(self.config.raw),
            versions={
                "aee_ts": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
                "model_format": str(self.config.format_version),
            },
            seeds=self._seeds(),
            artifacts=[{"path": os.path.relpath(p, self.output_dir), "sha256": file_sha256(p)}
                       for p in sorted(set(self._produced))],
            timing={"started": started_at, "seconds": round(time.perf_counter() - started, 3)},
            config=self.config.raw,
        )
        write_json(manifest.to_dict(), self.path("manifests", f"{command}.json"))
        self.logger.info(f"{command}: {len(manifest.artifacts)} artifacts, manifest written")
        return manifest

    def _run(self, command: str, body) -> RunManifest:
        self._produced = []
        started, started_at = time.perf_counter(), get_current_timestamp()
        create_required_directories([self.output_dir])
        self.logger.info(f"Running {command}")
        body()
        return self._write_manifest(command, started, started_at)

    def instance_ids(self, dataset: Dataset, ids: Optional[Sequence[str]] = None) -> List[str]:
        """Explicit ids, else the configured ids, else the QM protocol instances (labeled only)."""
        chosen = list(ids or self.config.explainer.ids)
        if chosen:
            dataset.by_ids(chosen)
            return chosen
        labeled = dataset.subset([i for i, s in enumerate(dataset) if s.label in (OK, NOK)])
        if len(labeled) == 0:
            raise DataError("no labeled series to select evaluation instances from")
        protocol = select_protocol_instances(labeled, self.config.qm.ok_count, self._protocol_seed())
        return protocol.ids

    # commands

    def cmd_gen(self) -> RunManifest:
        """Generate the synthetic corpus and its manifest."""

        def body():
            dataset, manifest = generate_corpus(self.config.generator)
            if self.config.paths.dataset:
                self.logger.warning(f"paths.dataset is set; the generated corpus goes to {self.path('data')} instead")
            self._record(write_dataset(dataset, self.path("data", "corpus.csv")))
            self._record(write_json(manifest, self.path("data", "manifest.json")))
            self.logger.info(f"Generated {len(dataset)} series ({manifest['nok_count']} NOK)")

        return self._run("gen", body)

    def cmd_train(self) -> RunManifest:
        """Train the autoencoder and write the model with its report."""

        def body():
            dataset = self.load_dataset()
            model, report = train(dataset, self.config.autoencoder)
            self._record(save_model(model, self.model_path))
            self._record(write_json(report.to_dict(), self.train_report_path))
            rows = [[epoch, tl, vl] for epoch, (tl, vl) in enumerate(zip(report.train_loss, report.val_loss), 1)]
            self._record(write_csv(["epoch", "train_mse", "val_mse"], rows, self.path("model", "loss.csv")))
            self.logger.info(f"Training finished after {report.epochs_run} epochs, test MSE {report.test_mse:.6g}")

        return self._run("train", body)

    def cmd_search(self) -> RunManifest:
        """Random architecture search; writes the leaderboard and best configuration."""

        def body():
            dataset = self.load_dataset()
            search = self.config.search
            result = random_search(dataset, search.space, search.trials, search.epochs,
                                   self.config.master_seed, self.config.autoencoder)
            self._record(write_json(result.to_dict(), self.path("search", "leaderboard.json")))
            self._record(write_json(result.best_config.to_dict(), self.path("search", "best_config.json")))

        return self._run("search", body)

    def cmd_detect(self, split: Optional[str] = None) -> RunManifest:
        """Cluster latents with DBSCAN, flag outliers and score them when labels exist."""

        def body():
            model = self.load_model()
            dataset = self.split_dataset(self.load_dataset(), split or self.config.detection.split)
            result = detect(model, dataset, self.config.detection.dbscan)
            self._write_detection(result, dataset)

        return self._run("detect", body)

    def _write_detection(self, result: DetectionResult, dataset: Dataset) -> None:
        self._record(write_csv(DETECTION_CSV_HEADER, result.to_rows(), self.path("detection", "detections.csv")))
        scatter = scatter_from_detection(result, dataset.labels)
        self._record(write_csv(SCATTER_CSV_HEADER, scatter.to_rows(), self.path("detection", "scatter.csv")))
        summary: Dict[str, Any] = {
            "eps": result.eps_used,
            "min_pts": self.config.detection.dbscan.min_pts,
            "standardize": self.config.detection.dbscan.standardize,
            "instances": len(dataset),
            "clusters": result.assignment.n_clusters,
            "outliers": int(np.sum(result.flags)),
            "report": None,
        }
        labels = dataset.labels
        if len(labels) and np.all((labels == OK) | (labels == NOK)):
            report = score(result.flags, labels)
            summary["report"] = report.to_dict()
            self.logger.info(f"Detection report:\n{report.format_table()}")
        else:
            self.logger.warning("Dataset is not fully labeled; skipping the detection report")
        self._record(write_json(summary, self.path("detection", "report.json")))

    def cmd_explain(self, methods: Optional[Sequence[str]] = None, target=None,
                    ids: Optional[Sequence[str]] = None) -> RunManifest:
        """
        Explain the selected instances with each method.

        Args:
            methods: Explainers to run (configured methods by default)
            target: "combined" or a latent index (configured target by default)
            ids: Instance ids (configured ids or the QM protocol instances by default)
        """

        def body():
            model = self.load_model()
            dataset = self.load_dataset()
            explain_target = ExplanationTarget.parse(target if target is not None else self.config.explainer.target)
            explain_target.check(model.latent_dim)
            chosen = dataset.by_ids(self.instance_ids(dataset, ids))
            for method in methods or self.config.explainer.methods:
                explanations = []
                for series in chosen:
                    configs = self.config.explainer.configs.for_series(self.config.master_seed, series.series_id)
                    explanations.append(explain(model, series, method, explain_target, configs))
                self._write_explanations(explanations, method, explain_target)
                self.logger.info(f"Explained {len(explanations)} series with {method} ({explain_target})")

        return self._run("explain", body)

    def _write_explanations(self, explanations: List[Explanation], method: str, target: ExplanationTarget) -> None:
        self._record(write_explanations_ndjson(explanations, self.explanation_path(method, target)))
        folder = os.path.dirname(self.explanation_path(method, target))
        for e in explanations:
            name = sanitize_filename(f"{method}_{target.slug}_{e.series_id}.csv")
            self._record(write_explanation_csv(e, os.path.join(folder, "csv", name)))

    def cmd_aee(self, target=None, methods: Optional[Sequence[str]] = None) -> RunManifest:
        """Aggregate the member explanations of every explained instance."""

        def body():
            aee_target = ExplanationTarget.parse(target if target is not None else self.config.explainer.target)
            members = sorted(methods or self.config.ensemble.methods)
            loaded = {m: self.load_explanations(m, aee_target) for m in members}
            ids = sorted(set.intersection(*(set(v) for v in loaded.values())))
            if not ids:
                raise DataError(f"no instance was explained by all of {members}")
            ensemble = self.config.ensemble.config
            aggregated = [
                aggregate({m: loaded[m][sid] for m in members}, ensemble.bounds, ensemble.weight_map()).as_explanation()
                for sid in ids
            ]
            self._write_explanations(aggregated, "aee", aee_target)
            self.logger.info(f"Aggregated {len(aggregated)} explanations from {members}")

        return self._run("aee", body)

    def cmd_qm(self, methods: Optional[Sequence[str]] = None, target=None) -> RunManifest:
        """
        Quality measurement of stored explanations.

        Args:
            methods: Methods to evaluate; defaults to the configured explainers plus aee
            target: Explanation target (configured target by default)
        """

        def body():
            qm_target = ExplanationTarget.parse(target if target is not None else self.config.explainer.target)
            model = self.load_model()
            dataset = self.load_dataset()
            chosen = list(methods) if methods else list(self.config.explainer.methods) + ["aee"]
            sources = {m: self.load_explanations(m, qm_target) for m in chosen}
            ids = sorted(set.intersection(*(set(v) for v in sources.values())))
            instances = dataset.by_ids(ids)
            instances = instances.subset([i for i, s in enumerate(instances) if s.label in (OK, NOK)])
            if len(instances) == 0:
                raise DataError("no labeled explained instance to evaluate")
            evaluation = evaluate_methods(model, instances, sources, self.config.qm, self.config.master_seed)
            rows = [
                [r.series_id, r.label, r.method, r.d_self, r.d_random, r.d_xai, r.d_random_normalized,
                 r.d_xai_normalized, int(r.ordering_satisfied), int(r.degenerate)]
                for r in evaluation.results
            ]
            self._record(write_csv(QM_RESULTS_HEADER, rows, self.path("qm", "results.csv")))
            self._record(write_ndjson((r.to_dict() for r in evaluation.results), self.path("qm", "results.ndjson")))
            self._record(write_json(evaluation.summary.to_dict(), self.path("qm", "summary.json")))
            self._record(write_csv(QM_CSV_HEADER, evaluation.summary.to_rows(), self.path("qm", "summary.csv")))
            self._write_stability(model, instances, chosen, qm_target)

        return self._run("qm", body)

    def _write_stability(self, model: AEModel, instances: Dataset, methods: Sequence[str],
                         target: ExplanationTarget) -> None:
        """Re-run the seeded explainers on the first evaluated instances and store their stability."""
        qm = self.config.qm
        rerun = [m for m in methods if m in EXPLAINER_METHODS]
        if qm.stability_instances == 0 or not rerun:
            return
        subset = instances.subset(list(range(min(qm.stability_instances, len(instances)))))
        report = measure_stability(
            model, subset, rerun, self.config.explainer.configs, target, qm.stability_runs,
            self.config.master_seed, self.config.ensemble.config, self.config.ensemble.methods,
        )
        self._record(write_json(report.to_dict(), self.path("qm", "stability.json")))

    def _load_qm_results(self) -> List[QMResult]:
        records = []
        with open(self._require(self.path("qm", "results.ndjson"), "qm"), "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    record = json.loads(line)
                    record["series_id"] = record.pop("id")
                    records.append(QMResult(**record))
        return records

    def _load_scatter(self) -> LatentScatter:
        path = self._require(self.path("detection", "scatter.csv"), "detect")
        with open(path, "r", encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
        points = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
        return LatentScatter(points, [r["tag"] for r in rows], [r["id"] for r in rows],
                             np.array([int(r["label"]) for r in rows], dtype=int))

    def cmd_render(self, kind: str, target=None, ids: Optional[Sequence[str]] = None,
                   methods: Optional[Sequence[str]] = None) -> RunManifest:
        """
        Render SVG figures.

        Args:
            kind: heatmap, boxplot, scatter or reconstruction
            target: Heatmap target; "features" renders one panel per latent unit
            ids: Instances to draw (heatmap, reconstruction)
            methods: Heatmap methods
        """
        if kind not in RENDER_KINDS:
            raise ParameterError(f"unknown render kind {kind!r}; choose from {RENDER_KINDS}")
        renderers = {
            "heatmap": lambda: self._render_heatmaps(target, ids, methods),
            "boxplot": self._render_boxplots,
            "scatter": lambda: self._record(plots.render_latent_scatter(
                self._load_scatter(), self.path("figures", "latent_scatter.svg"))),
            "reconstruction": lambda: self._render_reconstructions(ids),
        }
        return self._run(f"render-{kind}", renderers[kind])

    def _default_render_ids(self, dataset: Dataset, available: Optional[Sequence[str]] = None) -> List[str]:
        pool = dataset if available is None else dataset.by_ids(sorted(available))
        nok = [s.series_id for s in pool if s.label == NOK][:DEFAULT_RENDER_COUNT]
        ok = [s.series_id for s in pool if s.label == OK][:1]
        return nok + ok if nok + ok else pool.ids[:DEFAULT_RENDER_COUNT]

    def _render_heatmaps(self, target, ids, methods) -> None:
        dataset = self.load_dataset()
        raw_target = target if target is not None else self.config.explainer.target
        if str(raw_target).lower() == FEATURES_TARGET:
            self._render_feature_heatmaps(dataset, ids, methods)
            return
        heat_target = ExplanationTarget.parse(raw_target)
        chosen = list(methods) if methods else list(self.config.explainer.methods) + ["aee"]
        for method in chosen:
            explanations = self.load_explanations(method, heat_target)
            for sid in ids or self._default_render_ids(dataset, explanations):
                if sid not in explanations:
                    raise MissingArtifactError(f"{method} explanation of {sid}", f"explain --ids {sid}")
                name = sanitize_filename(f"heatmap_{method}_{heat_target.slug}_{sid}.svg")
                self._record(plots.render_heatmap(
                    dataset.by_ids([sid])[0].values, explanations[sid], self.path("figures", name)))

    def _render_feature_heatmaps(self, dataset: Dataset, ids, methods) -> None:
        model = self.load_model()
        for series in dataset.by_ids(list(ids) if ids else self._default_render_ids(dataset)):
            reconstruction = model.reconstruct(series).values
            configs = self.config.explainer.configs.for_series(self.config.master_seed, series.series_id)
            for method in methods or self.config.explainer.methods:
                explanations = explain_individual(model, series, method, configs)
                name = sanitize_filename(f"features_{method}_{series.series_id}.svg")
                self._record(plots.render_feature_heatmaps(
                    series.values, explanations, self.path("figures", name), reconstruction))

    def _render_boxplots(self) -> None:
        summary = summarize(self._load_qm_results())
        for class_name in ("NOK", "OK"):
            path = self.path("figures", f"qm_boxplot_{class_name.lower()}.svg")
            self._record(plots.render_qm_boxplot(summary, path, class_name))

    def _render_reconstructions(self, ids) -> None:
        model = self.load_model()
        dataset = self.load_dataset()
        for series in dataset.by_ids(list(ids) if ids else self._default_render_ids(dataset)):
            name = sanitize_filename(f"reconstruction_{series.series_id}.svg")
            self._record(plots.render_reconstruction(
                series.values, model.reconstruct(series).values, self.path("figures", name),
                title=f"{series.series_id} reconstruction"))

    def cmd_report(self) -> RunManifest:
        """Assemble detection report, QM summary and file index into report.json / report.md."""

        def body():
            detection = read_json(self._require(self.path("detection", "report.json"), "detect"))
            qm_path = self.path("qm", "summary.json")
            qm = read_json(qm_path) if os.path.exists(qm_path) else None
            stability_path = self.path("qm", "stability.json")
            stability = read_json(stability_path)["methods"] if os.path.exists(stability_path) else None
            index = {}
            manifest_dir = self.path("manifests")
            for name in sorted(os.listdir(manifest_dir)) if os.path.isdir(manifest_dir) else []:
                if name.endswith(".json") and name != "report.json":
                    manifest = read_json(os.path.join(manifest_dir, name))
                    index[manifest["command"]] = sorted(a["path"] for a in manifest["artifacts"])
            report = {"detection": detection, "qm": qm, "stability": stability, "files": index,
                      "master_seed": self.config.master_seed}
            self._record(write_json(report, self.path("report.json")))
            self._record(self._write_markdown(report))

        return self._run("report", body)

    def _write_markdown(self, report: Dict[str, Any]) -> str:
        lines = ["# Run report", "", f"Master seed: {report['master_seed']}", "", "## Detection", ""]
        detection = report["detection"]
        lines.append(f"eps {detection['eps']}, clusters {detection['clusters']}, "
                     f"outliers {detection['outliers']} of {detection['instances']}")
        if detection.get("report"):
            lines += ["", "| class | precision | recall | f1-score | support |", "|---|---|---|---|---|"]
            for cls in ("OK", "NOK"):
                m = detection["report"][cls]
                lines.append(f"| {cls} | {m['precision']:.2f} | {m['recall']:.2f} | {m['f1-score']:.2f} | {m['support']} |")
        if report["qm"]:
            lines += ["", "## Quality measurement", "", "| method | class | median noise | median xai | ordering rate |",
                      "|---|---|---|---|---|"]
            for method, classes in sorted(report["qm"]["methods"].items()):
                for cls, entry in sorted(classes.items()):
                    noise, xai = entry.get("noise", {}), entry.get("xai", {})
                    rate = entry.get("ordering_rate")
                    lines.append(
                        f"| {method} | {cls} | {noise.get('median', '-')} | {xai.get('median', '-')} | "
                        f"{'-' if rate is None else f'{rate:.2f}'} |"
                    )
        if report.get("stability"):
            lines += ["", "## Explanation stability", "", "| method | mean per-point std |", "|---|---|"]
            for method, value in sorted(report["stability"].items()):
                lines.append(f"| {method} | {value:.4g} |")
        lines += ["", "## Files", ""]
        for command, paths in sorted(report["files"].items()):
            lines.append(f"- {command}: {len(paths)} files")
        path = self.path("report.md")
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
        return path

    def cmd_run(self) -> List[RunManifest]:
        """Whole pipeline in order, rendering every figure kind."""
        manifests = [self.cmd_gen(), self.cmd_train(), self.cmd_detect(), self.cmd_explain(), self.cmd_aee(),
                     self.cmd_qm()]
        for kind in RENDER_KINDS:
            manifests.append(self.cmd_render(kind))
        manifests.append(self.cmd_report())
        return manifests


