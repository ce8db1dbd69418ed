"""
Quality Measurement Module

Scores explanations by how far perturbing the points they mark moves the series in latent
space, compared with perturbing the same number of random points. A faithful explanation
should satisfy d_self <= d_random <= d_xai.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.dataset import NOK, OK, Dataset, TimeSeries, series_values
from src.models.autoencoder import AEModel
from src.utils.errors import DataError, DimensionError, ParameterError
from src.utils.helper_functions import ceil_count, derive_seed
from src.utils.logger import get_logger
from src.xai.ensemble import EnsembleConfig, aggregate, scale_values
from src.xai.explainers import ExplainerConfigs, explain
from src.xai.explanation import Explanation, ExplanationTarget

logger = get_logger()

STRATEGIES = ("shuffle", "zero", "mean")
CLASS_NAMES = {OK: "OK", NOK: "NOK"}
CONDITIONS = ("noise", "xai")


@dataclass(frozen=True)
class PerturbationConfig:
    """
    Attributes:
        fraction: Share k of time steps to perturb, in (0, 1]
        strategy: shuffle (permute the chosen values among themselves), zero or mean
        seed: Seed for random positions and shuffling
    """

    fraction: float = 0.1
    strategy: str = "shuffle"
    seed: int = 0

    def validate(self, length: Optional[int] = None) -> "PerturbationConfig":
        if not 0.0 < self.fraction <= 1.0:
            raise ParameterError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if length is not None and self.count(length) < 1:
            raise ParameterError(f"fraction {self.fraction} selects no point of a length-{length} series")
        return self

    def count(self, length: int) -> int:
        return min(ceil_count(self.fraction, length), length)


@dataclass
class Perturbation:
    """
    Attributes:
        values: Perturbed series
        positions: Sorted indices that were selected
        degenerate: True when the importances were all equal and the first indices were taken
    """

    values: np.ndarray
    positions: np.ndarray
    degenerate: bool = False


def _apply_strategy(x: np.ndarray, positions: np.ndarray, strategy: str, rng: np.random.Generator) -> np.ndarray:
    out = x.copy()
    if strategy == "shuffle":
        out[positions] = x[positions][rng.permutation(len(positions))]
    elif strategy == "zero":
        out[positions] = 0.0
    else:
        out[positions] = x.mean()
    return out


def top_positions(importance: np.ndarray, count: int) -> Tuple[np.ndarray, bool]:
    """
    The `count` positions with the largest |importance|, ties to the lower index.

    Returns:
        Tuple[np.ndarray, bool]: (sorted positions, all-importances-equal flag)
    """
    magnitude = np.abs(np.asarray(importance, dtype=np.float64))
    order = np.lexsort((np.arange(magnitude.shape[0]), -magnitude))
    degenerate = bool(magnitude.size) and bool(np.all(magnitude == magnitude[0]))
    return np.sort(order[:count]), degenerate


def perturb_by_explanation(series, explanation: Union[Explanation, np.ndarray],
                           config: PerturbationConfig = PerturbationConfig()) -> Perturbation:
    """
    Perturb the ceil(k N) most important points of the series.

    Args:
        series: TimeSeries or 1-D array
        explanation: Explanation (or raw importance vector) of the same length
        config: Fraction, strategy and seed

    Returns:
        Perturbation: Perturbed copy; every other position untouched
    """
    x = series_values(series)
    importance = explanation.values if isinstance(explanation, Explanation) else np.asarray(explanation, dtype=np.float64)
    if importance.shape != x.shape:
        raise DimensionError(f"explanation length {importance.shape} != series length {x.shape}")
    config.validate(x.shape[0])
    positions, degenerate = top_positions(importance, config.count(x.shape[0]))
    if degenerate:
        logger.debug("All importances equal; perturbing the first positions")
    rng = np.random.default_rng(config.seed)
    return Perturbation(_apply_strategy(x, positions, config.strategy, rng), positions, degenerate)


def perturb_random(series, config: PerturbationConfig = PerturbationConfig()) -> Perturbation:
    """
    Perturb ceil(k N) uniformly chosen points with the same strategy.

    Args:
        series: TimeSeries or 1-D array
        config: Fraction, strategy and seed

    Returns:
        Perturbation: Perturbed copy
    """
    x = series_values(series)
    config.validate(x.shape[0])
    rng = np.random.default_rng(config.seed)
    positions = np.sort(rng.choice(x.shape[0], size=config.count(x.shape[0]), replace=False))
    return Perturbation(_apply_strategy(x, positions, config.strategy, rng), positions)


def latent_distance(latent_a: np.ndarray, latent_b: np.ndarray) -> np.ndarray:
    """Euclidean latent distance divided by sqrt(latent_dim), along the last axis."""
    diff = np.asarray(latent_a, dtype=np.float64) - np.asarray(latent_b, dtype=np.float64)
    return np.sqrt(np.sum(diff * diff, axis=-1)) / np.sqrt(diff.shape[-1])


def qm_distance(model: AEModel, series_a, series_b) -> float:
    """
    ||E(a) - E(b)|| / sqrt(latent_dim).

    Args:
        model: Trained model
        series_a: First series
        series_b: Second series

    Returns:
        float: Non-negative distance; 0 for identical inputs
    """
    return float(latent_distance(model.encode(series_values(series_a)), model.encode(series_values(series_b))))


@dataclass(frozen=True)
class QMConfig:
    """
    Attributes:
        perturbation: Fraction and strategy (its seed is replaced per instance)
        trials: Random-baseline draws averaged per instance
        ok_count: OK instances sampled for the evaluation protocol
        stability_runs: Seeded explainer re-runs per instance for the stability measurement
        stability_instances: Evaluated instances re-explained for stability (0 skips it)
    """

    perturbation: PerturbationConfig = PerturbationConfig()
    trials: int = 5
    ok_count: int = 100
    stability_runs: int = 3
    stability_instances: int = 5

    def validate(self) -> "QMConfig":
        self.perturbation.validate()
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")
        if self.ok_count < 0:
            raise ParameterError(f"ok_count must be >= 0, got {self.ok_count}")
        if self.stability_runs < 2:
            raise ParameterError(f"stability_runs must be >= 2, got {self.stability_runs}")
        if self.stability_instances < 0:
            raise ParameterError(f"stability_instances must be >= 0, got {self.stability_instances}")
        return self


@dataclass
class QMResult:
    """
    Distances of one instance under one method.

    Attributes:
        series_id: Instance id
        label: 0 (OK) or 1 (NOK)
        method: Explanation method
        d_self: qm(t, t), always 0
        d_random: Mean qm(t, t_r) over the random trials
        d_xai: qm(t, t_c)
        ordering_satisfied: d_self <= d_random <= d_xai
        d_random_trials: Per-trial random distances
        degenerate: Importance ties forced the first positions
        d_random_normalized: d_random after per-method min-max normalization
        d_xai_normalized: d_xai after per-method min-max normalization
    """

    series_id: str
    label: int
    method: str
    d_self: float
    d_random: float
    d_xai: float
    ordering_satisfied: bool
    d_random_trials: List[float] = field(default_factory=list)
    degenerate: bool = False
    d_random_normalized: float = 0.0
    d_xai_normalized: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.series_id,
            "label": self.label,
            "method": self.method,
            "d_self": self.d_self,
            "d_random": self.d_random,
            "d_xai": self.d_xai,
            "ordering_satisfied": self.ordering_satisfied,
            "d_random_trials": list(self.d_random_trials),
            "degenerate": self.degenerate,
            "d_random_normalized": self.d_random_normalized,
            "d_xai_normalized": self.d_xai_normalized,
        }


@dataclass
class IQRStats:
    count: int
    q1: float
    median: float
    q3: float
    lower_fence: float
    upper_fence: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def to_dict(self) -> Dict[str, Any]:
        return {"count": self.count, "q1": self.q1, "median": self.median, "q3": self.q3,
                "iqr": self.iqr, "lower_fence": self.lower_fence, "upper_fence": self.upper_fence}


def iqr_stats(values: Sequence[float]) -> IQRStats:
    """
    Quartiles (linear interpolation) and fences at 1.5 IQR beyond Q1 and Q3.

    Raises:
        DataError: On empty input
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise DataError("iqr_stats needs at least one value")
    q1, median, q3 = (float(q) for q in np.quantile(values, [0.25, 0.5, 0.75]))
    spread = q3 - q1
    return IQRStats(int(values.size), q1, median, q3, q1 - 1.5 * spread, q3 + 1.5 * spread)


@dataclass
class QMSummary:
    """
    IQR statistics per method x class x condition, on the normalized distances.

    Attributes:
        stats: (method, class, condition) -> IQRStats, or None for an empty stratum
        ordering_rates: (method, class) -> share of instances satisfying the ordering
    """

    stats: Dict[Tuple[str, str, str], Optional[IQRStats]] = field(default_factory=dict)
    ordering_rates: Dict[Tuple[str, str], Optional[float]] = field(default_factory=dict)
    normalization: str = "latent distance / sqrt(latent_dim), then min-max per method over d_random and d_xai"

    @property
    def methods(self) -> List[str]:
        return sorted({key[0] for key in self.stats})

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"normalization": self.normalization, "methods": {}}
        for (method, cls, condition), stats in sorted(self.stats.items()):
            entry = out["methods"].setdefault(method, {}).setdefault(cls, {})
            entry[condition] = stats.to_dict() if stats is not None else {"empty": True}
            entry["ordering_rate"] = self.ordering_rates.get((method, cls))
        return out

    def to_rows(self) -> List[List[Any]]:
        rows = []
        for (method, cls, condition), stats in sorted(self.stats.items()):
            if stats is None:
                rows.append([method, cls, condition, 0, "", "", "", "", "", "empty"])
            else:
                rows.append([method, cls, condition, stats.count, stats.q1, stats.median, stats.q3,
                             stats.lower_fence, stats.upper_fence, ""])
        return rows


QM_CSV_HEADER = ["method", "class", "condition", "count", "q1", "median", "q3", "lower_fence", "upper_fence", "note"]


@dataclass
class QMEvaluation:
    results: List[QMResult]
    summary: QMSummary


ExplanationSource = Union[Callable[[TimeSeries], Explanation], Mapping[str, Explanation]]


def _normalize_method(results: List[QMResult]) -> None:
    pooled = np.array([r.d_random for r in results] + [r.d_xai for r in results])
    if pooled.size == 0:
        return
    low, high = float(pooled.min()), float(pooled.max())
    span = high - low
    for r in results:
        r.d_random_normalized = (r.d_random - low) / span if span > 0 else 0.0
        r.d_xai_normalized = (r.d_xai - low) / span if span > 0 else 0.0


def summarize(results: Sequence[QMResult]) -> QMSummary:
    """Per method x class x condition IQR statistics of the normalized distances."""
    summary = QMSummary()
    for method in sorted({r.method for r in results}):
        members = [r for r in results if r.method == method]
        for label, cls in CLASS_NAMES.items():
            stratum = [r for r in members if r.label == label]
            summary.ordering_rates[(method, cls)] = (
                float(np.mean([r.ordering_satisfied for r in stratum])) if stratum else None
            )
            for condition in CONDITIONS:
                if not stratum:
                    summary.stats[(method, cls, condition)] = None
                    continue
                attribute = "d_random_normalized" if condition == "noise" else "d_xai_normalized"
                summary.stats[(method, cls, condition)] = iqr_stats([getattr(r, attribute) for r in stratum])
    return summary


def evaluate_instance(
    model: AEModel, series: TimeSeries, explanation: Explanation, config: QMConfig, master_seed: int
) -> QMResult:
    """Distances of one labeled instance; every seed derives from (master_seed, id, arm, trial)."""
    if series.label not in (OK, NOK):
        raise DataError(f"series {series.series_id!r} has no OK/NOK label")
    base = config.perturbation
    randoms = [
        perturb_random(series, replace(base, seed=derive_seed(master_seed, series.series_id, "random", trial)))
        for trial in range(config.trials)
    ]
    guided = perturb_by_explanation(series, explanation, replace(base, seed=derive_seed(master_seed, series.series_id, "xai")))

    origin = model.encode(series.values)
    d_self = float(latent_distance(origin, model.encode(series.values)))
    latents = model.encode(np.stack([p.values for p in randoms] + [guided.values]))
    trials = [float(d) for d in latent_distance(origin[None, :], latents[:config.trials])]
    d_random = float(np.mean(trials))
    d_xai = float(latent_distance(origin, latents[-1]))
    return QMResult(
        series.series_id, int(series.label), explanation.method, d_self, d_random, d_xai,
        bool(d_self <= d_random <= d_xai), trials, guided.degenerate,
    )


def evaluate(
    model: AEModel,
    dataset: Dataset,
    source: ExplanationSource,
    config: QMConfig = QMConfig(),
    master_seed: int = 0,
) -> QMEvaluation:
    """
    Quality measurement of one method over a labeled dataset.

    Args:
        model: Trained model
        dataset: Labeled series
        source: Callable series -> Explanation, or a mapping series id -> Explanation
        config: Perturbation settings and random-trial count
        master_seed: Root of every per-instance seed

    Returns:
        QMEvaluation: Per-instance results (with normalized distances) and the summary
    """
    config.validate()
    results: List[QMResult] = []
    for series in dataset:
        if isinstance(source, Mapping):
            if series.series_id not in source:
                raise DataError(f"no explanation for series {series.series_id!r}")
            explanation = source[series.series_id]
        else:
            explanation = source(series)
        results.append(evaluate_instance(model, series, explanation, config, master_seed))

    for method in sorted({r.method for r in results}):
        _normalize_method([r for r in results if r.method == method])
    summary = summarize(results)
    for (method, cls), rate in sorted(summary.ordering_rates.items()):
        if rate is not None:
            logger.info(f"QM {method} / {cls}: ordering satisfied for {rate:.1%} of instances")
    return QMEvaluation(results, summary)


def evaluate_methods(
    model: AEModel,
    dataset: Dataset,
    sources: Mapping[str, ExplanationSource],
    config: QMConfig = QMConfig(),
    master_seed: int = 0,
) -> QMEvaluation:
    """evaluate for several methods, merged into one summary."""
    results: List[QMResult] = []
    for method in sorted(sources):
        results.extend(evaluate(model, dataset, sources[method], config, master_seed).results)
    return QMEvaluation(results, summarize(results))


def select_protocol_instances(dataset: Dataset, ok_count: int = 100, seed: int = 0) -> Dataset:
    """
    Evaluation protocol sample: `ok_count` random OK instances plus every NOK instance,
    in dataset order.
    """
    labels = dataset.labels
    ok_indices = np.flatnonzero(labels == OK)
    nok_indices = np.flatnonzero(labels == NOK)
    rng = np.random.default_rng(seed)
    if ok_count < len(ok_indices):
        ok_indices = rng.choice(ok_indices, size=ok_count, replace=False)
    chosen = np.sort(np.concatenate([ok_indices, nok_indices]).astype(int))
    return dataset.subset(chosen)


def explanation_stability(explanations: Sequence[Union[Explanation, np.ndarray]]) -> float:
    """
    Mean per-point standard deviation of min-max scaled explanations across repeated runs.

    Lower is more stable.
    """
    if len(explanations) < 2:
        raise ParameterError("stability needs at least two explanations")
    scaled = np.stack([
        scale_values(e.values if isinstance(e, Explanation) else np.asarray(e, dtype=np.float64))[0]
        for e in explanations
    ])
    return float(np.mean(np.std(scaled, axis=0)))


@dataclass
class StabilityReport:
    """
    Explanation stability across seeded re-runs.

    Attributes:
        runs: Re-runs per instance
        per_instance: Stability per series id and method
        methods: Mean stability per method over the instances
    """

    runs: int
    per_instance: Dict[str, Dict[str, float]]
    methods: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {"runs": self.runs, "instances": sorted(self.per_instance), "methods": dict(self.methods),
                "per_instance": {sid: dict(v) for sid, v in sorted(self.per_instance.items())}}


def measure_stability(
    model: AEModel,
    dataset: Dataset,
    methods: Sequence[str],
    configs: ExplainerConfigs = ExplainerConfigs(),
    target=None,
    runs: int = 3,
    master_seed: int = 0,
    ensemble: EnsembleConfig = EnsembleConfig(),
    ensemble_methods: Optional[Sequence[str]] = None,
) -> StabilityReport:
    """
    Re-explain every series `runs` times with derived sampling seeds and score each method with
    explanation_stability. When every ensemble member is among `methods`, the aggregate of
    each run's members is scored too, as method "aee".

    Args:
        model: Trained model
        dataset: Series to re-explain
        methods: Explainers to re-run
        configs: Method settings; their seeds are replaced per run and series
        target: Explanation target
        runs: Re-runs per series (>= 2)
        master_seed: Root of the per-run seeds
        ensemble: Aggregation settings
        ensemble_methods: Members of the aggregate (all of `methods` by default)

    Returns:
        StabilityReport: Lower values are more stable
    """
    if runs < 2:
        raise ParameterError(f"stability needs at least two runs, got {runs}")
    target = ExplanationTarget.parse(target).check(model.latent_dim)
    methods = sorted(methods)
    members = sorted(ensemble_methods or methods)
    per_instance: Dict[str, Dict[str, float]] = {}
    for series in dataset:
        repeated: Dict[str, List[Explanation]] = {m: [] for m in methods}
        for run in range(runs):
            run_seed = derive_seed(master_seed, "stability", run) & 0x7FFFFFFF
            seeded = configs.for_series(run_seed, series.series_id)
            for method in methods:
                repeated[method].append(explain(model, series, method, target, seeded))
        if len(members) >= 2 and set(members) <= set(methods):
            repeated["aee"] = [
                aggregate({m: repeated[m][run] for m in members}, ensemble.bounds, ensemble.weight_map()).as_explanation()
                for run in range(runs)
            ]
        per_instance[series.series_id] = {m: explanation_stability(v) for m, v in sorted(repeated.items())}
    names = sorted({m for scores in per_instance.values() for m in scores})
    means = {m: float(np.mean([scores[m] for scores in per_instance.values()])) for m in names}
    for method, value in means.items():
        logger.info(f"Stability of {method}: {value:.4g} over {len(per_instance)} series")
    return StabilityReport(runs, per_instance, means)
