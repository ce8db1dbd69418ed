"""
Explainers Module

Registry and dispatch for the four encoder explainers. Every explainer maps
(model, series, target, config) to an Explanation and can also produce the per-latent maps
for all units at once.
"""

from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

from src.models.autoencoder import AEModel
from src.utils.errors import ParameterError
from src.utils.helper_functions import derive_seed
from src.utils.logger import get_logger
from src.xai.explanation import Explanation, ExplanationTarget, explain_input
from src.xai.gradcam import gradcam_explain, gradcam_feature_maps
from src.xai.kernel_shap import KernelShapConfig, kshap_explain, kshap_feature_maps
from src.xai.lime import LimeConfig, lime_explain, lime_feature_maps
from src.xai.lrp import LrpConfig, lrp_explain, lrp_feature_maps

logger = get_logger()

EXPLAINER_METHODS = ("gradcam", "lime", "shap", "lrp")


@dataclass(frozen=True)
class ExplainerConfigs:
    """Per-method settings handed to the explainers."""

    lime: LimeConfig = LimeConfig()
    shap: KernelShapConfig = KernelShapConfig()
    lrp: LrpConfig = LrpConfig()

    def validate(self) -> "ExplainerConfigs":
        self.lime.validate()
        self.shap.validate()
        self.lrp.validate()
        return self

    def for_series(self, master_seed: int, series_id: str) -> "ExplainerConfigs":
        """Copy whose sampling seeds derive from (master_seed, method, series_id)."""
        return replace(
            self,
            lime=replace(self.lime, seed=derive_seed(master_seed, "lime", series_id) & 0x7FFFFFFF),
            shap=replace(self.shap, seed=derive_seed(master_seed, "shap", series_id) & 0x7FFFFFFF),
        )


@dataclass(frozen=True)
class Explainer:
    name: str
    explain: Callable[..., Explanation]
    feature_maps: Callable[..., Any]
    config_key: Optional[str] = None

    def config(self, configs: ExplainerConfigs):
        return getattr(configs, self.config_key) if self.config_key else None


EXPLAINERS: Dict[str, Explainer] = {
    "gradcam": Explainer("gradcam", gradcam_explain, gradcam_feature_maps),
    "lime": Explainer("lime", lime_explain, lime_feature_maps, "lime"),
    "shap": Explainer("shap", kshap_explain, kshap_feature_maps, "shap"),
    "lrp": Explainer("lrp", lrp_explain, lrp_feature_maps, "lrp"),
}


def get_explainer(method: str) -> Explainer:
    if method not in EXPLAINERS:
        raise ParameterError(f"unknown explainer {method!r}; choose from {sorted(EXPLAINERS)}")
    return EXPLAINERS[method]


def explain(
    model: AEModel, series, method: str, target=None, configs: Optional[ExplainerConfigs] = None
) -> Explanation:
    """
    Explain one series with the named method.

    Args:
        model: Trained model
        series: Series to explain
        method: gradcam, lime, shap or lrp
        target: ExplanationTarget, latent index or "combined" (default)
        configs: Method settings

    Returns:
        Explanation: Heatmap of the series length
    """
    explainer = get_explainer(method)
    configs = configs or ExplainerConfigs()
    config = explainer.config(configs)
    if config is None:
        return explainer.explain(model, series, target)
    return explainer.explain(model, series, target, config)


def feature_maps(model: AEModel, series, method: str, configs: Optional[ExplainerConfigs] = None):
    """(latent_dim, L) per-latent maps of one method, plus the method metadata."""
    explainer = get_explainer(method)
    config = explainer.config(configs or ExplainerConfigs())
    if config is None:
        return explainer.feature_maps(model, series)
    return explainer.feature_maps(model, series, config)


def combined(model: AEModel, series, method: str, configs: Optional[ExplainerConfigs] = None) -> Explanation:
    """Combined-mode explanation: mean of the absolute per-latent explanations."""
    return explain(model, series, method, ExplanationTarget.combined(), configs)


def explain_individual(
    model: AEModel, series, method: str, configs: Optional[ExplainerConfigs] = None
) -> List[Explanation]:
    """
    One explanation per latent unit, computed in a single pass where the method allows.

    Returns:
        List[Explanation]: Index i explains latent unit i
    """
    _, series_id = explain_input(model, series)
    maps, metadata = feature_maps(model, series, method, configs)
    return [
        Explanation(maps[i], method, ExplanationTarget.latent(i), series_id, dict(metadata))
        for i in range(model.latent_dim)
    ]


def explain_all(
    model: AEModel,
    series,
    methods: Sequence[str] = EXPLAINER_METHODS,
    target=None,
    configs: Optional[ExplainerConfigs] = None,
) -> Dict[str, Explanation]:
    """Explanations of one series by several methods, keyed by method."""
    return {method: explain(model, series, method, target, configs) for method in methods}
