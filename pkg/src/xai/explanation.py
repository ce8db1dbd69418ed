"""
Explanation Module

Per-time-step importance vectors, their targets (one latent unit or all of them combined)
and their CSV / NDJSON exports.
"""

import re
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.dataset import TimeSeries
from src.utils.errors import DimensionError, ParameterError
from src.utils.helper_functions import write_csv, write_ndjson

METHODS = ("gradcam", "lime", "shap", "lrp", "aee")


@dataclass(frozen=True)
class ExplanationTarget:
    """
    What an explanation explains: latent unit `index`, or every unit combined (index None).
    """

    index: Optional[int] = None

    @classmethod
    def latent(cls, index: int) -> "ExplanationTarget":
        if index < 0:
            raise ParameterError(f"latent index must be >= 0, got {index}")
        return cls(int(index))

    @classmethod
    def combined(cls) -> "ExplanationTarget":
        return cls(None)

    @classmethod
    def parse(cls, value: Union[str, int, "ExplanationTarget", None]) -> "ExplanationTarget":
        """Accept "combined", "latent(2)", "latent2", "latent:2" or a bare index."""
        if isinstance(value, ExplanationTarget):
            return value
        if value is None:
            return cls.combined()
        if isinstance(value, (int, np.integer)):
            return cls.latent(int(value))
        text = str(value).strip().lower()
        if text == "combined":
            return cls.combined()
        match = re.fullmatch(r"(?:latent)?[(:]?\s*(\d+)\s*\)?", text)
        if not match:
            raise ParameterError(f"invalid explanation target: {value!r}")
        return cls.latent(int(match.group(1)))

    @property
    def is_combined(self) -> bool:
        return self.index is None

    def check(self, latent_dim: int) -> "ExplanationTarget":
        if self.index is not None and self.index >= latent_dim:
            raise ParameterError(f"latent index {self.index} out of range for latent_dim {latent_dim}")
        return self

    @property
    def slug(self) -> str:
        return "combined" if self.index is None else f"latent{self.index}"

    def __str__(self) -> str:
        return "combined" if self.index is None else f"latent({self.index})"


@dataclass
class Explanation:
    """
    Attributes:
        values: Importance per time step
        method: gradcam, lime, shap, lrp or aee
        target: Explained latent unit or combined
        series_id: Id of the explained series
        metadata: Method details (segments, lambda used, degenerate flags, ...)
    """

    values: np.ndarray
    method: str
    target: ExplanationTarget = field(default_factory=ExplanationTarget.combined)
    series_id: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.method not in METHODS:
            raise ParameterError(f"unknown explanation method {self.method!r}")
        if not np.all(np.isfinite(self.values)):
            raise DimensionError(f"{self.method} explanation contains non-finite values")

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.series_id,
            "method": self.method,
            "target": str(self.target),
            "values": self.values,
            "metadata": self.metadata,
        }


def combine_abs(maps: Sequence[np.ndarray]) -> np.ndarray:
    """
    Combined-mode rule: mean of the absolute per-feature maps.

    Args:
        maps: One map per latent unit, all the same length

    Returns:
        np.ndarray: Combined map
    """
    stacked = np.stack([np.asarray(m, dtype=np.float64) for m in maps])
    return np.mean(np.abs(stacked), axis=0)


def combine_explanations(explanations: Sequence[Explanation]) -> Explanation:
    """Combine per-feature explanations of one method and series into a combined one."""
    if not explanations:
        raise ParameterError("nothing to combine")
    first = explanations[0]
    if any(e.method != first.method or len(e) != len(first) for e in explanations):
        raise DimensionError("per-feature explanations disagree on method or length")
    return Explanation(
        combine_abs([e.values for e in explanations]),
        first.method,
        ExplanationTarget.combined(),
        first.series_id,
        {"combined_from": [str(e.target) for e in explanations]},
    )


def write_explanation_csv(explanation: Explanation, path: str) -> str:
    """index,value rows."""
    return write_csv(["index", "value"], enumerate(explanation.values), path)


def write_explanations_ndjson(explanations: Iterable[Explanation], path: str) -> str:
    return write_ndjson((e.to_record() for e in explanations), path)


def read_explanations_ndjson(path: str) -> List[Explanation]:
    """Read explanations written by write_explanations_ndjson."""
    explanations = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            explanations.append(Explanation(
                record["values"], record["method"], ExplanationTarget.parse(record["target"]),
                record.get("id", ""), record.get("metadata", {}),
            ))
    return explanations


def explain_input(model, series) -> Tuple[np.ndarray, str]:
    """
    Normalized series every explainer works on, plus its id.

    Args:
        model: AEModel
        series: TimeSeries or 1-D array of the model's input length

    Returns:
        Tuple[np.ndarray, str]: (L,) normalized samples and the series id ("" for arrays)
    """
    x = model.prepare(series)
    if x.shape[0] != 1:
        raise DimensionError("explainers take one series at a time")
    series_id = series.series_id if isinstance(series, TimeSeries) else ""
    return x[0, 0], series_id
