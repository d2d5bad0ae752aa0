"""Run configuration shared by the pipeline stages and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

FOLD_AGGREGATION_MODES = ("mean-of-distances", "mean-of-features")

_PERCENTILE_KEYS = ("euclidean", "cosine", "mahalanobis")
_TOP_LEVEL_KEYS = (
    "percentiles",
    "epsilon_scale",
    "entropy_log_base",
    "safeguard_tolerance_pct",
    "positive_class",
    "fold_aggregation",
)


@dataclass(frozen=True)
class RunConfig:
    """Knobs for one monitoring run; every field has a safe default.

    ``fold_aggregation`` picks how per-fold feature sets collapse into one
    distance triple per sample: "mean-of-distances" computes a triple per
    fold and averages the triples, "mean-of-features" averages the feature
    vectors first and computes a single triple.
    """

    pct_euclidean: float = 80.0
    pct_cosine: float = 20.0
    pct_mahalanobis: float = 80.0
    epsilon_scale: float = 1e-6
    entropy_log_base: float = math.e
    safeguard_tolerance_pct: float = 5.0
    positive_class: int = 1
    fold_aggregation: str = "mean-of-distances"

    def __post_init__(self) -> None:
        for name in ("pct_euclidean", "pct_cosine", "pct_mahalanobis"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not 0.0 <= value <= 100.0:
                raise ConfigError(f"{name} must be in [0, 100], got {value}")
        epsilon_scale = float(self.epsilon_scale)
        object.__setattr__(self, "epsilon_scale", epsilon_scale)
        if epsilon_scale < 0.0:
            raise ConfigError(f"epsilon_scale must be nonnegative, got {epsilon_scale}")
        log_base = float(self.entropy_log_base)
        object.__setattr__(self, "entropy_log_base", log_base)
        if not log_base > 1.0:
            raise ConfigError(f"entropy_log_base must be greater than 1, got {log_base}")
        tolerance = float(self.safeguard_tolerance_pct)
        object.__setattr__(self, "safeguard_tolerance_pct", tolerance)
        if tolerance <= 0.0:
            raise ConfigError(f"safeguard_tolerance_pct must be positive, got {tolerance}")
        positive = int(self.positive_class)
        object.__setattr__(self, "positive_class", positive)
        if positive < 0:
            raise ConfigError(f"positive_class must be a class index, got {positive}")
        if self.fold_aggregation not in FOLD_AGGREGATION_MODES:
            raise ConfigError(
                f"fold_aggregation must be one of {FOLD_AGGREGATION_MODES}, "
                f"got {self.fold_aggregation!r}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> RunConfig:
        """Parse the JSON config document; unknown keys are rejected."""
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(raw) - set(_TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        percentiles = raw.get("percentiles")
        if percentiles is not None:
            if not isinstance(percentiles, dict):
                raise ConfigError("percentiles must be an object")
            bad = set(percentiles) - set(_PERCENTILE_KEYS)
            if bad:
                raise ConfigError(f"unknown percentile keys: {sorted(bad)}")
            for key in _PERCENTILE_KEYS:
                if key in percentiles:
                    kwargs[f"pct_{key}"] = _number(percentiles[key], f"percentiles.{key}")
        if "epsilon_scale" in raw:
            kwargs["epsilon_scale"] = _number(raw["epsilon_scale"], "epsilon_scale")
        if "entropy_log_base" in raw:
            kwargs["entropy_log_base"] = parse_log_base(raw["entropy_log_base"])
        if "safeguard_tolerance_pct" in raw:
            kwargs["safeguard_tolerance_pct"] = _number(
                raw["safeguard_tolerance_pct"], "safeguard_tolerance_pct"
            )
        if "positive_class" in raw:
            value = raw["positive_class"]
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"positive_class must be an integer, got {value!r}")
            kwargs["positive_class"] = value
        if "fold_aggregation" in raw:
            kwargs["fold_aggregation"] = raw["fold_aggregation"]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "percentiles": {
                "euclidean": self.pct_euclidean,
                "cosine": self.pct_cosine,
                "mahalanobis": self.pct_mahalanobis,
            },
            "epsilon_scale": self.epsilon_scale,
            "entropy_log_base": format_log_base(self.entropy_log_base),
            "safeguard_tolerance_pct": self.safeguard_tolerance_pct,
            "positive_class": self.positive_class,
            "fold_aggregation": self.fold_aggregation,
        }


def parse_log_base(value) -> float:
    """Accept the literal "e" or a number greater than 1."""
    if value == "e":
        return math.e
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f'entropy_log_base must be "e" or a number, got {value!r}')


def format_log_base(value: float) -> str | float:
    return "e" if value == math.e else value


def _number(value, name: str) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f"{name} must be a number, got {value!r}")
