"""Weighted multi-factor suitability scoring for exploration candidates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

NORMALIZERS = ("identity", "complement", "max-normalize", "min-max")


class MissingFactor(KeyError):
    pass


def _normalize(values: list[float], step: str) -> list[float]:
    if step == "identity":
        return values
    if step == "complement":
        return [1.0 - v for v in values]
    if step == "max-normalize":
        top = max(values)
        return [v / top if top else 0.0 for v in values]
    if step == "min-max":
        lo, hi = min(values), max(values)
        return [(v - lo) / (hi - lo) if hi > lo else 0.0 for v in values]
    raise ValueError(f"unknown normalizer {step!r}")


@dataclass(frozen=True)
class ScoringConfig:
    """Weights per factor plus a normalizer chain per factor.

    A chain is applied left to right over the whole candidate column, so
    ``("max-normalize", "complement")`` turns a distance into ``1 - d/max(d)``.
    """

    weights: Mapping[str, float]
    normalizers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not any(w > 0 for w in self.weights.values()):
            raise ValueError("at least one weight must be positive")
        for factor, w in self.weights.items():
            if w < 0:
                raise ValueError(f"weight for {factor} is negative")
            chain = self.normalizers.get(factor)
            if chain is None:
                raise ValueError(f"weighted factor {factor!r} has no normalizer")
            for step in chain:
                if step not in NORMALIZERS:
                    raise ValueError(f"unknown normalizer {step!r} for {factor}")

    @classmethod
    def default(cls, utilization_complement: bool = False) -> "ScoringConfig":
        third = 1.0 / 3.0
        return cls(
            weights={"availability": third, "proximity": third, "utilization": third},
            normalizers={
                "availability": ("identity",),
                "proximity": ("max-normalize", "complement"),
                "utilization": ("complement",) if utilization_complement else ("identity",),
            },
        )

    def scaled(self, c: float) -> "ScoringConfig":
        return ScoringConfig({k: w * c for k, w in self.weights.items()}, self.normalizers)

    def to_dict(self) -> dict:
        return {"weights": dict(sorted(self.weights.items())),
                "normalizers": {k: list(v) for k, v in sorted(self.normalizers.items())}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScoringConfig":
        normalizers = {}
        for k, v in data.get("normalizers", {}).items():
            normalizers[k] = (v,) if isinstance(v, str) else tuple(v)
        return cls(dict(data["weights"]), normalizers)


def score_candidates(candidates: Sequence[tuple[str, Mapping[str, float]]],
                     config: ScoringConfig) -> list[tuple[str, float]]:
    """Rank candidates by S = sum_j w_j * f_j(x_j), best first, ties by id."""
    if not candidates:
        return []
    ids = [cid for cid, _ in candidates]
    scores = [0.0] * len(candidates)
    for factor, weight in sorted(config.weights.items()):
        if weight == 0:
            continue
        try:
            column = [float(values[factor]) for _, values in candidates]
        except KeyError:
            missing = [cid for cid, values in candidates if factor not in values]
            raise MissingFactor(f"{factor} missing for {', '.join(missing)}") from None
        for step in config.normalizers[factor]:
            column = _normalize(column, step)
        for i, v in enumerate(column):
            scores[i] += weight * v
    return sorted(zip(ids, scores), key=lambda pair: (-pair[1], pair[0]))
