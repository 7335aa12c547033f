"""Descriptor containers shared by the feature extractors."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# below this raw norm a descriptor or histogram is treated as all-zero
ZERO_NORM = 1e-9


class DescriptorKind(str, enum.Enum):
    SURF64 = "SURF64"
    HOG96 = "HOG96"
    HOF108 = "HOF108"
    MBH192 = "MBH192"

    @property
    def length(self) -> int:
        return _LENGTHS[self.value]


_LENGTHS = {"SURF64": 64, "HOG96": 96, "HOF108": 108, "MBH192": 192}


def l2_normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Scale to unit L2 norm along ``axis``; (near-)zero vectors become exactly zero."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    safe = np.where(norm > ZERO_NORM, norm, 1.0)
    return np.where(norm > ZERO_NORM, v / safe, 0.0)


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """``n`` descriptors of one kind, plus optional per-descriptor locations."""

    kind: DescriptorKind
    values: np.ndarray
    locations: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        kind = DescriptorKind(self.kind)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1, kind.length)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def empty(cls, kind) -> "DescriptorSet":
        kind = DescriptorKind(kind)
        return cls(kind, np.zeros((0, kind.length)))
