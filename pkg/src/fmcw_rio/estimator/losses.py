"""Robust losses on whitened residual norms.

``cost(s)`` takes the squared norm ``s = |r|^2`` and returns rho(s) on the
same scale as ``s / 2``; ``weight(s)`` is the IRLS weight rho'(s) * 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class RobustLoss:
    kind: str = "none"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "huber", "cauchy"):
            raise ConfigError(f"unknown loss {self.kind!r}", "kind")
        if not self.scale > 0:
            raise ConfigError("loss scale must be positive", "scale")

    def cost(self, s):
        s = np.asarray(s, dtype=float)
        c = self.scale
        if self.kind == "huber":
            r = np.sqrt(s)
            return np.where(r <= c, 0.5 * s, c * r - 0.5 * c * c)
        if self.kind == "cauchy":
            return 0.5 * c * c * np.log1p(s / (c * c))
        return 0.5 * s

    def weight(self, s):
        s = np.asarray(s, dtype=float)
        c = self.scale
        if self.kind == "huber":
            r = np.sqrt(s)
            return np.where(r <= c, 1.0, c / np.maximum(r, c))
        if self.kind == "cauchy":
            return 1.0 / (1.0 + s / (c * c))
        return np.ones_like(s)


NONE = RobustLoss()


def huber(scale: float = 1.345) -> RobustLoss:
    return RobustLoss("huber", scale)


def cauchy(scale: float = 1.0) -> RobustLoss:
    return RobustLoss("cauchy", scale)
