"""Loss-ranked sample admission with an S-shape (or linear) growth schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class CurriculumSchedule:
    M: int = 50               # epoch at which every difficult sample is admitted
    k: float = 6.0            # sigmoid steepness
    easy_fraction: float = 0.8
    mode: str = "s-shape"     # or "linear"

    def validate(self) -> None:
        if self.M <= 0:
            raise ValueError(f"curriculum M must be positive, got {self.M}")
        if not 0.0 < self.easy_fraction < 1.0:
            raise ValueError("easy_fraction must lie in (0, 1)")
        if self.mode not in ("s-shape", "linear"):
            raise ValueError(f"unknown curriculum mode {self.mode!r}")


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def mu(t: float, schedule: CurriculumSchedule) -> float:
    """Admitted fraction of difficult samples at epoch t, exact 0 at t=0, 1 at M."""
    schedule.validate()
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t >= schedule.M:
        return 1.0
    if schedule.mode == "linear":
        return t / schedule.M
    k = schedule.k
    lo = _sigmoid(-k)
    raw = _sigmoid(k * (2.0 * t / schedule.M - 1.0))
    return min(max((raw - lo) / (_sigmoid(k) - lo), 0.0), 1.0)


def select_batch(
    per_sample_losses: np.ndarray, t: float, schedule: CurriculumSchedule
) -> np.ndarray:
    """Boolean inclusion mask: all easy rows plus the easiest admitted fraction
    of difficult rows. Ties break toward the earlier original index."""
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    bsz = losses.shape[0]
    if bsz < 1:
        raise ValueError("batch must contain at least one sample")
    order = np.argsort(losses, kind="stable")
    n_easy = int(math.ceil(schedule.easy_fraction * bsz))
    n_diff = bsz - n_easy
    admitted = int(math.floor(mu(t, schedule) * n_diff + 0.5)) if n_diff else 0
    include = np.zeros(bsz, dtype=bool)
    include[order[: n_easy + admitted]] = True
    return include
