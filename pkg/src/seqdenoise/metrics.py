"""Full-catalog top-K ranking metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import PADDING_IDX

DEFAULT_KS = (5, 10, 20)
MRR_K = 20


@dataclass
class MetricsReport:
    hr: dict[int, float]
    ndcg: dict[int, float]
    mrr: float
    user_count: int
    ks: tuple[int, ...] = DEFAULT_KS

    def to_flat_dict(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {}
        for k in self.ks:
            out[f"hr@{k}"] = self.hr[k]
            out[f"ndcg@{k}"] = self.ndcg[k]
        out[f"mrr@{MRR_K}"] = self.mrr
        out["users"] = self.user_count
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_flat_dict(), sort_keys=True)


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """1-based rank of the target under pessimistic tie handling.

    Every non-target item scoring >= the target counts ahead of it; the
    padding index never competes.
    """
    if target == PADDING_IDX:
        raise ValueError("target cannot be the padding index")
    scores = np.asarray(scores)
    t_score = scores[target]
    candidates = scores[PADDING_IDX + 1 :]
    greater = int(np.count_nonzero(candidates > t_score))
    ties = int(np.count_nonzero(candidates == t_score)) - 1
    return 1 + greater + ties


def accumulate(ranks: Sequence[int], ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    """HR/NDCG at each K plus MRR@20 averaged over users."""
    if len(ranks) == 0:
        raise ValueError("no ranks to accumulate")
    arr = np.asarray(ranks, dtype=np.int64)
    hr = {k: float(np.mean(arr <= k)) for k in ks}
    ndcg = {
        k: float(np.mean(np.where(arr <= k, 1.0 / np.log2(arr + 1.0), 0.0)))
        for k in ks
    }
    mrr = float(np.mean(np.where(arr <= MRR_K, 1.0 / arr, 0.0)))
    return MetricsReport(hr=hr, ndcg=ndcg, mrr=mrr, user_count=len(arr), ks=tuple(ks))


def merge_rank_shards(shards: Sequence[Sequence[int]], ks=DEFAULT_KS) -> MetricsReport:
    merged: list[int] = []
    for shard in shards:
        merged.extend(shard)
    return accumulate(merged, ks)
