"""Training objectives: contrastive, pairwise ranking, catalog CE, weighted total."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import torch
import torch.nn.functional as F

from .data import PADDING_IDX

PROB_EPS = 1e-12


@dataclass
class LossBreakdown:
    l_rec: torch.Tensor
    l_scl: torch.Tensor
    l_bpr: torch.Tensor
    l_reg: torch.Tensor
    total: torch.Tensor
    per_sample_rec: torch.Tensor

    def summary(self) -> dict[str, float]:
        return {
            "l_rec": float(self.l_rec.detach()),
            "l_scl": float(self.l_scl.detach()),
            "l_bpr": float(self.l_bpr.detach()),
            "l_reg": float(self.l_reg.detach()),
            "total": float(self.total.detach()),
        }


def scl_loss(
    e_hat: torch.Tensor,
    h: torch.Tensor,
    keep_drop: torch.Tensor,
    mask: torch.Tensor,
    tau_c: float,
    exclude_positives: bool = False,
) -> torch.Tensor:
    """Per-sample contrastive loss pairing the soft user vector with kept items.

    Kept (relevant) items are positives; the denominator pools every real
    item in the row unless exclude_positives limits it to dropped items
    plus the positive itself. Rows without positives contribute zero.
    """
    if tau_c <= 0:
        raise ValueError(f"tau_c must be positive, got {tau_c}")
    sims = F.cosine_similarity(e_hat.unsqueeze(1), h, dim=-1)
    logits = sims / tau_c
    neg_inf = float("-inf")
    pos_mask = ~keep_drop & mask

    if exclude_positives:
        dropped = keep_drop & mask
        base = torch.logsumexp(logits.masked_fill(~dropped, neg_inf), dim=1)
        log_denom = torch.logaddexp(base.unsqueeze(1), logits)
    else:
        log_denom = torch.logsumexp(
            logits.masked_fill(~mask, neg_inf), dim=1, keepdim=True
        )

    terms = torch.where(pos_mask, logits - log_denom, torch.zeros_like(logits))
    counts = pos_mask.sum(dim=1)
    safe = counts.clamp(min=1).to(logits.dtype)
    loss = -terms.sum(dim=1) / safe
    return torch.where(counts > 0, loss, torch.zeros_like(loss))


def bpr_loss(
    e_bar: torch.Tensor, target_vecs: torch.Tensor, negative_vecs: torch.Tensor
) -> torch.Tensor:
    """Per-sample pairwise ranking loss on inner-product scores."""
    r_pos = (e_bar * target_vecs).sum(dim=-1)
    r_neg = (e_bar * negative_vecs).sum(dim=-1)
    return -F.logsigmoid(r_pos - r_neg)


def score_catalog(
    e_hat: torch.Tensor,
    item_vectors: torch.Tensor,
    history_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Inner-product scores for every catalog item; padding masked to -inf."""
    z = e_hat @ item_vectors.t()
    pad_col = torch.zeros(z.shape[1], dtype=torch.bool, device=z.device)
    pad_col[PADDING_IDX] = True
    z = z.masked_fill(pad_col, float("-inf"))
    if history_mask is not None:
        z = z.masked_fill(history_mask, float("-inf"))
    return z


def rec_loss(z: torch.Tensor, targets: torch.Tensor):
    """Full binary cross-entropy over the catalog softmax, per sample and mean.

    The one-hot target contributes -log(yhat_t); every other item
    contributes -log(1 - yhat_i).
    """
    probs = torch.softmax(z, dim=1).clamp(PROB_EPS, 1.0 - PROB_EPS)
    log_p = torch.log(probs)
    log_not_p = torch.log1p(-probs)
    idx = targets.unsqueeze(1)
    per_sample = -(
        log_p.gather(1, idx).squeeze(1)
        + log_not_p.sum(dim=1)
        - log_not_p.gather(1, idx).squeeze(1)
    )
    return per_sample, per_sample.mean()


def regularization(
    named_parameters: Iterable[tuple[str, torch.Tensor]],
    padding_row_param: str = "embedding.item_vectors.weight",
) -> torch.Tensor:
    """Sum of squared trainable entries, skipping the padding embedding row."""
    total = None
    for name, param in named_parameters:
        if not param.requires_grad:
            continue
        if name == padding_row_param:
            sq = param[PADDING_IDX + 1 :].pow(2).sum()
        else:
            sq = param.pow(2).sum()
        total = sq if total is None else total + sq
    if total is None:
        return torch.zeros(())
    return total


def total_loss(
    per_sample_rec: torch.Tensor,
    per_sample_scl: torch.Tensor,
    per_sample_bpr: torch.Tensor,
    include_mask: torch.Tensor,
    lambda_weight: float,
    beta: float,
    l_reg: torch.Tensor,
) -> LossBreakdown:
    """Combine the three per-sample losses over the curriculum-included rows."""
    if lambda_weight < 0 or beta < 0:
        raise ValueError("lambda_weight and beta must be nonnegative")
    inc = include_mask.to(per_sample_rec.dtype)
    denom = inc.sum().clamp(min=1.0)
    l_rec = (per_sample_rec * inc).sum() / denom
    l_scl = (per_sample_scl * inc).sum() / denom
    l_bpr = (per_sample_bpr * inc).sum() / denom
    total = l_rec + lambda_weight * (l_scl + l_bpr) + beta * l_reg
    return LossBreakdown(
        l_rec=l_rec, l_scl=l_scl, l_bpr=l_bpr, l_reg=l_reg, total=total,
        per_sample_rec=per_sample_rec,
    )
