"""Shared relevance signal plus the soft (reweight) and hard (remove) paths."""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .interest import TransformerEncoder, last_real_position

BACKBONE_NAMES = ("sasrec-lite", "bert4rec-lite", "gru4rec-lite")


class BackboneError(ValueError):
    """Unknown backbone name."""


class HardMask(NamedTuple):
    alpha_tilde: torch.Tensor  # (B, n, 2), rows sum to 1 (soft) or one-hot (hard)
    keep_drop: torch.Tensor    # (B, n) bool, True = drop as noise


class CorrelationGenerator(nn.Module):
    """Score each item's relevance/irrelevance against the user interest.

    Output alpha has two independent sigmoid columns per item; they are
    not complementary probabilities.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.item_proj = nn.Linear(dim, dim, bias=False)
        self.scorer = nn.Linear(4 * dim, 2, bias=False)

    def forward(self, h: torch.Tensor, interest: torch.Tensor) -> torch.Tensor:
        hp = self.item_proj(h)
        e = interest.unsqueeze(1).expand_as(hp)
        feats = torch.cat([hp, e, hp - e, hp * e], dim=-1)
        return torch.sigmoid(self.scorer(feats))


class SoftDenoiser(nn.Module):
    """Reweight items by their normalized relevance scores.

    The softmax weights shrink every item vector by roughly 1/length, which
    would bury the item signal under the backbone's position table for many
    epochs; the mixing matrix starts orthogonal with a compensating gain so
    the reweighted sequence enters the backbone at a workable scale.
    """

    def __init__(self, dim: int, init_gain: float = 12.0):
        super().__init__()
        self.mix = nn.Linear(dim, dim, bias=False)
        nn.init.orthogonal_(self.mix.weight, gain=init_gain)

    def forward(self, h: torch.Tensor, alpha: torch.Tensor, mask: torch.Tensor):
        logits = alpha[..., 0].masked_fill(~mask, float("-inf"))
        weights = torch.softmax(logits, dim=1)
        weights = torch.where(mask, weights, torch.zeros_like(weights))
        h_hat = weights.unsqueeze(-1) * self.mix(h)
        return h_hat, weights


# ---------------------------------------------------------------------------
# Gumbel gating
# ---------------------------------------------------------------------------

def sample_gumbel(
    shape, generator: torch.Generator | None = None,
    dtype=torch.float32, device="cpu",
) -> torch.Tensor:
    u = torch.rand(shape, generator=generator, dtype=dtype, device=device)
    u = u.clamp(1e-20, 1.0 - 1e-7)
    return -torch.log(-torch.log(u))


def gumbel_mask(
    alpha: torch.Tensor,
    tau: float,
    generator: torch.Generator | None = None,
    hard: bool = True,
    noise: bool = True,
) -> HardMask:
    """Relaxed binary keep/drop decisions from the relevance 2-vectors.

    With noise disabled and tau=1 this reduces to renormalizing alpha.
    Hard mode overlays the argmax one-hot on the forward value while the
    backward pass keeps the soft sample's sensitivities.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    logits = torch.log(alpha)
    if noise:
        logits = logits + sample_gumbel(
            alpha.shape, generator, alpha.dtype, alpha.device
        )
    soft = torch.softmax(logits / tau, dim=-1)
    drop = soft[..., 1] > soft[..., 0]
    if hard:
        one_hot = torch.zeros_like(soft)
        one_hot.scatter_(-1, soft.argmax(dim=-1, keepdim=True), 1.0)
        tilde = (one_hot - soft).detach() + soft
    else:
        tilde = soft
    return HardMask(alpha_tilde=tilde, keep_drop=drop)


def reorganize(
    h: torch.Tensor,
    hard_mask: HardMask,
    mask: torch.Tensor,
    relevance: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Compact each row to its kept items, preserving order.

    Kept vectors carry the (1 - alpha_tilde^1) factor so gradients reach
    the gate; rows where everything was dropped fall back to the single
    item with the highest relevance score.
    """
    bsz, n, dim = h.shape
    keep = ~hard_mask.keep_drop & mask
    scale = (1.0 - hard_mask.alpha_tilde[..., 1]).unsqueeze(-1)
    scaled = scale * h

    pos = torch.arange(n, device=h.device).expand(bsz, n)
    order = torch.argsort(torch.where(keep, pos, pos + n), dim=1, stable=True)
    gathered = torch.gather(scaled, 1, order.unsqueeze(-1).expand(-1, -1, dim))

    counts = keep.sum(dim=1)
    t_max = int(counts.clamp(min=1).max())
    g = gathered[:, :t_max]
    g_mask = (
        torch.arange(t_max, device=h.device).unsqueeze(0)
        < counts.clamp(min=1).unsqueeze(1)
    )
    g = g * g_mask.unsqueeze(-1)

    empty = counts == 0
    if bool(empty.any()):
        rel = relevance.masked_fill(~mask, float("-inf"))
        best = rel.argmax(dim=1)
        rows = torch.nonzero(empty, as_tuple=True)[0]
        g = g.clone()
        g[rows, 0] = h[rows, best[rows]]
    return g, g_mask


class HardEncoder(nn.Module):
    """Transformer over the compacted sequence with fresh position indices."""

    def __init__(self, dim: int, max_len: int, num_layers: int = 2,
                 num_heads: int = 2, dropout: float = 0.0):
        super().__init__()
        self.positions = nn.Parameter(torch.empty(max_len, dim))
        nn.init.normal_(self.positions, std=0.02)
        self.encoder = TransformerEncoder(dim, num_layers, num_heads, dropout)

    def forward(self, g: torch.Tensor, g_mask: torch.Tensor) -> torch.Tensor:
        x = g + self.positions[: g.shape[1]].unsqueeze(0)
        out = self.encoder(x, g_mask)
        idx = last_real_position(g_mask)
        return out[torch.arange(out.shape[0], device=out.device), idx]


# ---------------------------------------------------------------------------
# Pluggable backbones
# ---------------------------------------------------------------------------

class TransformerBackbone(nn.Module):
    def __init__(self, dim: int, max_len: int, num_layers: int, num_heads: int,
                 dropout: float, causal: bool):
        super().__init__()
        self.positions = nn.Parameter(torch.empty(max_len, dim))
        nn.init.normal_(self.positions, std=0.02)
        self.encoder = TransformerEncoder(dim, num_layers, num_heads, dropout, causal)

    def forward(self, h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out = self.encoder(h + self.positions[: h.shape[1]].unsqueeze(0), mask)
        idx = last_real_position(mask)
        return out[torch.arange(out.shape[0], device=out.device), idx]


class GRUBackbone(nn.Module):
    """Gated recurrent encoder; padding steps leave the state untouched."""

    def __init__(self, dim: int):
        super().__init__()
        self.cell = nn.GRUCell(dim, dim)

    def forward(self, h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        bsz, n, dim = h.shape
        state = h.new_zeros(bsz, dim)
        for t in range(n):
            nxt = self.cell(h[:, t], state)
            gate = mask[:, t].unsqueeze(-1).to(h.dtype)
            state = gate * nxt + (1.0 - gate) * state
        return state


def make_backbone(name: str, dim: int, max_len: int, num_layers: int = 2,
                  num_heads: int = 2, dropout: float = 0.0) -> nn.Module:
    if name == "sasrec-lite":
        return TransformerBackbone(dim, max_len, num_layers, num_heads, dropout,
                                   causal=True)
    if name == "bert4rec-lite":
        return TransformerBackbone(dim, max_len, num_layers, num_heads, dropout,
                                   causal=False)
    if name == "gru4rec-lite":
        return GRUBackbone(dim)
    raise BackboneError(f"unknown backbone {name!r}; expected one of {BACKBONE_NAMES}")
