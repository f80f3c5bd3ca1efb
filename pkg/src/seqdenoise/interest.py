"""Target-aware user interest: transformer long-term + convolutional short-term."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def last_real_position(mask: torch.Tensor) -> torch.Tensor:
    """Index of the final True entry per row; rows must have >= 1 real item."""
    if not bool(mask.any(dim=1).all()):
        raise ValueError("every row needs at least one real item")
    pos = torch.arange(mask.shape[1], device=mask.device)
    return (mask.long() * pos).amax(dim=1)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor, causal: bool = False):
        bsz, n, dim = x.shape
        q = self.query(x).view(bsz, n, self.num_heads, self.head_dim).transpose(1, 2)
        k = self.key(x).view(bsz, n, self.num_heads, self.head_dim).transpose(1, 2)
        v = self.value(x).view(bsz, n, self.num_heads, self.head_dim).transpose(1, 2)

        scores = q @ k.transpose(-2, -1) / self.head_dim**0.5
        neg = torch.finfo(x.dtype).min
        scores = scores.masked_fill(~mask[:, None, None, :], neg)
        if causal:
            future = torch.triu(
                torch.ones(n, n, dtype=torch.bool, device=x.device), diagonal=1
            )
            scores = scores.masked_fill(future, neg)
        weights = self.dropout(torch.softmax(scores, dim=-1))
        ctx = (weights @ v).transpose(1, 2).reshape(bsz, n, dim)
        return self.out(ctx)


class EncoderLayer(nn.Module):
    """Pre-norm block: attention and feed-forward sublayers with residuals."""

    def __init__(self, dim: int, num_heads: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, num_heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.ReLU(), nn.Linear(4 * dim, dim)
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask, causal=False):
        x = x + self.dropout(self.attn(self.norm1(x), mask, causal))
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class TransformerEncoder(nn.Module):
    """Stack of pre-norm layers; with zero layers it is the identity."""

    def __init__(
        self, dim: int, num_layers: int, num_heads: int, dropout: float = 0.0,
        causal: bool = False,
    ):
        super().__init__()
        self.causal = causal
        self.layers = nn.ModuleList(
            EncoderLayer(dim, num_heads, dropout) for _ in range(num_layers)
        )
        self.final_norm = nn.LayerNorm(dim) if num_layers > 0 else None

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x, mask, self.causal)
        if self.final_norm is not None:
            x = self.final_norm(x)
        return x


class ShortTermConv(nn.Module):
    """Horizontal and vertical convolutions over the recent-item window.

    The window always has m+1 rows: the last m items (zero rows on top
    when the user has fewer) and a final slot holding the target vector
    during training or zeros during evaluation. Horizontal kernels come
    in heights 1..m+1, num_h of each; vertical kernels weight rows
    column-wise across the full window height.
    """

    def __init__(self, dim: int, m: int, num_h: int = 4, num_v: int = 4):
        super().__init__()
        self.dim = dim
        self.m = m
        self.num_h = num_h
        self.num_v = num_v
        self.horizontal = nn.ParameterList(
            nn.Parameter(torch.empty(num_h, height, dim))
            for height in range(1, m + 2)
        )
        self.vertical = nn.Parameter(torch.empty(num_v, m + 1))
        self.mlp = nn.Linear(num_h * (m + 1) + num_v * dim, dim)
        self.reset_parameters()

    def reset_parameters(self):
        for kern in self.horizontal:
            nn.init.normal_(kern, std=0.02)
        nn.init.normal_(self.vertical, std=0.02)

    def build_window(
        self, h: torch.Tensor, mask: torch.Tensor,
        target_vecs: torch.Tensor | None,
    ) -> torch.Tensor:
        bsz, n, dim = h.shape
        real = h * mask.unsqueeze(-1)  # window must ignore padding values
        if n >= self.m:
            recent = real[:, n - self.m :, :]
        else:
            recent = F.pad(real, (0, 0, self.m - n, 0))
        if target_vecs is None:
            tail = h.new_zeros(bsz, 1, dim)
        else:
            tail = target_vecs.unsqueeze(1)
        return torch.cat([recent, tail], dim=1)

    def forward(self, h: torch.Tensor, mask: torch.Tensor,
                target_vecs: torch.Tensor | None):
        window = self.build_window(h, mask, target_vecs)
        pooled = []
        for kern in self.horizontal:  # (num_h, height, dim)
            height = kern.shape[1]
            slides = window.unfold(1, height, 1)  # (B, m+2-height, dim, height)
            vals = torch.einsum("bpdh,zhd->bzp", slides, kern)
            pooled.append(F.relu(vals).amax(dim=2))
        c_h = torch.cat(pooled, dim=1)  # (B, num_h*(m+1))
        c_v = torch.einsum("bmd,zm->bzd", window, self.vertical)
        c_v = c_v.reshape(window.shape[0], self.num_v * self.dim)
        return F.relu(self.mlp(torch.cat([c_h, c_v], dim=1)))


class InterestFusion(nn.Module):
    """Combine short- and long-term interest through a shared projection."""

    def __init__(self, dim: int, separate_weights: bool = False):
        super().__init__()
        self.w1 = nn.Linear(dim, dim, bias=False)
        self.w1_long = nn.Linear(dim, dim, bias=False) if separate_weights else None
        self.w2 = nn.Linear(dim, dim)

    def forward(self, e_long: torch.Tensor, e_short: torch.Tensor) -> torch.Tensor:
        long_proj = (self.w1_long or self.w1)(e_long)
        return self.w2(F.relu(self.w1(e_short) + long_proj))


class InterestExtractor(nn.Module):
    """Full user-interest pipeline: e_long, e_short and their fusion."""

    def __init__(
        self,
        dim: int,
        m: int = 2,
        num_h: int = 4,
        num_v: int = 4,
        num_layers: int = 2,
        num_heads: int = 2,
        dropout: float = 0.0,
        separate_fuse_weights: bool = False,
        stop_target_grad: bool = False,
    ):
        super().__init__()
        self.encoder = TransformerEncoder(dim, num_layers, num_heads, dropout)
        self.short = ShortTermConv(dim, m, num_h, num_v)
        self.fusion = InterestFusion(dim, separate_fuse_weights)
        self.stop_target_grad = stop_target_grad

    def long_term(self, h, positions, mask):
        out = self.encoder(h + positions.unsqueeze(0), mask)
        idx = last_real_position(mask)
        return out[torch.arange(out.shape[0], device=out.device), idx]

    def short_term(self, h, mask, target_vecs):
        if target_vecs is not None and self.stop_target_grad:
            target_vecs = target_vecs.detach()
        return self.short(h, mask, target_vecs)

    def forward(self, h, positions, mask, target_vecs=None):
        e_long = self.long_term(h, positions, mask)
        e_short = self.short_term(h, mask, target_vecs)
        return e_long, e_short, self.fusion(e_long, e_short)
