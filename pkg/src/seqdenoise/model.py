"""Full dual-path denoising recommender assembled from the component modules."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .denoise import (
    CorrelationGenerator,
    HardEncoder,
    HardMask,
    SoftDenoiser,
    gumbel_mask,
    make_backbone,
    reorganize,
)
from .embedding import EmbeddingTable
from .interest import InterestExtractor
from .objective import bpr_loss, rec_loss, scl_loss, score_catalog


@dataclass
class ForwardOutput:
    e_hat: torch.Tensor                 # soft-path user representation
    e_bar: torch.Tensor | None          # hard-path user representation
    alpha: torch.Tensor                 # (B, n, 2) relevance/irrelevance
    hard: HardMask | None
    h: torch.Tensor                     # raw item vectors (B, n, d)
    target_vecs: torch.Tensor | None
    negative_vecs: torch.Tensor | None


class DenoisingRecommender(nn.Module):
    """Interest-guided soft reweighting and hard removal over one backbone.

    Flags carve out the ablation variants: use_hard_path=False drops the
    removal branch and both of its losses, use_target_interest=False
    hides the target from the short-term window at train time, and
    backbone_only=True reduces the model to embedding + backbone.
    """

    def __init__(
        self,
        catalog_size: int,
        dim: int = 100,
        max_len: int = 50,
        m: int = 2,
        num_h: int = 4,
        num_v: int = 4,
        backbone: str = "sasrec-lite",
        encoder_layers: int = 2,
        encoder_heads: int = 2,
        dropout: float = 0.0,
        seed: int = 0,
        separate_fuse_weights: bool = False,
        stop_target_grad: bool = False,
        scl_exclude_positives: bool = False,
        backbone_only: bool = False,
        use_hard_path: bool = True,
        use_target_interest: bool = True,
    ):
        super().__init__()
        self.backbone_only = backbone_only
        self.use_hard_path = use_hard_path and not backbone_only
        self.use_target_interest = use_target_interest
        self.scl_exclude_positives = scl_exclude_positives

        self.embedding = EmbeddingTable(catalog_size, dim, max_len, seed)
        self.backbone = make_backbone(
            backbone, dim, max_len, encoder_layers, encoder_heads, dropout
        )
        if not backbone_only:
            self.interest = InterestExtractor(
                dim, m, num_h, num_v, encoder_layers, encoder_heads, dropout,
                separate_fuse_weights, stop_target_grad,
            )
            self.correlator = CorrelationGenerator(dim)
            self.soft = SoftDenoiser(dim)
            self.hard_encoder = HardEncoder(
                dim, max_len, encoder_layers, encoder_heads, dropout
            )

    def encode(
        self,
        item_matrix: torch.Tensor,
        mask: torch.Tensor,
        targets: torch.Tensor | None = None,
        negatives: torch.Tensor | None = None,
        tau: float = 0.5,
        gumbel_generator: torch.Generator | None = None,
        hard_sampling: bool = True,
        gumbel_noise: bool = True,
        train_mode: bool = False,
    ) -> ForwardOutput:
        h = self.embedding.lookup(item_matrix)
        target_vecs = (
            self.embedding.item_vectors(targets) if targets is not None else None
        )
        negative_vecs = (
            self.embedding.item_vectors(negatives) if negatives is not None else None
        )

        if self.backbone_only:
            e_hat = self.backbone(h, mask)
            return ForwardOutput(e_hat, None, h.new_zeros(*mask.shape, 2), None, h,
                                 target_vecs, negative_vecs)

        window_target = target_vecs if (train_mode and self.use_target_interest) else None
        _, _, e_fused = self.interest(
            h, self.embedding.position_vectors, mask, window_target
        )
        alpha = self.correlator(h, e_fused)
        h_hat, _ = self.soft(h, alpha, mask)
        e_hat = self.backbone(h_hat, mask)

        e_bar = None
        hard = None
        if train_mode and self.use_hard_path:
            hard = gumbel_mask(alpha, tau, gumbel_generator,
                               hard=hard_sampling, noise=gumbel_noise)
            hard = HardMask(hard.alpha_tilde, hard.keep_drop | ~mask)
            g, g_mask = reorganize(h, hard, mask, alpha[..., 0])
            e_bar = self.hard_encoder(g, g_mask)
        return ForwardOutput(e_hat, e_bar, alpha, hard, h, target_vecs, negative_vecs)

    def training_losses(
        self,
        out: ForwardOutput,
        targets: torch.Tensor,
        mask: torch.Tensor,
        tau_c: float,
        use_bpr: bool = True,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-sample rec/scl/bpr vectors plus the full catalog scores."""
        z = score_catalog(out.e_hat, self.embedding.item_vectors.weight)
        per_rec, _ = rec_loss(z, targets)
        bsz = targets.shape[0]
        zeros = per_rec.new_zeros(bsz)
        per_scl = zeros
        per_bpr = zeros
        if out.hard is not None:
            per_scl = scl_loss(out.e_hat, out.h, out.hard.keep_drop, mask, tau_c,
                               self.scl_exclude_positives)
            if use_bpr and out.e_bar is not None:
                per_bpr = bpr_loss(out.e_bar, out.target_vecs, out.negative_vecs)
        return per_rec, per_scl, per_bpr, z

    @torch.no_grad()
    def score_for_eval(self, item_matrix, mask) -> torch.Tensor:
        """Deterministic full-catalog scores; no target, no sampling."""
        out = self.encode(item_matrix, mask, train_mode=False)
        return score_catalog(out.e_hat, self.embedding.item_vectors.weight)
