"""Item and position embedding tables."""

from __future__ import annotations

import torch
import torch.nn as nn

from .data import PADDING_IDX

INIT_STD = 0.02


class EmbeddingTable(nn.Module):
    """Item vectors plus a learnable per-slot position table.

    Row 0 of the item table is the padding vector: zero at init and
    never updated (padding_idx), and excluded from the regularizer.
    """

    def __init__(self, catalog_size: int, dim: int, max_len: int, seed: int = 0):
        super().__init__()
        if dim < 1 or max_len < 1:
            raise ValueError("dim and max_len must be >= 1")
        self.catalog_size = catalog_size
        self.dim = dim
        self.item_vectors = nn.Embedding(catalog_size, dim, padding_idx=PADDING_IDX)
        self.position_vectors = nn.Parameter(torch.empty(max_len, dim))
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.item_vectors.weight.normal_(0.0, INIT_STD, generator=gen)
            self.item_vectors.weight[PADDING_IDX].zero_()
            self.position_vectors.normal_(0.0, INIT_STD, generator=gen)

    def lookup(self, item_matrix: torch.Tensor, targets: torch.Tensor | None = None):
        """Gather item vectors; padding positions come back as zero rows."""
        if int(item_matrix.max()) >= self.catalog_size:
            raise IndexError(
                f"item index {int(item_matrix.max())} outside catalog of "
                f"size {self.catalog_size}"
            )
        h = self.item_vectors(item_matrix)
        if targets is None:
            return h
        return h, self.item_vectors(targets)
