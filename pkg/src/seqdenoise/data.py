"""Interaction log loading, 5-core filtering, leave-one-out splitting, batching."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

PADDING_IDX = 0


class DatasetError(ValueError):
    """Malformed or empty interaction data."""


@dataclass
class InteractionSequence:
    """One user's chronologically ordered interactions."""

    user_id: int
    items: list[int]
    timestamps: list[int]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class HeldOut:
    """A (prefix, target) evaluation pair for one user."""

    user_id: int
    prefix: list[int]
    target: int


@dataclass
class Split:
    train: list[InteractionSequence]
    valid: list[HeldOut]
    test: list[HeldOut]
    user_items: dict[int, frozenset[int]]
    skipped: int = 0


@dataclass
class SequenceBatch:
    """Left-padded index matrix plus masks, targets and sampled negatives."""

    users: np.ndarray        # (B,) int64
    item_matrix: np.ndarray  # (B, n) int64, PADDING_IDX on the left
    mask: np.ndarray         # (B, n) bool, True = real item
    lengths: np.ndarray      # (B,) int64
    targets: np.ndarray      # (B,) int64
    negatives: np.ndarray    # (B,) int64


@dataclass
class DatasetStats:
    num_users: int
    num_items: int
    num_interactions: int

    @property
    def user_index_space(self) -> int:
        # distinct users plus the reserved index 0
        return self.num_users + 1

    @property
    def catalog_size(self) -> int:
        return self.num_items + 1


def compute_stats(sequences: Sequence[InteractionSequence]) -> DatasetStats:
    items = set()
    total = 0
    for seq in sequences:
        items.update(seq.items)
        total += len(seq.items)
    return DatasetStats(len(sequences), len(items), total)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _parse_movielens_tab(path: str) -> list[tuple[str, str, int]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DatasetError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            user, item, _rating, ts = parts
            try:
                rows.append((user, item, int(ts)))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: bad timestamp {ts!r}") from exc
    return rows


def _parse_csv(path: str) -> list[tuple[str, str, int]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        required = {"user", "item", "timestamp"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise DatasetError(f"{path}: csv header missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append((rec["user"], rec["item"], int(rec["timestamp"])))
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed row {rec!r}") from exc
    return rows


def load_interactions(
    path: str, fmt: str = "movielens-tab"
) -> tuple[list[InteractionSequence], dict[str, int], dict[str, int]]:
    """Parse an interaction log into per-user time-sorted sequences.

    External user/item ids are remapped to dense indices starting at 1
    (0 stays reserved for padding). Returns the sequences plus both
    remap tables (external id -> internal index).
    """
    if fmt == "movielens-tab":
        rows = _parse_movielens_tab(path)
    elif fmt == "csv":
        rows = _parse_csv(path)
    else:
        raise DatasetError(f"unknown format {fmt!r}")
    if not rows:
        raise DatasetError(f"{path}: no interactions found")

    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    per_user: dict[int, list[tuple[int, int]]] = {}
    for user, item, ts in rows:
        uid = user_map.setdefault(user, len(user_map) + 1)
        iid = item_map.setdefault(item, len(item_map) + 1)
        per_user.setdefault(uid, []).append((ts, iid))

    sequences = []
    for uid in sorted(per_user):
        events = per_user[uid]
        order = sorted(range(len(events)), key=lambda i: events[i][0])  # stable
        sequences.append(
            InteractionSequence(
                user_id=uid,
                items=[events[i][1] for i in order],
                timestamps=[events[i][0] for i in order],
            )
        )
    return sequences, user_map, item_map


def write_remap_table(path: str, mapping: dict[str, int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for external, internal in sorted(mapping.items(), key=lambda kv: kv[1]):
            fh.write(f"{external} {internal}\n")


# ---------------------------------------------------------------------------
# Filtering and reindexing
# ---------------------------------------------------------------------------

def apply_core_filter(
    sequences: Sequence[InteractionSequence], min_count: int = 5
) -> list[InteractionSequence]:
    """Alternate user- and item-count filters until a fixpoint.

    Dropping a user can push an item below the threshold and vice versa,
    so a single pass is not enough.
    """
    if min_count < 1:
        raise DatasetError(f"min_count must be >= 1, got {min_count}")
    current = [
        InteractionSequence(s.user_id, list(s.items), list(s.timestamps))
        for s in sequences
    ]
    while True:
        changed = False
        kept_users = [s for s in current if len(s.items) >= min_count]
        if len(kept_users) != len(current):
            changed = True
        current = kept_users

        counts = Counter(it for s in current for it in s.items)
        weak = {it for it, c in counts.items() if c < min_count}
        if weak:
            changed = True
            trimmed = []
            for s in current:
                keep = [i for i, it in enumerate(s.items) if it not in weak]
                trimmed.append(
                    InteractionSequence(
                        s.user_id,
                        [s.items[i] for i in keep],
                        [s.timestamps[i] for i in keep],
                    )
                )
            current = trimmed
        if not changed:
            break
    if not current:
        raise DatasetError("core filtering removed every sequence")
    return current


def compact_indices(
    sequences: Sequence[InteractionSequence],
    user_map: dict[str, int],
    item_map: dict[str, int],
) -> tuple[list[InteractionSequence], dict[str, int], dict[str, int]]:
    """Reassign dense 1-based indices after filtering left gaps."""
    old_users = sorted({s.user_id for s in sequences})
    old_items = sorted({it for s in sequences for it in s.items})
    new_user = {old: i + 1 for i, old in enumerate(old_users)}
    new_item = {old: i + 1 for i, old in enumerate(old_items)}
    out = [
        InteractionSequence(
            new_user[s.user_id], [new_item[it] for it in s.items], list(s.timestamps)
        )
        for s in sequences
    ]
    users = {ext: new_user[old] for ext, old in user_map.items() if old in new_user}
    items = {ext: new_item[old] for ext, old in item_map.items() if old in new_item}
    return out, users, items


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def leave_one_out_split(sequences: Sequence[InteractionSequence]) -> Split:
    """Last item -> test target, second-to-last -> validation target."""
    train, valid, test = [], [], []
    user_items: dict[int, frozenset[int]] = {}
    skipped = 0
    for s in sequences:
        if len(s.items) < 3:
            skipped += 1
            continue
        user_items[s.user_id] = frozenset(s.items)
        prefix = s.items[:-2]
        train.append(
            InteractionSequence(s.user_id, list(prefix), list(s.timestamps[:-2]))
        )
        valid.append(HeldOut(s.user_id, list(prefix), s.items[-2]))
        test.append(HeldOut(s.user_id, s.items[:-1], s.items[-1]))
    return Split(train=train, valid=valid, test=test, user_items=user_items, skipped=skipped)


def train_examples(split: Split, mode: str = "last-target") -> list[HeldOut]:
    """Turn train sequences into supervised (prefix, next-item) pairs."""
    if mode not in ("last-target", "all-prefix"):
        raise DatasetError(f"unknown supervision mode {mode!r}")
    out = []
    for s in split.train:
        if mode == "last-target":
            if len(s.items) >= 2:
                out.append(HeldOut(s.user_id, s.items[:-1], s.items[-1]))
        else:
            for i in range(1, len(s.items)):
                out.append(HeldOut(s.user_id, s.items[:i], s.items[i]))
    return out


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def _sample_negative(
    rng: np.random.Generator, interacted: frozenset[int], catalog_size: int
) -> int:
    if catalog_size <= 2:
        raise DatasetError("catalog too small to sample negatives")
    for _ in range(100):
        cand = int(rng.integers(1, catalog_size))
        if cand not in interacted:
            return cand
    pool = [i for i in range(1, catalog_size) if i not in interacted]
    if not pool:
        raise DatasetError("user has interacted with the entire catalog")
    return pool[int(rng.integers(0, len(pool)))]


def make_batches(
    examples: Sequence[HeldOut],
    user_items: dict[int, frozenset[int]],
    catalog_size: int,
    max_len: int,
    batch_size: int,
    rng_seed,
    shuffle: bool = True,
) -> Iterator[SequenceBatch]:
    """Yield left-padded batches in a seeded, reproducible order.

    Prefixes longer than max_len keep only the most recent max_len items.
    Each row gets one uniform negative outside the user's full history.
    """
    if max_len < 1 or batch_size < 1:
        raise DatasetError("max_len and batch_size must be >= 1")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(examples)) if shuffle else np.arange(len(examples))
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start : start + batch_size]]
        bsz = len(chunk)
        item_matrix = np.full((bsz, max_len), PADDING_IDX, dtype=np.int64)
        mask = np.zeros((bsz, max_len), dtype=bool)
        lengths = np.zeros(bsz, dtype=np.int64)
        targets = np.zeros(bsz, dtype=np.int64)
        negatives = np.zeros(bsz, dtype=np.int64)
        users = np.zeros(bsz, dtype=np.int64)
        for b, ex in enumerate(chunk):
            recent = ex.prefix[-max_len:]
            k = len(recent)
            item_matrix[b, max_len - k :] = recent
            mask[b, max_len - k :] = True
            lengths[b] = k
            targets[b] = ex.target
            users[b] = ex.user_id
            interacted = user_items.get(ex.user_id, frozenset(ex.prefix) | {ex.target})
            negatives[b] = _sample_negative(rng, interacted, catalog_size)
        yield SequenceBatch(users, item_matrix, mask, lengths, targets, negatives)
