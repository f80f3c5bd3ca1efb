"""Training loop: forward through both denoising paths, curriculum masking,
Adam updates, temperature annealing, early stopping on validation HR@20."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .curriculum import mu, select_batch
from .data import (
    HeldOut,
    SequenceBatch,
    Split,
    apply_core_filter,
    compact_indices,
    compute_stats,
    leave_one_out_split,
    load_interactions,
    make_batches,
    train_examples,
)
from .metrics import MetricsReport, accumulate, rank_of_target
from .model import DenoisingRecommender
from .objective import regularization, total_loss


class TrainingNaNError(RuntimeError):
    """A loss went non-finite; the offending batch was dumped for inspection."""


def prepare_data(cfg: RunConfig):
    sequences, user_map, item_map = load_interactions(cfg.data_path, cfg.data_format)
    sequences = apply_core_filter(sequences)
    sequences, user_map, item_map = compact_indices(sequences, user_map, item_map)
    stats = compute_stats(sequences)
    return leave_one_out_split(sequences), stats


def build_model(cfg: RunConfig, catalog_size: int) -> DenoisingRecommender:
    torch.manual_seed(cfg.seed)
    return DenoisingRecommender(
        catalog_size=catalog_size,
        dim=cfg.dim,
        max_len=cfg.max_len,
        m=cfg.m,
        num_h=cfg.num_h,
        num_v=cfg.num_v,
        backbone=cfg.backbone,
        encoder_layers=cfg.encoder_layers,
        encoder_heads=cfg.encoder_heads,
        dropout=cfg.dropout,
        seed=cfg.seed,
        separate_fuse_weights=cfg.separate_fuse_weights,
        stop_target_grad=cfg.stop_target_grad,
        scl_exclude_positives=cfg.scl_exclude_positives,
        backbone_only=cfg.backbone_only,
        use_hard_path=not cfg.no_hard_path,
        use_target_interest=not cfg.no_target_short,
    )


def _epoch_seed(seed: int, epoch: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch, stream])


def _torch_seed(seed: int, epoch: int, stream: int) -> int:
    return (seed * 1_000_003 + epoch * 7919 + stream) % (2**63 - 1)


def batch_to_tensors(batch: SequenceBatch):
    return (
        torch.from_numpy(batch.item_matrix),
        torch.from_numpy(batch.mask),
        torch.from_numpy(batch.targets),
        torch.from_numpy(batch.negatives),
    )


@torch.no_grad()
def evaluate_model(
    model: DenoisingRecommender,
    examples: list[HeldOut],
    user_items: dict,
    catalog_size: int,
    cfg: RunConfig,
) -> MetricsReport:
    model.eval()
    ranks = []
    batches = make_batches(
        examples, user_items, catalog_size, cfg.max_len, cfg.batch_size,
        rng_seed=0, shuffle=False,
    )
    for batch in batches:
        items, mask, targets, _ = batch_to_tensors(batch)
        z = model.score_for_eval(items, mask).numpy()
        for row, target in zip(z, batch.targets):
            ranks.append(rank_of_target(row, int(target)))
    return accumulate(ranks, cfg.ks)


def _collect_tensors(model, optimizer) -> tuple[dict[str, np.ndarray], dict]:
    tensors = {
        name: param.detach().cpu().numpy()
        for name, param in model.state_dict().items()
    }
    steps = {}
    if optimizer is not None:
        name_of = {
            param: name for name, param in model.named_parameters()
        }
        for param, state in optimizer.state.items():
            name = name_of[param]
            tensors[f"optim.{name}.exp_avg"] = state["exp_avg"].cpu().numpy()
            tensors[f"optim.{name}.exp_avg_sq"] = state["exp_avg_sq"].cpu().numpy()
            steps[name] = int(state["step"])
    return tensors, steps


def _restore_tensors(model, optimizer, tensors, steps) -> None:
    state = {
        name: torch.from_numpy(tensors[name]) for name in model.state_dict()
    }
    model.load_state_dict(state)
    if optimizer is None:
        return
    for name, param in model.named_parameters():
        key = f"optim.{name}.exp_avg"
        if key not in tensors:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(steps[name])),
            "exp_avg": torch.from_numpy(tensors[key]),
            "exp_avg_sq": torch.from_numpy(tensors[f"optim.{name}.exp_avg_sq"]),
        }


def save_train_checkpoint(path, model, optimizer, cfg: RunConfig, state: dict) -> None:
    tensors, steps = _collect_tensors(model, optimizer)
    manifest = {
        "kind": "seqdenoise-checkpoint",
        "config": cfg.to_dict(),
        "adam_steps": steps,
        "state": state,
    }
    save_checkpoint(path, tensors, manifest)


def load_model_checkpoint(path) -> tuple[DenoisingRecommender, RunConfig, dict]:
    tensors, manifest = load_checkpoint(path)
    cfg = RunConfig.from_dict(manifest["config"])
    model = build_model(cfg, manifest["state"]["catalog_size"])
    _restore_tensors(model, None, tensors, {})
    return model, cfg, manifest


def train(
    cfg: RunConfig,
    run_dir: str | Path,
    split: Split | None = None,
    catalog_size: int | None = None,
    resume_from: str | Path | None = None,
    log_stream=None,
) -> dict:
    """Run the training protocol; returns history plus checkpoint paths.

    A split can be passed directly (synthetic experiments); otherwise the
    dataset is loaded and preprocessed from cfg.data_path.
    """
    cfg.validate()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if split is None:
        split, stats = prepare_data(cfg)
        catalog_size = stats.catalog_size
    assert catalog_size is not None

    model = build_model(cfg, catalog_size)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999))

    state = {
        "catalog_size": catalog_size,
        "epoch": 0,
        "best_hr": -1.0,
        "best_epoch": 0,
        "bad_epochs": 0,
        "tau": cfg.tau0,
        "tau_c": cfg.tau_scl0,
        "global_batches": 0,
        "history": [],
    }
    if resume_from is not None:
        tensors, manifest = load_checkpoint(resume_from)
        _restore_tensors(model, optimizer, tensors, manifest["adam_steps"])
        state.update(manifest["state"])

    examples = train_examples(split, cfg.train_supervision)
    steps_per_epoch = max(1, math.ceil(len(examples) / cfg.batch_size))
    best_path = run_dir / "best.ckpt"
    last_path = run_dir / "last.ckpt"
    log_path = run_dir / "epochs.jsonl"
    log_fh = open(log_path, "a", encoding="utf-8")

    try:
        for epoch in range(state["epoch"] + 1, cfg.max_epochs + 1):
            model.train()
            torch.manual_seed(_torch_seed(cfg.seed, epoch, 0))
            gumbel_gen = torch.Generator().manual_seed(_torch_seed(cfg.seed, epoch, 1))
            epoch_losses = {"l_rec": 0.0, "l_scl": 0.0, "l_bpr": 0.0}
            epoch_t = float(epoch - 1)
            mu_logged = mu(epoch_t, cfg.curriculum) if cfg.curriculum_enabled else 1.0

            batches = make_batches(
                examples, split.user_items, catalog_size, cfg.max_len,
                cfg.batch_size, rng_seed=_epoch_seed(cfg.seed, epoch, 0),
            )
            n_batches = 0
            for step, batch in enumerate(batches):
                items, mask, targets, negatives = batch_to_tensors(batch)
                out = model.encode(
                    items, mask, targets, negatives,
                    tau=state["tau"], gumbel_generator=gumbel_gen,
                    train_mode=True,
                )
                per_rec, per_scl, per_bpr, _ = model.training_losses(
                    out, targets, mask, state["tau_c"], use_bpr=not cfg.no_bpr
                )

                if cfg.curriculum_enabled:
                    t = (
                        state["global_batches"] / steps_per_epoch
                        if cfg.curriculum_clock == "step"
                        else epoch_t
                    )
                    include = select_batch(
                        per_rec.detach().numpy(), t, cfg.curriculum
                    )
                else:
                    include = np.ones(len(batch.targets), dtype=bool)

                l_reg = regularization(model.named_parameters())
                breakdown = total_loss(
                    per_rec, per_scl, per_bpr, torch.from_numpy(include),
                    cfg.lambda_weight, cfg.beta, l_reg,
                )
                if not torch.isfinite(breakdown.total):
                    dump = run_dir / f"nan_batch_e{epoch}_s{step}.npz"
                    np.savez(dump, items=batch.item_matrix, mask=batch.mask,
                             targets=batch.targets, negatives=batch.negatives)
                    raise TrainingNaNError(
                        f"non-finite loss at epoch {epoch} step {step}; "
                        f"batch dumped to {dump}"
                    )

                optimizer.zero_grad()
                breakdown.total.backward()
                optimizer.step()

                for key in epoch_losses:
                    epoch_losses[key] += float(getattr(breakdown, key).detach())
                n_batches += 1
                state["global_batches"] += 1
                if state["global_batches"] % cfg.tau_anneal_every == 0:
                    state["tau"] = max(
                        state["tau"] * cfg.tau_anneal_factor, cfg.tau_floor
                    )
                    state["tau_c"] = max(
                        state["tau_c"] * cfg.tau_anneal_factor, cfg.tau_floor
                    )

            report = evaluate_model(
                model, split.valid, split.user_items, catalog_size, cfg
            )
            hr20 = report.hr[20]
            state["epoch"] = epoch
            line = {
                "epoch": epoch,
                "l_rec": epoch_losses["l_rec"] / max(1, n_batches),
                "l_scl": epoch_losses["l_scl"] / max(1, n_batches),
                "l_bpr": epoch_losses["l_bpr"] / max(1, n_batches),
                "hr@20_valid": hr20,
                "tau": state["tau"],
                "mu": mu_logged,
            }
            state["history"].append(line)
            encoded = json.dumps(line, sort_keys=True)
            log_fh.write(encoded + "\n")
            log_fh.flush()
            if log_stream is not None:
                log_stream.write(encoded + "\n")

            if hr20 > state["best_hr"]:
                state["best_hr"] = hr20
                state["best_epoch"] = epoch
                state["bad_epochs"] = 0
                save_train_checkpoint(best_path, model, optimizer, cfg, state)
            else:
                state["bad_epochs"] += 1
            save_train_checkpoint(last_path, model, optimizer, cfg, state)
            if state["bad_epochs"] >= cfg.patience:
                break
    finally:
        log_fh.close()

    return {
        "history": state["history"],
        "best_epoch": state["best_epoch"],
        "best_hr": state["best_hr"],
        "best_checkpoint": str(best_path),
        "last_checkpoint": str(last_path),
    }
