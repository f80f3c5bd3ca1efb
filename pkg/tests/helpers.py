"""Shared test utilities: central-difference gradients and straight-line
numpy reimplementations used as oracles."""

import numpy as np
import torch

LN_EPS = 1e-5


def max_grad_rel_error(model, loss_fn, step=1e-5, denom_floor=1e-6):
    """Worst relative mismatch between autograd and central differences.

    Relative error uses max(|analytic|, |numeric|, denom_floor) so that
    near-zero gradients are compared on an absolute scale.
    """
    model.zero_grad()
    loss_fn().backward()
    worst = 0.0
    worst_name = None
    for name, param in model.named_parameters():
        analytic = (
            param.grad.detach().clone().view(-1)
            if param.grad is not None
            else torch.zeros(param.numel(), dtype=param.dtype)
        )
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            plus = float(loss_fn().detach())
            flat[i] = orig - step
            minus = float(loss_fn().detach())
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            a = float(analytic[i])
            denom = max(abs(a), abs(numeric), denom_floor)
            rel = abs(a - numeric) / denom
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{i}]"
    return worst, worst_name


def np_layer_norm(x, gamma, beta, eps=LN_EPS):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)  # biased, matching torch
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def np_linear(x, module):
    w = module.weight.detach().numpy()
    out = x @ w.T
    if module.bias is not None:
        out = out + module.bias.detach().numpy()
    return out


def np_softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def np_attention(layer, x, mask, causal):
    """One pre-norm encoder layer, single batch row: x (n, d), mask (n,)."""
    n, d = x.shape
    heads = layer.attn.num_heads
    hd = d // heads
    normed = np_layer_norm(
        x,
        layer.norm1.weight.detach().numpy(),
        layer.norm1.bias.detach().numpy(),
    )
    q = np_linear(normed, layer.attn.query).reshape(n, heads, hd).transpose(1, 0, 2)
    k = np_linear(normed, layer.attn.key).reshape(n, heads, hd).transpose(1, 0, 2)
    v = np_linear(normed, layer.attn.value).reshape(n, heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    neg = np.finfo(x.dtype).min
    scores[:, :, ~mask] = neg
    if causal:
        future = np.triu(np.ones((n, n), dtype=bool), k=1)
        scores[:, future] = neg
    ctx = np_softmax(scores) @ v
    attn_out = np_linear(ctx.transpose(1, 0, 2).reshape(n, d), layer.attn.out)
    x = x + attn_out

    normed2 = np_layer_norm(
        x,
        layer.norm2.weight.detach().numpy(),
        layer.norm2.bias.detach().numpy(),
    )
    hidden = np.maximum(np_linear(normed2, layer.ff[0]), 0.0)
    return x + np_linear(hidden, layer.ff[2])


def np_encoder(encoder, x, mask):
    """Straight-line reimplementation of TransformerEncoder for one row."""
    for layer in encoder.layers:
        x = np_attention(layer, x, mask, encoder.causal)
    if encoder.final_norm is not None:
        x = np_layer_norm(
            x,
            encoder.final_norm.weight.detach().numpy(),
            encoder.final_norm.bias.detach().numpy(),
        )
    return x
