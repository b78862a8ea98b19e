"""Contrastive training for the shared encoder.

Multiple-negatives ranking loss over in-batch negatives: for a batch of B
(query, document) pairs, every other document in the batch is a negative.
Gradients are computed analytically (softmax cross-entropy back through the
L2 normalization, projection, and mean pooling) and applied with AdamW under
a linear warmup / linear decay schedule.  Gradients are averaged across
accumulation windows so the effective batch is batch_size * grad_accum.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import EncoderModel
from .errors import (
    EmptySequence,
    NonFinite,
    NonNormalizedRows,
    ShapeMismatch,
    TooFewPairs,
)
from .textproc import MAX_SEQ_LEN, tokenize, truncate_tokens


@dataclass
class TrainConfig:
    batch_size: int = 8
    grad_accum: int = 4
    epochs: int = 1
    lr: float = 2e-4
    temperature: float = 0.05
    warmup_frac: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_seq_len: int = MAX_SEQ_LEN
    seed: int = 42

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.grad_accum < 1 or self.epochs < 1:
            raise ValueError("batch_size, grad_accum, epochs must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must be in [0, 1)")


@dataclass
class TrainReport:
    steps_run: int                       # micro-steps (forward/backward passes)
    loss_curve: list[tuple[int, float]]  # (micro-step, loss) per optimizer step
    wall_time: float
    pairs_seen: int = 0

    @property
    def optimizer_steps(self) -> int:
        return len(self.loss_curve)

    @property
    def losses(self) -> list[float]:
        return [loss for _, loss in self.loss_curve]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1] if self.loss_curve else math.nan


def micro_steps(n_pairs: int, batch_size: int, epochs: int = 1) -> int:
    """Number of forward/backward passes a run will take."""
    if n_pairs < 1 or batch_size < 1 or epochs < 1:
        raise ValueError("n_pairs, batch_size, epochs must be >= 1")
    return math.ceil(n_pairs / batch_size) * epochs


def lr_schedule(step: int, total_steps: int, warmup_frac: float = 0.1) -> float:
    """Piecewise-linear LR factor: 0 -> 1 over the warmup steps, then 1 -> 0
    over the remainder.  The peak value 1.0 is attained exactly once."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    step = min(max(step, 0), total_steps)
    warmup = int(warmup_frac * total_steps)
    if warmup > 0 and step < warmup:
        return step / warmup
    if total_steps == warmup:
        return 1.0
    return (total_steps - step) / (total_steps - warmup)


def _check_rows(name: str, mat: np.ndarray) -> None:
    if not np.isfinite(mat).all():
        raise NonFinite(f"{name} contains NaN or inf")
    norms = np.linalg.norm(mat, axis=1)
    if (np.abs(norms - 1.0) > 1e-5).any():
        raise NonNormalizedRows(f"rows of {name} are not unit length")


def mnrl_loss(q: np.ndarray, d: np.ndarray, temperature: float = 0.05) -> float:
    """Mean softmax cross-entropy over in-batch candidates.

    q and d are [B, dim] with unit rows; row i of d is the positive for row i
    of q and the other B-1 rows act as negatives.  Stabilized with
    log-sum-exp; B=1 gives exactly 0, equal similarities give ln B.
    """
    if q.ndim != 2 or q.shape != d.shape or q.shape[0] == 0:
        raise ShapeMismatch(f"need matching [B, dim] matrices, got {q.shape} and {d.shape}")
    _check_rows("q", q)
    _check_rows("d", d)
    return _loss_from_sim(q @ d.T, temperature)


def _loss_from_sim(sim: np.ndarray, temperature: float) -> float:
    logits = sim / temperature
    row_max = logits.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    loss = float(np.mean(lse - np.diagonal(logits)))
    if not math.isfinite(loss):
        raise NonFinite("loss is NaN or inf")
    return loss


def _grad_from_sim(sim: np.ndarray, temperature: float) -> np.ndarray:
    # dL/dsim = (softmax(sim/t) - I) / (B * t)
    b = sim.shape[0]
    logits = sim / temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return (p - np.eye(b, dtype=sim.dtype)) / (b * temperature)


def _pool(model: EncoderModel, tokens: list[str]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.fromiter((model.bucket(t) for t in tokens), dtype=np.int64, count=len(tokens))
    return model.emb[idx].mean(axis=0), idx


def _norm_backward(g_hat: np.ndarray, unit: np.ndarray, norm: float) -> np.ndarray:
    # d(u/||u||)/du applied to an upstream gradient
    return (g_hat - (g_hat @ unit) * unit) / norm


def batch_loss_and_grads(
    model: EncoderModel,
    query_tokens: list[list[str]],
    doc_tokens: list[list[str]],
    temperature: float = 0.05,
) -> tuple[float, dict[str, np.ndarray]]:
    """One micro-batch forward/backward; returns (loss, dense gradients).

    Both towers share weights, so the projection and embedding gradients
    accumulate contributions from the query and document sides.
    """
    b = len(query_tokens)
    if b == 0 or len(doc_tokens) != b:
        raise ValueError("need equally many query and doc token lists")
    for i in range(b):
        if not query_tokens[i] or not doc_tokens[i]:
            raise EmptySequence(f"pair {i} has an empty token sequence")

    dtype = model.emb.dtype
    pools_q = np.empty((b, model.d_in), dtype=dtype)
    pools_d = np.empty((b, model.d_in), dtype=dtype)
    idx_q = []
    idx_d = []
    for i in range(b):
        pools_q[i], iq = _pool(model, query_tokens[i])
        pools_d[i], idd = _pool(model, doc_tokens[i])
        idx_q.append(iq)
        idx_d.append(idd)

    u_q = pools_q @ model.proj
    u_d = pools_d @ model.proj
    norm_q = np.linalg.norm(u_q, axis=1)
    norm_d = np.linalg.norm(u_d, axis=1)
    if (norm_q < 1e-12).any() or (norm_d < 1e-12).any():
        raise NonFinite("a projected vector collapsed to zero during training")
    q_hat = u_q / norm_q[:, None]
    d_hat = u_d / norm_d[:, None]

    sim = q_hat @ d_hat.T
    loss = _loss_from_sim(sim, temperature)
    g_sim = _grad_from_sim(sim, temperature)

    g_qhat = g_sim @ d_hat
    g_dhat = g_sim.T @ q_hat
    g_uq = np.empty_like(u_q)
    g_ud = np.empty_like(u_d)
    for i in range(b):
        g_uq[i] = _norm_backward(g_qhat[i], q_hat[i], norm_q[i])
        g_ud[i] = _norm_backward(g_dhat[i], d_hat[i], norm_d[i])

    g_proj = pools_q.T @ g_uq + pools_d.T @ g_ud
    g_pool_q = g_uq @ model.proj.T
    g_pool_d = g_ud @ model.proj.T

    g_emb = np.zeros_like(model.emb)
    for i in range(b):
        np.add.at(g_emb, idx_q[i], g_pool_q[i] / len(idx_q[i]))
        np.add.at(g_emb, idx_d[i], g_pool_d[i] / len(idx_d[i]))
    return loss, {"emb": g_emb, "proj": g_proj}


def _tokenize_pairs(pairs: list[tuple[str, str]], max_len: int) -> list[tuple[list[str], list[str]]]:
    tokenized = []
    for q_text, d_text in pairs:
        q = truncate_tokens(tokenize(q_text), max_len).tokens
        d = truncate_tokens(tokenize(d_text), max_len).tokens
        if not q or not d:
            raise EmptySequence(f"pair ({q_text!r}, {d_text!r}) tokenizes to nothing")
        tokenized.append((q, d))
    return tokenized


def mnrl_grad(
    model: EncoderModel,
    batch: list[tuple[str, str]],
    temperature: float = 0.05,
) -> dict[str, np.ndarray]:
    """Analytic parameter gradients for one batch of (query, doc) texts."""
    tokenized = _tokenize_pairs(batch, MAX_SEQ_LEN)
    _, grads = batch_loss_and_grads(
        model, [q for q, _ in tokenized], [d for _, d in tokenized], temperature
    )
    return grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> None:
    """In-place AdamW update with decoupled weight decay and bias-corrected
    moments: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)."""
    if param.shape != grad.shape:
        raise ShapeMismatch(f"param shape {param.shape} vs grad shape {grad.shape}")
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    param -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)


def train(
    model: EncoderModel,
    pairs: list[tuple[str, str]],
    cfg: TrainConfig | None = None,
) -> tuple[EncoderModel, TrainReport]:
    """Train the model in place on (query_text, doc_text) pairs; returns the
    same model object plus a report with the per-optimizer-step loss curve."""
    cfg = cfg or TrainConfig()
    if len(pairs) < cfg.batch_size:
        raise TooFewPairs(f"need at least batch_size={cfg.batch_size} pairs, got {len(pairs)}")

    started = time.perf_counter()
    tokenized = _tokenize_pairs(pairs, cfg.max_seq_len)
    total_micro = micro_steps(len(pairs), cfg.batch_size, cfg.epochs)
    rng = np.random.default_rng(cfg.seed)
    states = {
        "emb": AdamState(np.zeros_like(model.emb), np.zeros_like(model.emb)),
        "proj": AdamState(np.zeros_like(model.proj), np.zeros_like(model.proj)),
    }

    loss_curve: list[tuple[int, float]] = []
    micro_done = 0
    pairs_seen = 0
    acc_grads: dict[str, np.ndarray] | None = None
    acc_losses: list[float] = []

    def flush() -> None:
        nonlocal acc_grads
        if not acc_losses:
            return
        n_win = len(acc_losses)
        lr = cfg.lr * lr_schedule(micro_done - 1, total_micro, cfg.warmup_frac)
        for name, param in (("emb", model.emb), ("proj", model.proj)):
            adamw_step(
                param,
                acc_grads[name] / n_win,
                states[name],
                lr,
                cfg.beta1,
                cfg.beta2,
                cfg.eps,
                cfg.weight_decay,
            )
        step_loss = float(np.mean(acc_losses))
        if not math.isfinite(step_loss):
            raise NonFinite(f"loss diverged at micro-step {micro_done}")
        loss_curve.append((micro_done, step_loss))
        acc_grads = None
        acc_losses.clear()

    for _ in range(cfg.epochs):
        perm = rng.permutation(len(tokenized))
        for start in range(0, len(perm), cfg.batch_size):
            batch = [tokenized[j] for j in perm[start:start + cfg.batch_size]]
            loss, grads = batch_loss_and_grads(
                model,
                [q for q, _ in batch],
                [d for _, d in batch],
                cfg.temperature,
            )
            micro_done += 1
            pairs_seen += len(batch)
            acc_losses.append(loss)
            if acc_grads is None:
                acc_grads = grads
            else:
                for name in acc_grads:
                    acc_grads[name] += grads[name]
            if len(acc_losses) == cfg.grad_accum:
                flush()
        flush()

    report = TrainReport(
        steps_run=micro_done,
        loss_curve=loss_curve,
        wall_time=time.perf_counter() - started,
        pairs_seen=pairs_seen,
    )
    return model, report


def write_loss_csv(report: TrainReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for step, loss in report.loss_curve:
            w.writerow([step, f"{loss:.8f}"])
