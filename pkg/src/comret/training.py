"""Desk-scale trainer for the pairwise sigmoid alignment objective.

A batch of b (query, image, text) feature triplets is embedded by three
linear maps. For each modality the b*b pair grid is scored by inner
product and every pair contributes a sigmoid-contrastive term

    softplus( gamma_ij * (-tau * z_ij + eta) ) / b

with gamma_ij = +1 on the diagonal (matched pairs) and -1 elsewhere; tau
and eta are a learnable temperature and bias initialized to 10 and -10.
The text-side and image-side losses are blended with weight ``lam`` on
text. Only the text map is trained; the query and image maps stay frozen
to preserve their pretrained alignment, so the text-map gradient of the
blended loss is lam times the text-side gradient. tau stays positive by
training log(tau).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from .errors import ComretError, DimMismatch, MalformedLine


class NonDecreasingLossWarning(UserWarning):
    """Training finished with a loss at or above its starting value."""


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.5
    tau_init: float = 10.0
    eta_init: float = -10.0
    learning_rate: float = 0.05
    steps: int = 200
    batch_size: int | None = None  # None = full batch
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ComretError(f"lambda must be in [0,1], got {self.lam}")
        if self.tau_init <= 0.0:
            raise ComretError(f"tau must be positive, got {self.tau_init}")
        if self.learning_rate <= 0.0:
            raise ComretError(f"learning rate must be positive, got {self.learning_rate}")
        if self.steps < 0:
            raise ComretError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ComretError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ComretError(f"momentum must be in [0,1), got {self.momentum}")


@dataclass(frozen=True)
class TripletBatch:
    """Aligned (query, image, text) feature rows, one triplet per index."""

    query: np.ndarray
    image: np.ndarray
    text: np.ndarray

    def __post_init__(self):
        b = self.query.shape[0]
        if b < 1 or self.image.shape[0] != b or self.text.shape[0] != b:
            raise ComretError("triplet fields must have the same non-zero row count")

    @property
    def size(self) -> int:
        return self.query.shape[0]

    def take(self, idx: np.ndarray) -> "TripletBatch":
        return TripletBatch(self.query[idx], self.image[idx], self.text[idx])


@dataclass
class ToyEncoders:
    """Three linear maps into a shared embedding space.

    w_query and w_image are frozen; only w_text receives updates.
    """

    w_query: np.ndarray
    w_image: np.ndarray
    w_text: np.ndarray

    def embed(self, batch: TripletBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return batch.query @ self.w_query, batch.image @ self.w_image, batch.text @ self.w_text


def pair_indicator(i: int, j: int) -> int:
    """+1 for the matched (diagonal) pair, -1 otherwise."""
    return 1 if i == j else -1


def _pair_signs(b: int) -> np.ndarray:
    signs = -np.ones((b, b))
    np.fill_diagonal(signs, 1.0)
    return signs


def _stable_sigmoid(a: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-a))


def pairwise_sigmoid_loss(query_embs: np.ndarray, cand_embs: np.ndarray, tau: float, eta: float) -> float:
    """Mean-per-row sum of softplus pair terms over the b*b score grid."""
    if query_embs.shape[1] != cand_embs.shape[1]:
        raise DimMismatch(query_embs.shape[1], cand_embs.shape[1], where="candidate embeddings")
    b = query_embs.shape[0]
    z = query_embs @ cand_embs.T
    a = _pair_signs(b) * (-tau * z + eta)
    return float(np.logaddexp(0.0, a).sum() / b)


def combined_loss(
    batch: TripletBatch, encoders: ToyEncoders, lam: float, tau: float, eta: float
) -> tuple[float, float, float]:
    """(blended, text-side, image-side) loss for one batch."""
    q, i, t = encoders.embed(batch)
    loss_t = pairwise_sigmoid_loss(q, t, tau, eta)
    loss_i = pairwise_sigmoid_loss(q, i, tau, eta)
    return lam * loss_t + (1.0 - lam) * loss_i, loss_t, loss_i


@dataclass(frozen=True)
class Gradients:
    """Gradients of the blended loss; frozen maps report exact zeros."""

    w_text: np.ndarray
    tau: float
    eta: float
    w_query: np.ndarray
    w_image: np.ndarray


def _grid_terms(q_embs: np.ndarray, c_embs: np.ndarray, tau: float, eta: float):
    b = q_embs.shape[0]
    z = q_embs @ c_embs.T
    signs = _pair_signs(b)
    s = _stable_sigmoid(signs * (-tau * z + eta))
    g_tau = -float(np.sum(s * signs * z)) / b
    g_eta = float(np.sum(s * signs)) / b
    return z, signs, s, g_tau, g_eta


def loss_gradients(
    batch: TripletBatch, encoders: ToyEncoders, lam: float, tau: float, eta: float
) -> Gradients:
    """Analytic gradients of combined_loss w.r.t. w_text, tau and eta.

    The image-side loss never touches w_text, so the w_text gradient is
    lam times the text-side gradient; w_query and w_image are frozen and
    get exact zeros.
    """
    q, i_embs, t_embs = encoders.embed(batch)
    b = batch.size

    _, signs_t, s_t, g_tau_t, g_eta_t = _grid_terms(q, t_embs, tau, eta)
    d_z = -(tau / b) * (s_t * signs_t)
    g_w_text = lam * (batch.text.T @ (d_z.T @ q))

    _, _, _, g_tau_i, g_eta_i = _grid_terms(q, i_embs, tau, eta)

    return Gradients(
        w_text=g_w_text,
        tau=lam * g_tau_t + (1.0 - lam) * g_tau_i,
        eta=lam * g_eta_t + (1.0 - lam) * g_eta_i,
        w_query=np.zeros_like(encoders.w_query),
        w_image=np.zeros_like(encoders.w_image),
    )


def load_triplets(lines: Iterable[str]) -> TripletBatch:
    """Parse triplet JSONL: one {"q": [...], "i": [...], "t": [...]} per line."""
    rows_q, rows_i, rows_t = [], [], []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON ({exc.msg})")
        if not isinstance(obj, dict) or not all(k in obj for k in ("q", "i", "t")):
            raise MalformedLine(line_no, 'expected keys "q", "i", "t"')
        for key, rows in (("q", rows_q), ("i", rows_i), ("t", rows_t)):
            vec = obj[key]
            if not isinstance(vec, list) or not vec or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec
            ):
                raise MalformedLine(line_no, f'"{key}" must be a non-empty numeric array')
            if rows and len(rows[0]) != len(vec):
                raise DimMismatch(len(rows[0]), len(vec), where=f'line {line_no} "{key}"')
            rows.append(vec)
    if not rows_q:
        raise ComretError("triplet file contains no records")
    return TripletBatch(
        np.asarray(rows_q, dtype=np.float64),
        np.asarray(rows_i, dtype=np.float64),
        np.asarray(rows_t, dtype=np.float64),
    )


def init_encoders(batch: TripletBatch, seed: int = 0) -> ToyEncoders:
    """Frozen identity query map (d = query feature dim), frozen image map
    (identity when dims allow, else a seeded Gaussian), zero text map."""
    d = batch.query.shape[1]
    fi = batch.image.shape[1]
    if fi == d:
        w_image = np.eye(d)
    else:
        w_image = np.random.default_rng(seed).standard_normal((fi, d)) / math.sqrt(fi)
    encoders = ToyEncoders(
        w_query=np.eye(d),
        w_image=w_image,
        w_text=np.zeros((batch.text.shape[1], d)),
    )
    encoders.w_query.flags.writeable = False
    encoders.w_image.flags.writeable = False
    return encoders


class LogRow(NamedTuple):
    step: int
    loss: float
    loss_text: float
    loss_image: float
    tau: float
    eta: float


@dataclass
class TrainResult:
    log: list[LogRow]
    encoders: ToyEncoders
    tau: float
    eta: float
    initial_loss: float
    final_loss: float
    mrr_at_1: float

    def report(self) -> dict:
        return {
            "steps": self.log[-1].step,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "loss_ratio": self.final_loss / self.initial_loss if self.initial_loss else math.nan,
            "self_retrieval_mrr_at_1": self.mrr_at_1,
            "tau": self.tau,
            "eta": self.eta,
        }


def self_retrieval_mrr_at_1(batch: TripletBatch, encoders: ToyEncoders) -> float:
    """Each query against every text embedding; 1 point when its own text
    ranks first (ties resolve to the lowest index)."""
    q, _, t = encoders.embed(batch)
    best = np.argmax(q @ t.T, axis=1)
    return float(np.mean(best == np.arange(batch.size)))


def train_toy(batch: TripletBatch, cfg: TrainConfig) -> TrainResult:
    """Gradient descent on (w_text, log tau, eta) with frozen query/image maps.

    Full-batch by default; with cfg.batch_size set, mini-batches are drawn
    from a seeded shuffle each epoch. The log holds the full-batch loss at
    step 0 and after every update.
    """
    if batch.size < 2:
        raise ComretError("need at least 2 triplets to form negative pairs")
    encoders = init_encoders(batch, cfg.seed)
    w_text = encoders.w_text.copy()
    theta = math.log(cfg.tau_init)
    eta = cfg.eta_init
    lr = cfg.learning_rate

    def snapshot(step: int) -> LogRow:
        current = ToyEncoders(encoders.w_query, encoders.w_image, w_text)
        loss, loss_t, loss_i = combined_loss(batch, current, cfg.lam, math.exp(theta), eta)
        return LogRow(step, loss, loss_t, loss_i, math.exp(theta), eta)

    log = [snapshot(0)]

    rng = np.random.default_rng(cfg.seed)
    minibatch = cfg.batch_size is not None and cfg.batch_size < batch.size
    order: list[int] = []
    v_w = np.zeros_like(w_text)
    v_theta = 0.0
    v_eta = 0.0

    for step in range(1, cfg.steps + 1):
        if minibatch:
            if len(order) < cfg.batch_size:
                order = list(rng.permutation(batch.size))
            take, order = order[: cfg.batch_size], order[cfg.batch_size :]
            sub = batch.take(np.asarray(take))
        else:
            sub = batch
        current = ToyEncoders(encoders.w_query, encoders.w_image, w_text)
        tau = math.exp(theta)
        grads = loss_gradients(sub, current, cfg.lam, tau, eta)

        v_w = cfg.momentum * v_w + grads.w_text
        v_theta = cfg.momentum * v_theta + tau * grads.tau  # chain rule for log-tau
        v_eta = cfg.momentum * v_eta + grads.eta
        w_text = w_text - lr * v_w
        theta -= lr * v_theta
        eta -= lr * v_eta
        log.append(snapshot(step))

    final_encoders = ToyEncoders(encoders.w_query, encoders.w_image, w_text)
    initial_loss, final_loss = log[0].loss, log[-1].loss
    if cfg.steps > 0 and final_loss >= initial_loss:
        warnings.warn(
            f"loss did not decrease: {initial_loss:.6g} -> {final_loss:.6g}",
            NonDecreasingLossWarning,
        )
    return TrainResult(
        log=log,
        encoders=final_encoders,
        tau=math.exp(theta),
        eta=eta,
        initial_loss=initial_loss,
        final_loss=final_loss,
        mrr_at_1=self_retrieval_mrr_at_1(batch, final_encoders),
    )


def write_log_csv(log: list[LogRow], fh: TextIO) -> None:
    fh.write("step,loss,loss_text,loss_image,tau,eta\n")
    for row in log:
        fh.write(
            f"{row.step},{row.loss:.12g},{row.loss_text:.12g},"
            f"{row.loss_image:.12g},{row.tau:.12g},{row.eta:.12g}\n"
        )
