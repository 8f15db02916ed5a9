"""ArcFace classifier head, its SGD trainer, and voice-conversion loss terms.

The head optionally carries a square linear ``projection`` applied to the
frozen encoder output before normalisation (the trainable embedding layer).
With ``projection=None`` it is a plain ArcFace weight matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DomainError

COS_EPS = 1e-6  # clamp for the sqrt derivative near |cos| = 1


@dataclass(frozen=True)
class ArcFaceConfig:
    num_classes: int
    embed_dim: int
    scale: float = 32.0
    margin: float = 0.2

    def __post_init__(self):
        if self.scale <= 0:
            raise DomainError("ArcFace scale must be positive")
        if not 0 <= self.margin < math.pi / 2:
            raise DomainError("ArcFace margin must lie in [0, pi/2)")
        if self.num_classes < 1 or self.embed_dim < 1:
            raise DomainError("num_classes and embed_dim must be positive")


@dataclass(frozen=True)
class HeadParams:
    weight: np.ndarray  # (num_classes, embed_dim)
    projection: np.ndarray | None = None  # (embed_dim, embed_dim)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class TrainSchedule:
    lr_init: float = 0.1
    epochs: int = 200
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0
    train_projection: bool = True


@dataclass
class TrainResult:
    params: HeadParams
    loss_trace: list[float] = field(default_factory=list)
    accuracy: float = float("nan")


@dataclass(frozen=True)
class VCLossComponents:
    mel_before: float
    mel_after: float
    stop_token: float
    embedding_loss: float
    regular_loss: float
    embedding_weight: float = 5.0


def _unit_rows(x: np.ndarray):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / norms, norms


def _check(emb: np.ndarray, labels: np.ndarray, weight: np.ndarray, cfg: ArcFaceConfig):
    if weight.shape != (cfg.num_classes, cfg.embed_dim):
        raise DomainError(f"weight shape {weight.shape} does not match config "
                          f"({cfg.num_classes}, {cfg.embed_dim})")
    if np.any(labels < 0) or np.any(labels >= cfg.num_classes):
        raise DomainError(f"label out of range [0, {cfg.num_classes})")
    if np.any(~np.any(emb != 0, axis=-1)):
        raise DomainError("zero embedding")
    if np.any(~np.any(weight != 0, axis=-1)):
        raise DomainError("zero class weight row")


def _margin_logits(cos: np.ndarray, labels: np.ndarray, cfg: ArcFaceConfig):
    rows = np.arange(cos.shape[0])
    c_y = np.clip(cos[rows, labels], -1.0, 1.0)
    sin_y = np.sqrt(np.maximum(0.0, 1.0 - c_y * c_y))
    phi = c_y * math.cos(cfg.margin) - sin_y * math.sin(cfg.margin)
    # cos(theta + m) turns back up once theta > pi - m; continue it monotonically there
    wrapped = c_y < -math.cos(cfg.margin)
    phi = np.where(wrapped, c_y - (1.0 - math.cos(cfg.margin)), phi)
    logits = cfg.scale * cos
    logits[rows, labels] = cfg.scale * phi
    return logits, c_y


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    total = expd.sum(axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    loss = np.log(total[:, 0]) - shifted[rows, labels]
    return loss, expd / total


def arcface_batch(emb, labels, weight, cfg: ArcFaceConfig, need_grad: bool = True):
    """Per-example losses for a batch, plus gradients of their mean.

    Returns ``(logits, losses, d_emb, d_weight)``; ``d_emb`` has one row per
    example (gradient of the batch-mean loss), ``d_weight`` is summed over the
    batch in index order.
    """
    emb = np.atleast_2d(np.asarray(emb, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    weight = np.asarray(weight, dtype=np.float64)
    _check(emb, labels, weight, cfg)
    e_hat, e_norm = _unit_rows(emb)
    w_hat, w_norm = _unit_rows(weight)
    cos = e_hat @ w_hat.T
    logits, c_y = _margin_logits(cos, labels, cfg)
    losses, probs = _softmax_ce(logits, labels)
    if not need_grad:
        return logits, losses, None, None

    n = emb.shape[0]
    rows = np.arange(n)
    d_logits = probs
    d_logits[rows, labels] -= 1.0
    d_logits /= n
    d_cos = cfg.scale * d_logits
    c_clamped = np.clip(c_y, -1.0 + COS_EPS, 1.0 - COS_EPS)
    dphi = math.cos(cfg.margin) + c_clamped * math.sin(cfg.margin) / np.sqrt(1.0 - c_clamped ** 2)
    dphi = np.where(c_y < -math.cos(cfg.margin), 1.0, dphi)
    d_cos[rows, labels] *= dphi

    g_ehat = d_cos @ w_hat
    d_emb = (g_ehat - np.sum(g_ehat * e_hat, axis=1, keepdims=True) * e_hat) / e_norm
    g_what = d_cos.T @ e_hat
    d_weight = (g_what - np.sum(g_what * w_hat, axis=1, keepdims=True) * w_hat) / w_norm
    return logits, losses, d_emb, d_weight


def arcface_forward(emb, label: int, params: HeadParams, cfg: ArcFaceConfig):
    """Logits and cross-entropy loss of one embedding (projection not applied)."""
    vec = getattr(emb, "vector", emb)
    logits, losses, _, _ = arcface_batch(vec, [label], params.weight, cfg, need_grad=False)
    return logits[0], float(losses[0])


def arcface_grad(emb, label: int, params: HeadParams, cfg: ArcFaceConfig):
    """Analytic (d_loss/d_emb, d_loss/d_W) for one embedding."""
    vec = getattr(emb, "vector", emb)
    _, _, d_emb, d_weight = arcface_batch(vec, [label], params.weight, cfg)
    return d_emb[0], d_weight


def init_head(cfg: ArcFaceConfig, seed: int = 0, with_projection: bool = True) -> HeadParams:
    rng = np.random.default_rng(seed)
    a = math.sqrt(6.0 / (cfg.num_classes + cfg.embed_dim))
    weight = rng.uniform(-a, a, size=(cfg.num_classes, cfg.embed_dim))
    projection = np.eye(cfg.embed_dim) if with_projection else None
    return HeadParams(weight, projection)


def expand_head(params: HeadParams, num_classes: int, seed: int = 0) -> HeadParams:
    """Append freshly initialised class rows (fine-tuning with a larger label set)."""
    old = params.num_classes
    if num_classes < old:
        raise DomainError("cannot shrink the class set")
    if num_classes == old:
        return params
    dim = params.weight.shape[1]
    a = math.sqrt(6.0 / (num_classes + dim))
    extra = np.random.default_rng(seed).uniform(-a, a, size=(num_classes - old, dim))
    return replace(params, weight=np.vstack([params.weight, extra]))


def project(x, params: HeadParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x if params.projection is None else x @ params.projection.T


def _loss_and_grads(x, y, params: HeadParams, cfg: ArcFaceConfig):
    z = project(x, params)
    _, losses, d_z, d_w = arcface_batch(z, y, params.weight, cfg)
    d_p = None if params.projection is None else d_z.T @ x
    return losses, d_w, d_p


def predict(x, params: HeadParams) -> np.ndarray:
    """Class with the highest cosine (no margin)."""
    z, _ = _unit_rows(project(np.atleast_2d(x), params))
    w, _ = _unit_rows(params.weight)
    return np.argmax(z @ w.T, axis=1)


def cosine_lr(lr_init: float, step: int, total_steps: int) -> float:
    return 0.5 * lr_init * (1.0 + math.cos(math.pi * step / total_steps))


def train_head(embeddings, labels, cfg: ArcFaceConfig, schedule: TrainSchedule = TrainSchedule(),
               init: HeadParams | None = None) -> TrainResult:
    """Mini-batch SGD with momentum and per-step cosine decay to zero.

    ``labels`` are integer class indices.  Shuffling uses ``schedule.seed``
    only, so identical inputs give bit-identical parameters.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise DomainError("embeddings must be (N, D) with one label each")
    if np.unique(y).size < 2:
        raise DataError("training needs at least two classes")
    if schedule.epochs < 0 or schedule.batch_size < 1 or schedule.lr_init < 0:
        raise DomainError("invalid training schedule")

    params = init or init_head(cfg, schedule.seed, schedule.train_projection)
    train_proj = schedule.train_projection and params.projection is not None
    weight = params.weight.copy()
    proj = None if params.projection is None else params.projection.copy()
    v_w = np.zeros_like(weight)
    v_p = np.zeros_like(proj) if train_proj else None

    rng = np.random.default_rng(schedule.seed)
    n = x.shape[0]
    batches_per_epoch = math.ceil(n / schedule.batch_size)
    total = max(1, schedule.epochs * batches_per_epoch)
    trace = []
    step = 0
    for _ in range(schedule.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, schedule.batch_size):
            idx = np.sort(order[start:start + schedule.batch_size])
            losses, d_w, d_p = _loss_and_grads(x[idx], y[idx], HeadParams(weight, proj), cfg)
            epoch_loss += float(losses.sum())
            lr = cosine_lr(schedule.lr_init, step, total)
            v_w = schedule.momentum * v_w + d_w
            weight = weight - lr * v_w
            if train_proj:
                v_p = schedule.momentum * v_p + d_p
                proj = proj - lr * v_p
            step += 1
        trace.append(epoch_loss / n)

    final = HeadParams(weight, proj)
    acc = float(np.mean(predict(x, final) == y))
    return TrainResult(final, trace, acc)


def vc_total_loss(c: VCLossComponents) -> float:
    """Mel-to-Mel conversion objective: unit-weight terms plus a weighted embedding loss."""
    terms = (c.mel_before, c.mel_after, c.stop_token, c.embedding_loss, c.regular_loss)
    if any(not math.isfinite(t) or t < 0 for t in terms):
        raise DomainError(f"loss components must be finite and non-negative: {terms}")
    if c.embedding_weight < 0:
        raise DomainError("embedding weight must be non-negative")
    return c.mel_before + c.mel_after + c.stop_token + c.embedding_weight * c.embedding_loss + c.regular_loss


def embedding_feedback_loss(converted, target) -> float:
    """1 - cosine between the converted utterance's embedding and the target's."""
    a = np.asarray(getattr(converted, "vector", converted), dtype=np.float64)
    b = np.asarray(getattr(target, "vector", target), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("feedback loss undefined for a zero vector")
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return 1.0 - cos
