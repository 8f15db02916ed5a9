"""Cosine back-end, EER and normalized minimum DCF.

Decision rule throughout: accept iff ``score >= threshold``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, MissingIdError
from .store import Trial  # noqa: F401  (re-exported)


class MetricUndefinedError(DataError):
    pass


@dataclass(frozen=True)
class DcfConfig:
    p_target: float = 0.1
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not 0 < self.p_target < 1:
            raise DomainError("p_target must lie in (0, 1)")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise DomainError("detection costs must be positive")


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "vector", x), dtype=np.float64)


def cosine(a, b) -> float:
    a, b = _vec(a), _vec(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def length_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DomainError("cannot length-normalize a zero vector")
    return x / norms


def score_trials(trials, embeddings, enrollments: dict[str, list[str]] | None = None) -> np.ndarray:
    """Cosine score per trial, in trial order.

    ``embeddings`` maps utterance id to vector.  An enrollment id listed in
    ``enrollments`` is represented by the mean of its utterances'
    length-normalized embeddings.
    """
    enrollments = enrollments or {}
    missing = []

    def resolve(key, allow_group):
        if allow_group and key in enrollments:
            utts = enrollments[key]
            absent = [u for u in utts if u not in embeddings]
            if absent:
                missing.extend(absent)
                return None
            return length_normalize(np.stack([_vec(embeddings[u]) for u in utts])).mean(axis=0)
        if key not in embeddings:
            missing.append(key)
            return None
        return _vec(embeddings[key])

    cache = {}
    pairs = []
    for t in trials:
        e = cache.get(("e", t.enroll_id))
        if e is None:
            e = cache[("e", t.enroll_id)] = resolve(t.enroll_id, True)
        v = cache.get(("t", t.test_id))
        if v is None:
            v = cache[("t", t.test_id)] = resolve(t.test_id, False)
        pairs.append((e, v))
    if missing:
        raise MissingIdError(dict.fromkeys(missing))
    return np.array([cosine(e, v) for e, v in pairs], dtype=np.float64)


def _split(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and aligned")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    n_tar, n_non = int(labels.sum()), int((~labels).sum())
    if n_tar == 0 or n_non == 0:
        raise MetricUndefinedError(f"need targets and non-targets (got {n_tar} / {n_non})")
    return scores, labels, n_tar, n_non


def error_rates(scores, labels):
    """FAR and FRR at every distinct score used as a threshold, ascending.

    Returns ``(thresholds, far, frr)``; index ``i`` is the rule
    ``accept iff score >= thresholds[i]``.
    """
    scores, labels, n_tar, n_non = _split(scores, labels)
    thresholds, inverse = np.unique(scores, return_inverse=True)
    tar_at = np.bincount(inverse[labels], minlength=thresholds.size)
    non_at = np.bincount(inverse[~labels], minlength=thresholds.size)
    # targets strictly below threshold i, non-targets at or above it
    tar_below = np.concatenate([[0], np.cumsum(tar_at)[:-1]])
    non_at_or_above = n_non - np.concatenate([[0], np.cumsum(non_at)[:-1]])
    return thresholds, non_at_or_above / n_non, tar_below / n_tar


def compute_eer(scores, labels) -> tuple[float, float]:
    """EER by linear interpolation of the FAR/FRR crossing."""
    thresholds, far, frr = error_rates(scores, labels)
    # append threshold = +inf: nothing accepted
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    diff = far - frr
    k = int(np.argmax(diff <= 0))  # first index where FRR catches up; diff[-1] = -1
    if diff[k] == 0:
        return float(far[k]), float(thresholds[k]) if k < thresholds.size else math.inf
    lo = k - 1  # diff[lo] > 0 > diff[k]; lo >= 0 because diff[0] = 1
    t = diff[lo] / (diff[lo] - diff[k])
    eer = far[lo] + t * (far[k] - far[lo])
    if k < thresholds.size:
        thr = thresholds[lo] + t * (thresholds[k] - thresholds[lo])
    else:
        thr = thresholds[lo]
    return float(eer), float(thr)


def dcf_curve(scores, labels, cfg: DcfConfig = DcfConfig()):
    """Normalized DCF over thresholds [-inf, distinct scores..., +inf]."""
    thresholds, far, frr = error_rates(scores, labels)
    thr = np.concatenate([[-math.inf], thresholds, [math.inf]])
    far = np.concatenate([[1.0], far, [0.0]])
    frr = np.concatenate([[0.0], frr, [1.0]])
    dcf = cfg.c_miss * frr * cfg.p_target + cfg.c_fa * far * (1 - cfg.p_target)
    norm = min(cfg.c_miss * cfg.p_target, cfg.c_fa * (1 - cfg.p_target))
    return thr, dcf / norm


def compute_min_dcf(scores, labels, cfg: DcfConfig = DcfConfig()) -> tuple[float, float]:
    thr, dcf = dcf_curve(scores, labels, cfg)
    i = int(np.argmin(dcf))  # first minimum = smallest threshold among ties
    return float(dcf[i]), float(thr[i])


def det_points(scores, labels) -> list[tuple[float, float, float]]:
    thresholds, far, frr = error_rates(scores, labels)
    return list(zip(thresholds.tolist(), far.tolist(), frr.tolist()))


def format_det_csv(points) -> str:
    lines = ["threshold,far,frr"]
    lines += [f"{t:.6f},{fa:.8f},{fr:.8f}" for t, fa, fr in points]
    return "\n".join(lines) + "\n"
