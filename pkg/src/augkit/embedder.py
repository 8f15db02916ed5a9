"""Frame encoder with global statistics pooling (GSP).

Two strided 1-D convolutions over time feed a mean/std pooling layer and a
linear projection, giving one fixed-length embedding per utterance however
long the input is.  The encoder is initialised from a seed and never trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import store
from .errors import DomainError, FormatError, TooShortError
from .features import FeatureMatrix

KERNEL = 5
STRIDE = 2
CHANNELS = (64, 128, 128)
MIN_FRAMES = 13  # two valid kernel-5/stride-2 layers


@dataclass(frozen=True)
class SpeakerEmbedding:
    vector: np.ndarray
    utterance_id: str = ""
    speaker_label: str | None = None

    def __post_init__(self):
        v = np.asarray(self.vector)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise DomainError(f"embedding {self.utterance_id!r} must be a finite 1-D vector")
        if not np.any(v):
            raise DomainError(f"embedding {self.utterance_id!r} has zero norm")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class EncoderParams:
    conv1_w: np.ndarray  # (out, in, kernel)
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    proj_w: np.ndarray  # (embed_dim, 2 * channels)
    proj_b: np.ndarray
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.proj_w.shape[0]

    def arrays(self):
        return (self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b, self.proj_w, self.proj_b)


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_encoder(seed: int = 0, embed_dim: int = 128, input_dim: int = CHANNELS[0]) -> EncoderParams:
    if embed_dim < 8:
        raise DomainError(f"embed_dim must be >= 8, got {embed_dim}")
    rng = np.random.default_rng(seed)
    c_in, c_mid, c_out = input_dim, CHANNELS[1], CHANNELS[2]

    def uniform(shape, fan_in, fan_out):
        a = xavier_bound(fan_in, fan_out)
        w = rng.uniform(-a, a, size=shape)
        w.setflags(write=False)
        return w

    def zeros(n):
        b = np.zeros(n)
        b.setflags(write=False)
        return b

    return EncoderParams(
        conv1_w=uniform((c_mid, c_in, KERNEL), c_in * KERNEL, c_mid * KERNEL),
        conv1_b=zeros(c_mid),
        conv2_w=uniform((c_out, c_mid, KERNEL), c_mid * KERNEL, c_out * KERNEL),
        conv2_b=zeros(c_out),
        proj_w=uniform((embed_dim, 2 * c_out), 2 * c_out, embed_dim),
        proj_b=zeros(embed_dim),
        seed=seed,
    )


def conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = STRIDE) -> np.ndarray:
    """Valid 1-D convolution over time. x: (T, C_in) -> (T', C_out)."""
    windows = np.lib.stride_tricks.sliding_window_view(x, w.shape[2], axis=0)[::stride]
    return np.einsum("tck,ock->to", windows, w) + b


def gsp_pool(features) -> np.ndarray:
    """Concatenate the per-channel temporal mean and population std."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DomainError("gsp_pool needs a non-empty (T, C) grid")
    # sorting each channel fixes the summation order, so any frame permutation gives identical bits
    x = np.sort(x, axis=0)
    mean = x.mean(axis=0)
    var = np.maximum(((x - mean) ** 2).mean(axis=0), 0.0)
    return np.concatenate([mean, np.sqrt(var)])


def encode_frames(frames: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Frame-level encoder output before pooling, shape (T'', 128)."""
    if frames.ndim != 2 or frames.shape[1] != params.input_dim:
        raise DomainError(f"expected (T, {params.input_dim}) features, got {frames.shape}")
    if frames.shape[0] < MIN_FRAMES:
        raise TooShortError(f"{frames.shape[0]} frames; the encoder needs at least {MIN_FRAMES}")
    h = np.maximum(conv1d(frames, params.conv1_w, params.conv1_b), 0.0)
    return np.maximum(conv1d(h, params.conv2_w, params.conv2_b), 0.0)


def embed(features, params: EncoderParams, utterance_id: str = "",
          speaker_label: str | None = None) -> SpeakerEmbedding:
    frames = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    pooled = gsp_pool(encode_frames(frames, params))
    vector = params.proj_w @ pooled + params.proj_b
    if not np.any(vector):
        # All-zero encoder activations (e.g. digital silence); keep the contract of a nonzero embedding.
        raise DomainError(f"utterance {utterance_id!r} produced a zero embedding (silent input?)")
    return SpeakerEmbedding(vector, utterance_id, speaker_label)


def save_embeddings(path, embeddings) -> None:
    embeddings = list(embeddings)
    store.write_store(path, [e.utterance_id for e in embeddings], [e.vector for e in embeddings])


def load_embeddings(path, labels: dict[str, str] | None = None) -> list[SpeakerEmbedding]:
    """Read an embedding store; ``labels`` optionally maps utterance id to speaker."""
    ids, matrix = store.read_store(path)
    labels = labels or {}
    try:
        return [SpeakerEmbedding(row, utt, labels.get(utt)) for utt, row in zip(ids, matrix)]
    except DomainError as exc:
        raise FormatError(f"{path}: {exc}") from exc
