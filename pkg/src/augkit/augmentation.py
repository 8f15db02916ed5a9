"""Dataset-level augmentation: speed-perturbed pseudo-speakers and
similarity filtering of converted (synthesized) utterances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_dsp import Waveform, read_wav, speed_perturb, write_wav
from .errors import DataError, DomainError, MissingIdError, NamingError
from .scoring_metrics import cosine
from .store import AugmentationRecord, ManifestEntry

IN_SET, OUT_OF_SET = "in_set", "out_of_set"
DEFAULT_THRESHOLDS = {IN_SET: 0.6, OUT_OF_SET: 0.3}
PER_SPEAKER_BUDGET = {IN_SET: 200, OUT_OF_SET: 20}


@dataclass(frozen=True)
class FilterPolicy:
    mode: str = IN_SET
    threshold: float | None = None
    reference: str = "speaker_centroid"

    def __post_init__(self):
        if self.mode not in DEFAULT_THRESHOLDS:
            raise DomainError(f"unknown filter mode {self.mode!r}")
        if self.threshold is None:
            object.__setattr__(self, "threshold", DEFAULT_THRESHOLDS[self.mode])
        if not -1.0 <= self.threshold <= 1.0:
            raise DomainError("similarity threshold must lie in [-1, 1]")
        if self.reference != "speaker_centroid":
            raise DomainError(f"unsupported filter reference {self.reference!r}")

    def keeps(self, similarity: float) -> bool:
        # in-set keeps "greater than" the threshold; out-of-set drops "less than" it
        if self.mode == IN_SET:
            return similarity > self.threshold
        return similarity >= self.threshold


@dataclass(frozen=True)
class Candidate:
    utt_id: str
    target_speaker_label: str
    embedding: np.ndarray
    source_utt_id: str = ""
    audio_path: str = ""
    phrase_id: str = ""
    origin: str = "surrogate_vc"


@dataclass(frozen=True)
class PlannedUtterance:
    target_speaker: str
    index: int
    source_utt_id: str | None = None

    @property
    def utt_id(self) -> str:
        return f"{self.target_speaker}#vc{self.index:03d}"


def speed_label(label: str, factor: float) -> str:
    return f"{label}#sp{factor:.1f}"


def pitch_shift_augment(manifest, factors, audio_dir=None, audio_root=None, render=True):
    """Add one speed-perturbed copy of every utterance per factor.

    Each (speaker, factor) pair becomes a new speaker label.  New audio paths
    are ``<audio_dir>/<utt>.wav``; with ``render`` the perturbed audio is also
    written there (sources resolved against ``audio_root``).  Without
    ``audio_dir`` only the bookkeeping is done.  Returns ``(entries, records)``
    with originals first, then perturbed copies ordered by utt_id.
    """
    manifest = list(manifest)
    factors = sorted(set(factors))
    if not factors:
        return manifest, []
    for f in factors:
        if f == 1.0:
            raise DomainError("speed factor 1.0 would duplicate the source speaker")
    tags = [f"{f:.1f}" for f in factors]
    if len(set(tags)) != len(tags):
        raise NamingError(f"speed factors {factors} collide at one-decimal labels")

    taken_utts = {e.utt_id for e in manifest}
    taken_labels = {e.speaker_label for e in manifest}
    new_entries, records, applied = [], [], []
    for entry in manifest:
        for f in factors:
            utt = speed_label(entry.utt_id, f)
            label = speed_label(entry.speaker_label, f)
            if utt in taken_utts:
                raise NamingError(f"generated utt_id {utt} already exists")
            if label in taken_labels:
                raise NamingError(f"generated speaker label {label} already exists")
            taken_utts.add(utt)
            path = entry.audio_path
            if audio_dir is not None:
                path = str(Path(audio_dir) / f"{safe_name(utt)}.wav")
            new_entries.append(ManifestEntry(utt, label, path, entry.phrase_id, "pitch_shift"))
            records.append(AugmentationRecord(entry.utt_id, "pitch_shift", f"{f:.1f}", None, True, utt))
            applied.append(f)

    if audio_dir is not None and render:
        Path(audio_dir).mkdir(parents=True, exist_ok=True)
        by_id = {e.utt_id: e for e in manifest}
        for new, rec, f in zip(new_entries, records, applied):
            wave_ = read_wav(resolve(by_id[rec.source_utt_id].audio_path, audio_root))
            write_wav(speed_perturb(wave_, f), new.audio_path)

    order = sorted(range(len(new_entries)), key=lambda i: new_entries[i].utt_id)
    return manifest + [new_entries[i] for i in order], [records[i] for i in order]


def safe_name(utt_id: str) -> str:
    return utt_id.replace("/", "_").replace("#", "_")


def resolve(path, root=None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or root is None else Path(root) / p


def speaker_centroids(embeddings, labels=None) -> dict[str, np.ndarray]:
    """Mean of length-normalized embeddings per speaker.

    Accepts SpeakerEmbedding objects (label taken from ``speaker_label``) or
    a vector sequence together with ``labels``.
    """
    if labels is None:
        vectors = [e.vector for e in embeddings]
        labels = [e.speaker_label for e in embeddings]
    else:
        vectors = list(embeddings)
    if any(lab is None for lab in labels):
        raise DataError("every embedding needs a speaker label")
    groups: dict[str, list[np.ndarray]] = {}
    for vec, lab in zip(vectors, labels):
        v = np.asarray(vec, dtype=np.float64)
        n = np.linalg.norm(v)
        if n == 0:
            raise DomainError(f"zero embedding for speaker {lab}")
        groups.setdefault(lab, []).append(v / n)
    out = {}
    for lab in sorted(groups):
        c = np.mean(groups[lab], axis=0)
        if np.linalg.norm(c) < 1e-12:
            raise DomainError(f"degenerate centroid for speaker {lab}: embeddings cancel out")
        out[lab] = c
    return out


def filter_generated(candidates, centroids, policy: FilterPolicy = FilterPolicy()):
    """Score each candidate against its target speaker's centroid.

    Returns ``(retained_entries, records)``; every candidate gets a record.
    """
    candidates = [c if isinstance(c, Candidate) else Candidate(*c) for c in candidates]
    missing = [c.target_speaker_label for c in candidates if c.target_speaker_label not in centroids]
    if missing:
        raise MissingIdError(dict.fromkeys(missing))
    method = f"vc_{policy.mode}"
    retained, records = [], []
    for c in candidates:
        sim = cosine(c.embedding, centroids[c.target_speaker_label])
        keep = policy.keeps(sim)
        records.append(AugmentationRecord(c.source_utt_id, method, c.target_speaker_label, sim, keep, c.utt_id))
        if keep:
            retained.append(ManifestEntry(c.utt_id, c.target_speaker_label, c.audio_path, c.phrase_id, c.origin))
    return retained, records


def retention_stats(records) -> dict:
    sims = [r.similarity for r in records if r.similarity is not None]
    kept = sum(1 for r in records if r.retained)
    return {
        "candidates": len(records),
        "retained": kept,
        "rejected": len(records) - kept,
        "mean_similarity": float(np.mean(sims)) if sims else None,
        "mean_similarity_retained": (float(np.mean([r.similarity for r in records if r.retained and r.similarity is not None]))
                                     if kept and sims else None),
    }


def generation_budget(speakers, mode: str = IN_SET, sources=None, seed: int = 0,
                      per_speaker: int | None = None) -> list[PlannedUtterance]:
    """Plan how many converted utterances to synthesize per target speaker.

    ``sources`` is a list of ManifestEntry; when given, each planned
    utterance draws a source at random: from speakers other than the target
    (in-set), or from the whole limited pool (out-of-set).
    """
    if mode not in PER_SPEAKER_BUDGET:
        raise DomainError(f"unknown generation mode {mode!r}")
    count = PER_SPEAKER_BUDGET[mode] if per_speaker is None else per_speaker
    rng = np.random.default_rng(seed)
    plan = []
    for spk in speakers:
        pool = None
        if sources is not None:
            pool = [s.utt_id for s in sources if mode == OUT_OF_SET or s.speaker_label != spk]
            if not pool:
                raise DataError(f"no source utterances available for target {spk}")
        for i in range(count):
            src = pool[int(rng.integers(len(pool)))] if pool else None
            plan.append(PlannedUtterance(spk, i, src))
    return plan


def log_spectral_distance(a: Waveform, b: Waveform, n_fft: int = 512) -> float:
    """RMS difference of log power spectra averaged over frames (dB)."""
    n = min(len(a), len(b))
    frames = max(1, n // n_fft)

    def spec(x):
        seg = x.samples[:frames * n_fft].reshape(frames, n_fft) * np.hanning(n_fft)
        return 10 * np.log10(np.abs(np.fft.rfft(seg, axis=1)) ** 2 + 1e-12)

    return float(np.mean(np.sqrt(np.mean((spec(a) - spec(b)) ** 2, axis=1))))


def surrogate_vc(source: Waveform, target_centroid, strength: float, seed: int = 0) -> Waveform:
    """Stand-in for a voice-conversion model.

    Applies a first-order spectral tilt whose direction follows the target
    centroid and a small seeded time-warp, both scaled by ``strength``.
    ``strength == 0`` returns the source unchanged.
    """
    if not 0.0 <= strength <= 1.0:
        raise DomainError("strength must lie in [0, 1]")
    if strength == 0:
        return Waveform(source.samples.copy(), source.sample_rate_hz)
    centroid = np.asarray(getattr(target_centroid, "vector", target_centroid), dtype=np.float64)
    direction = 1.0 if centroid.sum() >= 0 else -1.0
    rng = np.random.default_rng(seed)
    warp = 1.0 + 0.05 * strength * rng.uniform(-1.0, 1.0)
    x = source.samples
    if abs(warp - 1.0) > 1e-3:
        x = speed_perturb(source, round(warp, 3), force=True).samples
    alpha = 0.9 * strength * direction
    y = x.copy()
    y[1:] -= alpha * x[:-1]
    rms_in = math.sqrt(float(np.mean(source.samples ** 2))) if len(source) else 0.0
    rms_out = math.sqrt(float(np.mean(y ** 2)))
    if rms_out > 0 and rms_in > 0:
        y *= rms_in / rms_out
    return Waveform(np.clip(y, -1.0, 1.0), source.sample_rate_hz)
