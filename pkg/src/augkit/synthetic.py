"""Synthetic data for exercising the pipeline without a real corpus.

* ``make_corpus`` renders a small text-dependent corpus: every speaker says
  the same "phrase" (a fixed pitch contour and syllable envelope) with a
  personal pitch and formant set.
* ``directional_experiment`` compares head training on real embeddings alone
  against real plus filtered surrogate embeddings, with speakers modelled as
  Gaussian clusters in embedding space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import store
from .audio_dsp import CANONICAL_RATE, Waveform, write_wav
from .augmentation import Candidate, FilterPolicy, filter_generated, speaker_centroids
from .losses_training import ArcFaceConfig, TrainSchedule, project, train_head
from .scoring_metrics import compute_eer, compute_min_dcf, score_trials
from .store import ManifestEntry, Trial

PHRASE = "hey-device"


@dataclass(frozen=True)
class Voice:
    f0: float
    formants: tuple[float, ...]
    bandwidths: tuple[float, ...]


def random_voice(rng) -> Voice:
    return Voice(
        f0=float(rng.uniform(90, 240)),
        formants=(float(rng.uniform(350, 900)), float(rng.uniform(1000, 2300)), float(rng.uniform(2400, 3400))),
        bandwidths=(float(rng.uniform(60, 140)), float(rng.uniform(80, 180)), float(rng.uniform(120, 250))),
    )


def render_phrase(voice: Voice, rng, duration_s: float = 0.5, sr: int = CANONICAL_RATE) -> Waveform:
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    jitter = rng.uniform(0.97, 1.03)
    contour = 1.0 + 0.12 * np.sin(2 * np.pi * 1.6 * t / duration_s * 0.5 + 0.3)
    f0 = voice.f0 * jitter * contour
    phase = 2 * np.pi * np.cumsum(f0) / sr
    formants = np.array(voice.formants) * rng.uniform(0.98, 1.02, size=len(voice.formants))
    bw = np.array(voice.bandwidths)
    x = np.zeros(n)
    for h in range(1, int(7000 / voice.f0 / 1.2)):
        fh = h * voice.f0 * jitter
        gain = np.sum(1.0 / (1.0 + ((fh - formants) / bw) ** 2)) / h ** 0.5
        x += gain * np.sin(h * phase)
    # three syllables
    env = np.zeros(n)
    for centre, width in ((0.2, 0.14), (0.5, 0.12), (0.78, 0.16)):
        env += np.exp(-0.5 * ((t / duration_s - centre) / (width / 2)) ** 2)
    x *= env
    x += 10 ** (-40 / 20) * rng.standard_normal(n)
    return Waveform(0.5 * x / np.max(np.abs(x)), sr)


def make_corpus(out_dir, speakers: int = 8, utts: int = 4, test_speakers: int = 4, test_utts: int = 3,
                seed: int = 0, duration_s: float = 0.5) -> dict:
    """Write audio, manifests, trials and a matching config under ``out_dir``."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def build(prefix, n_spk, n_utt):
        entries = []
        for s in range(n_spk):
            voice = random_voice(rng)
            label = f"{prefix}{s:03d}"
            for u in range(n_utt):
                utt = f"{label}_u{u:02d}"
                path = f"audio/{utt}.wav"
                write_wav(render_phrase(voice, rng, duration_s), out / path)
                entries.append(ManifestEntry(utt, label, path, PHRASE, "original"))
        return entries

    train = build("spk", speakers, utts)
    test = build("tst", test_speakers, test_utts)
    store.write_manifest(out / "manifest.jsonl", train)
    store.write_manifest(out / "test_manifest.jsonl", test)

    # first utterance of each test speaker enrolls; every other test utterance is a test
    enroll = {e.speaker_label: e.utt_id for e in test if e.utt_id.endswith("_u00")}
    trials = [Trial(enroll[spk], e.utt_id, spk == e.speaker_label)
              for spk in sorted(enroll) for e in test if not e.utt_id.endswith("_u00")]
    store.write_trials(out / "trials.txt", trials)

    config = {
        "seed": seed,
        "work_dir": "work",
        "data": {"manifest": "manifest.jsonl", "test_manifest": "test_manifest.jsonl",
                 "trials": "trials.txt", "audio_root": "."},
        "augment": {"pitch_shift": True, "speed_factors": [0.9, 1.1], "vc": True,
                    "vc_mode": "in_set", "vc_per_speaker": 3, "vc_strength": 0.3},
        "encoder": {"embed_dim": 32},
        "train": {"pretrain_epochs": 20, "finetune_epochs": 10, "batch_size": 32},
    }
    store.atomic_write_text(out / "config.json", json.dumps(config, indent=2) + "\n")
    return {"train": len(train), "test": len(test), "trials": len(trials)}


# -- Gaussian-cluster directional experiment ---------------------------------

@dataclass(frozen=True)
class ClusterWorld:
    """Speakers as Gaussian clusters; a shared nuisance subspace inflates
    within-speaker variance along a few directions."""
    means: np.ndarray  # (S, D)
    nuisance: np.ndarray  # (K, D) orthonormal rows
    sigma: float
    nuisance_sigma: float

    def sample(self, rng, speaker: int, n: int) -> np.ndarray:
        d = self.means.shape[1]
        iso = self.sigma * rng.standard_normal((n, d))
        nuis = self.nuisance_sigma * rng.standard_normal((n, self.nuisance.shape[0])) @ self.nuisance
        return self.means[speaker] + iso + nuis


def make_world(rng, speakers: int, dim: int = 32, sigma: float = 0.3, nuisance_dims: int = 6,
               nuisance_sigma: float = 0.8, shared: float = 0.0) -> ClusterWorld:
    """Unit-norm speaker means; ``shared`` mixes in a common direction so that
    different speakers have positive cosine (as ReLU-network embeddings do)."""
    specific = rng.standard_normal((speakers, dim))
    specific /= np.linalg.norm(specific, axis=1, keepdims=True)
    common = rng.standard_normal(dim)
    common /= np.linalg.norm(common)
    means = specific + shared * common
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    q, _ = np.linalg.qr(rng.standard_normal((dim, nuisance_dims)))
    return ClusterWorld(means, q.T, sigma, nuisance_sigma)


@dataclass
class ExperimentResult:
    seed: int
    baseline_eer: float
    augmented_eer: float
    baseline_mdcf: float
    augmented_mdcf: float
    candidates: int
    retained: int


def _surrogates(world: ClusterWorld, rng, real: np.ndarray, labels: list[str], per_speaker: int,
                threshold: float, max_rounds: int = 200):
    """Cluster-resampled converted embeddings: a fresh draw from the target
    cluster, pulled part-way toward a random other speaker (imperfect
    conversion), kept only if it passes the in-set similarity filter."""
    centroids = speaker_centroids(real, labels)
    speakers = sorted(set(labels))
    kept = {s: [] for s in speakers}
    n_cand = 0
    policy = FilterPolicy("in_set", threshold)
    for _ in range(max_rounds):
        todo = [s for s in speakers if len(kept[s]) < per_speaker]
        if not todo:
            break
        cands = []
        for s in todo:
            k = speakers.index(s)
            need = per_speaker - len(kept[s])
            draw = world.sample(rng, k, need)
            other = rng.integers(len(speakers) - 1, size=need)
            other = other + (other >= k)
            leak = rng.uniform(0.0, 0.3, size=(need, 1))
            draw = draw + leak * (world.means[other] - world.means[k])
            cands += [Candidate(f"{s}#vc{n_cand + i}", s, v) for i, v in enumerate(draw)]
            n_cand += need
        retained, _ = filter_generated(cands, centroids, policy)
        vec = {c.utt_id: c.embedding for c in cands}
        for e in retained:
            kept[e.speaker_label].append(vec[e.utt_id])
    n_kept = sum(len(v) for v in kept.values())
    x = np.array([v for s in speakers for v in kept[s]])
    y = [s for s in speakers for _ in kept[s]]
    return x, y, n_cand, n_kept


def directional_experiment(seed: int, speakers: int = 50, dim: int = 32, real_per_speaker: int = 5,
                           aug_per_speaker: int = 15, test_speakers: int = 50, test_per_speaker: int = 6,
                           sigma: float = 0.11, nuisance_sigma: float = 0.3, shared: float = 1.0,
                           threshold: float = 0.6,
                           epochs: int = 40, lr: float = 0.1) -> ExperimentResult:
    rng = np.random.default_rng(seed)
    world = make_world(rng, speakers + test_speakers, dim, sigma, nuisance_sigma=nuisance_sigma, shared=shared)
    labels = [f"s{k:03d}" for k in range(speakers)]
    real = np.vstack([world.sample(rng, k, real_per_speaker) for k in range(speakers)])
    real_y = [labels[k] for k in range(speakers) for _ in range(real_per_speaker)]
    aug_x, aug_y, n_cand, n_kept = _surrogates(world, rng, real, real_y, aug_per_speaker, threshold)

    # held-out evaluation speakers, unseen in training
    emb, trials = {}, []
    for t in range(test_speakers):
        vecs = world.sample(rng, speakers + t, test_per_speaker)
        for u, v in enumerate(vecs):
            emb[f"t{t:03d}_{u}"] = v
    for a in range(test_speakers):
        for b in range(test_speakers):
            for u in range(1, test_per_speaker):
                trials.append(Trial(f"t{a:03d}_0", f"t{b:03d}_{u}", a == b))
    labels_arr = np.array([t.is_target for t in trials])

    cfg = ArcFaceConfig(speakers, dim)
    index = {lab: i for i, lab in enumerate(labels)}

    def run(x, y):
        sched = TrainSchedule(lr_init=lr, epochs=epochs, batch_size=64, seed=seed)
        params = train_head(x, np.array([index[v] for v in y]), cfg, sched).params
        ids = list(emb)
        projected = dict(zip(ids, project(np.array([emb[i] for i in ids]), params)))
        scores = score_trials(trials, projected)
        return compute_eer(scores, labels_arr)[0], compute_min_dcf(scores, labels_arr)[0]

    base_eer, base_dcf = run(real, real_y)
    aug_eer, aug_dcf = run(np.vstack([real, aug_x]), real_y + aug_y)
    return ExperimentResult(seed, base_eer, aug_eer, base_dcf, aug_dcf, n_cand, n_kept)
