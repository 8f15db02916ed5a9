"""Stage orchestration over a work directory.

Layout::

    work/manifests/  augmented.jsonl, vc_candidates.jsonl, filtered.jsonl (+ .aug.jsonl logs)
    work/audio/      rendered pitch-shift and surrogate-VC audio
    work/emb/        embeddings.emb, head.emb, head.json, failures.txt
    work/scores/     scores.txt
    work/reports/    conditions/<name>/..., report.{json,txt,csv}, figures/

Audio paths of ``original`` entries resolve against ``data.audio_root``
(default: the manifest's directory); generated entries resolve against the
work directory, so manifests never embed absolute paths of the run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import augmentation as aug
from . import store
from .audio_dsp import read_wav, speed_perturb, write_wav
from .config import config_hash, stage_seed
from .embedder import SpeakerEmbedding, embed, init_encoder
from .errors import AugkitError, DataError, DependencyError
from .features import FeatureConfig, log_mel
from .losses_training import (ArcFaceConfig, HeadParams, TrainSchedule, expand_head, init_head,
                              project, train_head)
from .scoring_metrics import DcfConfig, compute_eer, compute_min_dcf, det_points, format_det_csv, score_trials

log = logging.getLogger(__name__)

STAGES = ("augment", "extract", "filter", "train", "score", "evaluate", "report")


class Workspace:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.root = Path(cfg["work_dir"])

    def dir(self, name: str) -> Path:
        d = self.root / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def augmented(self) -> Path:
        return self.root / "manifests" / "augmented.jsonl"

    @property
    def candidates(self) -> Path:
        return self.root / "manifests" / "vc_candidates.jsonl"

    @property
    def filtered(self) -> Path:
        return self.root / "manifests" / "filtered.jsonl"

    @property
    def embeddings(self) -> Path:
        return self.root / "emb" / "embeddings.emb"

    @property
    def head(self) -> Path:
        return self.root / "emb" / "head.emb"

    @property
    def scores(self) -> Path:
        return self.root / "scores" / "scores.txt"

    @property
    def conditions(self) -> Path:
        return self.root / "reports" / "conditions"

    def audio_path(self, entry: store.ManifestEntry) -> Path:
        p = Path(entry.audio_path)
        if p.is_absolute():
            return p
        if entry.origin == "original":
            root = self.cfg["data"]["audio_root"] or Path(self.cfg["data"]["manifest"]).parent
            return Path(root) / p
        return self.root / p


def require(path, what: str) -> Path:
    path = Path(path) if path is not None else None
    if path is None or not path.exists():
        raise DependencyError(f"missing {what}: {path if path is not None else '(not configured)'}")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_summary(ws: Workspace, stage: str, inputs, outputs, started: float, extra=None) -> None:
    summary = {
        "stage": stage,
        "config_hash": config_hash(ws.cfg),
        "inputs": {str(p): sha256_file(p) for p in inputs if p and Path(p).exists()},
        "outputs": {str(p): sha256_file(p) for p in outputs if p and Path(p).exists()},
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        summary.update(extra)
    store.atomic_write_text(ws.dir("runs") / f"{stage}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")


def ordered_map(fn, items, jobs: int):
    """Map preserving input order; results do not depend on ``jobs``."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def dataset_stats(entries) -> dict:
    by_origin = {}
    for e in entries:
        by_origin[e.origin] = by_origin.get(e.origin, 0) + 1
    return {
        "speakers": len({e.speaker_label for e in entries}),
        "utterances": len(entries),
        "utterances_by_origin": dict(sorted(by_origin.items())),
    }


def count_line(stats: dict) -> str:
    return f"{stats['speakers']} speakers / {stats['utterances']} utterances"


def _feature_config(cfg) -> FeatureConfig:
    return FeatureConfig(**cfg["features"])


def _encoder(cfg):
    return init_encoder(stage_seed(cfg["seed"], "encoder"), cfg["encoder"]["embed_dim"],
                        cfg["features"]["mel_bins"])


def _embed_file(ws: Workspace, entry: store.ManifestEntry, fcfg, params) -> SpeakerEmbedding:
    wave_ = read_wav(ws.audio_path(entry))
    return embed(log_mel(wave_, fcfg), params, entry.utt_id, entry.speaker_label)


# -- augment -----------------------------------------------------------------

def cmd_augment(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    src = require(cfg["data"]["manifest"], "input manifest (data.manifest)")
    entries = store.read_manifest(src)
    manifests = ws.dir("manifests")
    marker = manifests / ".augment.partial"
    marker.write_text("augment in progress\n")
    # downstream filter output is stale once the augmented set changes
    ws.filtered.unlink(missing_ok=True)
    store.aug_log_path(ws.filtered).unlink(missing_ok=True)

    acfg = cfg["augment"]
    out, records = entries, []
    if acfg["pitch_shift"] and acfg["speed_factors"]:
        out, records = aug.pitch_shift_augment(entries, acfg["speed_factors"], "audio/pitch_shift", render=False)
        ws.dir("audio/pitch_shift")
        by_id = {e.utt_id: e for e in out}
        factor_of = {f"{f:.1f}": f for f in acfg["speed_factors"]}
        jobs = [(by_id[r.source_utt_id], by_id[r.utt_id], factor_of[r.parameter]) for r in records]
        ordered_map(lambda job: _render_speed(ws, *job), jobs, cfg["jobs"])

    candidates = []
    if acfg["vc"]:
        candidates = _generate_vc(ws, entries)
    if candidates:
        store.write_manifest(ws.candidates, candidates)
    else:
        ws.candidates.unlink(missing_ok=True)
    store.write_manifest(ws.augmented, out)
    store.write_records(store.aug_log_path(ws.augmented), records)
    marker.unlink()
    stats = dataset_stats(out)
    write_summary(ws, "augment", [src], [ws.augmented, store.aug_log_path(ws.augmented), ws.candidates], started,
                  {"dataset": stats, "vc_candidates": len(candidates)})
    log.info("augment: %s", count_line(stats))
    return {"dataset": stats, "vc_candidates": len(candidates), "message": count_line(stats)}


def _render_speed(ws, source, target, factor):
    write_wav(speed_perturb(read_wav(ws.audio_path(source)), factor), ws.audio_path(target))


def _generate_vc(ws: Workspace, entries) -> list[store.ManifestEntry]:
    cfg = ws.cfg
    acfg = cfg["augment"]
    mode = acfg["vc_mode"]
    seed = stage_seed(cfg["seed"], "augment.vc")
    fcfg, params = _feature_config(cfg), _encoder(cfg)
    if mode == "in_set":
        targets = entries
    else:
        oos = require(cfg["data"]["out_of_set_manifest"], "out-of-set manifest (data.out_of_set_manifest)")
        targets = store.read_manifest(oos)
    speakers = sorted({e.speaker_label for e in targets})
    embs = ordered_map(lambda e: _embed_file(ws, e, fcfg, params), targets, cfg["jobs"])
    centroids = aug.speaker_centroids(embs)
    plan = aug.generation_budget(speakers, mode, entries, seed, acfg["vc_per_speaker"])
    by_id = {e.utt_id: e for e in entries}
    origin = "surrogate_vc"
    out_dir = ws.dir("audio/vc")
    phrase = {e.utt_id: e.phrase_id for e in entries}
    result = []
    for p in plan:
        result.append(store.ManifestEntry(p.utt_id, p.target_speaker, f"audio/vc/{aug.safe_name(p.utt_id)}.wav",
                                          phrase[p.source_utt_id], origin))

    def render(i):
        p, e = plan[i], result[i]
        src = read_wav(ws.audio_path(by_id[p.source_utt_id]))
        out = aug.surrogate_vc(src, centroids[p.target_speaker], acfg["vc_strength"], seed + i)
        write_wav(out, out_dir / Path(e.audio_path).name)

    ordered_map(render, range(len(plan)), cfg["jobs"])
    sources = {p.utt_id: p.source_utt_id for p in plan}
    store.atomic_write_text(ws.root / "manifests" / "vc_sources.json", json.dumps(sources, indent=1, sort_keys=True) + "\n")
    return result


# -- extract -----------------------------------------------------------------

def _manifests_to_embed(ws: Workspace):
    paths = [require(ws.augmented, "augmented manifest (run 'augment' first)")]
    if ws.candidates.exists():
        paths.append(ws.candidates)
    for key in ("test_manifest", "out_of_set_manifest"):
        if ws.cfg["data"][key]:
            paths.append(require(ws.cfg["data"][key], f"data.{key}"))
    return paths


def cmd_extract(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    paths = _manifests_to_embed(ws)
    entries = {}
    for p in paths:
        for e in store.read_manifest(p):
            entries.setdefault(e.utt_id, e)
    todo = [entries[k] for k in sorted(entries)]
    fcfg, params = _feature_config(cfg), _encoder(cfg)

    def work(entry):
        try:
            return _embed_file(ws, entry, fcfg, params), None
        except (AugkitError, OSError) as exc:
            return None, f"{entry.utt_id}\t{type(exc).__name__}: {exc}"

    results = ordered_map(work, todo, cfg["jobs"])
    ok = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    ws.dir("emb")
    store.write_store(ws.embeddings, [e.utterance_id for e in ok], [e.vector for e in ok])
    fail_path = ws.root / "emb" / "failures.txt"
    if failures:
        store.atomic_write_text(fail_path, "\n".join(failures) + "\n")
    else:
        fail_path.unlink(missing_ok=True)
    write_summary(ws, "extract", paths, [ws.embeddings], started, {"count": len(ok), "failures": len(failures)})
    if failures:
        raise DataError(f"{len(failures)} utterance(s) failed to embed; see {fail_path}")
    return {"count": len(ok), "message": f"extracted {len(ok)} embeddings"}


def load_store_map(path) -> dict[str, np.ndarray]:
    ids, matrix = store.read_store(path)
    return dict(zip(ids, matrix.astype(np.float64)))


# -- filter ------------------------------------------------------------------

def cmd_filter(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    augmented = store.read_manifest(require(ws.augmented, "augmented manifest (run 'augment' first)"))
    base_records = store.read_records(store.aug_log_path(ws.augmented)) if store.aug_log_path(ws.augmented).exists() else []
    out, records, stats = augmented, list(base_records), None
    if ws.candidates.exists():
        emb = load_store_map(require(ws.embeddings, "embedding store (run 'extract' first)"))
        mode = cfg["augment"]["vc_mode"]
        if mode == "in_set":
            refs = [e for e in augmented if e.origin == "original"]
        else:
            refs = store.read_manifest(require(cfg["data"]["out_of_set_manifest"], "data.out_of_set_manifest"))
        missing = [e.utt_id for e in refs if e.utt_id not in emb]
        if missing:
            raise DependencyError(f"embeddings missing for reference utterances: {missing[:5]}")
        centroids = aug.speaker_centroids([emb[e.utt_id] for e in refs], [e.speaker_label for e in refs])
        cand_entries = store.read_manifest(ws.candidates)
        sources_path = ws.root / "manifests" / "vc_sources.json"
        sources = json.loads(sources_path.read_text()) if sources_path.exists() else {}
        absent = [c.utt_id for c in cand_entries if c.utt_id not in emb]
        if absent:
            raise DependencyError(f"embeddings missing for {len(absent)} VC candidate(s); rerun 'extract'")
        cands = [aug.Candidate(c.utt_id, c.speaker_label, emb[c.utt_id], sources.get(c.utt_id, ""),
                               c.audio_path, c.phrase_id, c.origin) for c in cand_entries]
        threshold = cfg["filter"][f"{mode}_threshold"]
        kept, vc_records = aug.filter_generated(cands, centroids, aug.FilterPolicy(mode, threshold))
        out = augmented + kept
        records += vc_records
        stats = aug.retention_stats(vc_records)
    store.write_manifest(ws.filtered, out)
    store.write_records(store.aug_log_path(ws.filtered), records)
    ds = dataset_stats(out)
    write_summary(ws, "filter", [ws.augmented, ws.candidates, ws.embeddings],
                  [ws.filtered, store.aug_log_path(ws.filtered)], started, {"dataset": ds, "retention": stats})
    msg = count_line(ds)
    if stats:
        msg += f" (retained {stats['retained']}/{stats['candidates']} VC candidates)"
    return {"dataset": ds, "retention": stats, "message": msg}


# -- train -------------------------------------------------------------------

def training_manifest(ws: Workspace) -> Path:
    if ws.filtered.exists():
        return ws.filtered
    return require(ws.augmented, "training manifest (run 'augment' and 'filter' first)")


def save_head(ws: Workspace, params: HeadParams, labels, meta: dict) -> None:
    ids = [f"class:{lab}" for lab in labels]
    rows = list(params.weight)
    if params.projection is not None:
        ids += [f"proj:{i}" for i in range(params.projection.shape[0])]
        rows += list(params.projection)
    store.write_store(ws.head, ids, rows)
    store.atomic_write_text(ws.head.with_suffix(".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_head(path) -> tuple[HeadParams, list[str], dict]:
    ids, matrix = store.read_store(path)
    meta_path = Path(path).with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    weight = np.array([row for i, row in zip(ids, matrix) if i.startswith("class:")], dtype=np.float64)
    labels = [i[len("class:"):] for i in ids if i.startswith("class:")]
    proj_rows = [row for i, row in zip(ids, matrix) if i.startswith("proj:")]
    projection = np.array(proj_rows, dtype=np.float64) if proj_rows else None
    return HeadParams(weight, projection), labels, meta


def cmd_train(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    mpath = training_manifest(ws)
    entries = store.read_manifest(mpath)
    emb = load_store_map(require(ws.embeddings, "embedding store (run 'extract' first)"))
    missing = [e.utt_id for e in entries if e.utt_id not in emb]
    if missing:
        raise DependencyError(f"embeddings missing for {len(missing)} training utterance(s), e.g. {missing[0]}")
    tcfg = cfg["train"]
    dim = cfg["encoder"]["embed_dim"]
    seed = stage_seed(cfg["seed"], "train")

    base = [e for e in entries if e.origin == "original"]
    base_labels = sorted({e.speaker_label for e in base})
    all_labels = base_labels + sorted({e.speaker_label for e in entries} - set(base_labels))
    index = {lab: i for i, lab in enumerate(all_labels)}

    def arrays(items):
        return (np.array([emb[e.utt_id] for e in items]), np.array([index[e.speaker_label] for e in items]))

    traces = {}
    meta_sched = {}
    if tcfg["recipe"] == "pretrain_finetune" and len(base_labels) >= 2:
        pre_cfg = ArcFaceConfig(len(base_labels), dim, **cfg["arcface"])
        sched = TrainSchedule(tcfg["pretrain_lr"], tcfg["pretrain_epochs"], tcfg["momentum"],
                              tcfg["batch_size"], seed, tcfg["train_projection"])
        x, y = arrays(base)
        pre = train_head(x, y, pre_cfg, sched)
        traces["pretrain"] = pre.loss_trace
        meta_sched["pretrain"] = asdict(sched)
        init = expand_head(pre.params, len(all_labels), seed + 1)
        lr, epochs = tcfg["finetune_lr"], tcfg["finetune_epochs"]
        phase = "finetune"
    else:
        init = init_head(ArcFaceConfig(len(all_labels), dim, **cfg["arcface"]), seed, tcfg["train_projection"])
        lr, epochs = tcfg["pretrain_lr"], tcfg["pretrain_epochs"]
        phase = "train"
    head_cfg = ArcFaceConfig(len(all_labels), dim, **cfg["arcface"])
    sched = TrainSchedule(lr, epochs, tcfg["momentum"], tcfg["batch_size"], seed + 2, tcfg["train_projection"])
    x, y = arrays(entries)
    result = train_head(x, y, head_cfg, sched, init=init)
    traces[phase] = result.loss_trace
    meta_sched[phase] = asdict(sched)
    meta = {"arcface": asdict(head_cfg), "schedule": meta_sched, "labels": all_labels,
            "loss_trace": traces, "train_accuracy": result.accuracy}
    save_head(ws, result.params, all_labels, meta)
    write_summary(ws, "train", [mpath, ws.embeddings], [ws.head, ws.head.with_suffix(".json")], started)
    return {"classes": len(all_labels), "accuracy": result.accuracy,
            "message": f"trained head on {len(all_labels)} classes, train accuracy {result.accuracy:.3f}"}


# -- score / evaluate --------------------------------------------------------

def cmd_score(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    trials = store.read_trials(require(cfg["data"]["trials"], "trial file (data.trials)"))
    emb = load_store_map(require(ws.embeddings, "embedding store (run 'extract' first)"))
    if cfg["score"]["use_projection"]:
        params, _, _ = load_head(require(ws.head, "head checkpoint (run 'train' first)"))
        if params.projection is not None:
            ids = list(emb)
            projected = project(np.array([emb[i] for i in ids]), params)
            emb = dict(zip(ids, projected))
    enroll = store.read_enrollments(cfg["data"]["enrollments"]) if cfg["data"]["enrollments"] else None
    scores = score_trials(trials, emb, enroll)
    ws.dir("scores")
    store.write_scores(ws.scores, trials, scores)
    write_summary(ws, "score", [cfg["data"]["trials"], ws.embeddings, ws.head], [ws.scores], started)
    return {"trials": len(trials), "message": f"scored {len(trials)} trials"}


def evaluate_scores(trials, rows, dcf: DcfConfig):
    if len(trials) != len(rows):
        raise DataError(f"{len(rows)} scores for {len(trials)} trials")
    for t, (e, v, _) in zip(trials, rows):
        if (t.enroll_id, t.test_id) != (e, v):
            raise DataError(f"score file out of step with trials at {e} {v}")
    scores = np.array([r[2] for r in rows])
    labels = np.array([t.is_target for t in trials])
    eer, eer_thr = compute_eer(scores, labels)
    mdcf, mdcf_thr = compute_min_dcf(scores, labels, dcf)
    metrics = {"eer": eer, "eer_threshold": eer_thr, "mdcf": mdcf, "mdcf_threshold": mdcf_thr,
               "p_target": dcf.p_target, "c_miss": dcf.c_miss, "c_fa": dcf.c_fa,
               "targets": int(labels.sum()), "nontargets": int((~labels).sum())}
    return metrics, det_points(scores, labels)


def cmd_evaluate(cfg: dict) -> dict:
    started = time.perf_counter()
    ws = Workspace(cfg)
    trials_path = require(cfg["data"]["trials"], "trial file (data.trials)")
    trials = store.read_trials(trials_path)
    rows = store.read_scores(require(ws.scores, "score file (run 'score' first)"))
    metrics, det = evaluate_scores(trials, rows, DcfConfig(**cfg["dcf"]))
    mpath = training_manifest(ws)
    entries = store.read_manifest(mpath)
    log_path = store.aug_log_path(mpath)
    records = store.read_records(log_path) if log_path.exists() else []
    vc_records = [r for r in records if r.similarity is not None]

    out = ws.conditions / cfg["condition"]
    out.mkdir(parents=True, exist_ok=True)
    result = {
        "condition": cfg["condition"],
        "metrics": metrics,
        "dataset": dataset_stats(entries),
        "retention": aug.retention_stats(vc_records) if vc_records else None,
    }
    store.atomic_write_text(out / "metrics.json", _dumps(result))
    store.atomic_write_text(out / "det.csv", format_det_csv(det))
    store.atomic_write_text(out / "scores.txt", _labeled(trials, rows))
    store.write_records(out / "filter_records.jsonl", vc_records)
    write_summary(ws, "evaluate", [trials_path, ws.scores, mpath], [out / "metrics.json", out / "det.csv"], started)
    return {**result, "message": f"EER {100 * metrics['eer']:.6f}%  minDCF(p={metrics['p_target']}) {metrics['mdcf']:.6f}"}


def _labeled(trials, rows) -> str:
    return "".join(f"{e} {v} {s:.6f} {'target' if t.is_target else 'nontarget'}\n"
                   for t, (e, v, s) in zip(trials, rows))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def cmd_report(cfg: dict) -> dict:
    from .report import build_report
    started = time.perf_counter()
    ws = Workspace(cfg)
    bundle = build_report(ws)
    write_summary(ws, "report", [], [ws.root / "reports" / "report.json"], started)
    return bundle


COMMANDS = {
    "augment": cmd_augment,
    "extract": cmd_extract,
    "filter": cmd_filter,
    "train": cmd_train,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}
