"""On-disk formats: embedding store, manifests, trial and score files.

Embedding store layout (little-endian)::

    b"EMB1" | version u32 | dim u32 | count u64
    count x ( id_len u16 | id utf-8 | dim x float32 )
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import MISSING, asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_IDLEN = struct.Struct("<H")

ORIGINS = ("original", "pitch_shift", "vc_in_set", "vc_out_set", "surrogate_vc")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- embedding store ---------------------------------------------------------

def encode_store(ids, vectors) -> bytes:
    ids = list(ids)
    rows = [np.asarray(v) for v in vectors]
    if len(ids) != len(rows):
        raise DataError("ids and vectors differ in length")
    dims = {r.shape for r in rows}
    if len(dims) > 1:
        raise FormatError(f"mixed embedding dimensions {sorted(d[0] for d in dims)}")
    dim = rows[0].shape[0] if rows else 0
    if rows and (rows[0].ndim != 1 or dim == 0):
        raise FormatError("embeddings must be non-empty 1-D vectors")
    parts = [_HEADER.pack(MAGIC, VERSION, dim, len(rows))]
    for utt_id, row in zip(ids, rows):
        raw_id = utt_id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise FormatError(f"id too long: {utt_id[:40]}...")
        parts.append(_IDLEN.pack(len(raw_id)))
        parts.append(raw_id)
        parts.append(np.asarray(row, dtype="<f4").tobytes())
    return b"".join(parts)


def write_store(path, ids, vectors) -> None:
    atomic_write_bytes(path, encode_store(ids, vectors))


def decode_store(data: bytes, source: str = "<bytes>") -> tuple[list[str], np.ndarray]:
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported store version {version}")
    if count and dim == 0:
        raise FormatError(f"{source}: zero dimension with {count} records")
    ids = []
    matrix = np.empty((count, dim), dtype=np.float32)
    pos = _HEADER.size
    payload = 4 * dim
    for i in range(count):
        if pos + _IDLEN.size > len(data):
            raise FormatError(f"{source}: truncated at record {i}")
        (n,) = _IDLEN.unpack_from(data, pos)
        pos += _IDLEN.size
        if pos + n + payload > len(data):
            raise FormatError(f"{source}: record {i} shorter than declared dimension {dim}")
        try:
            ids.append(data[pos:pos + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{source}: record {i} id is not UTF-8") from exc
        pos += n
        matrix[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += payload
    if pos != len(data):
        raise FormatError(f"{source}: {len(data) - pos} trailing bytes (count/dimension mismatch)")
    if len(set(ids)) != len(ids):
        raise FormatError(f"{source}: duplicate ids")
    return ids, matrix


def read_store(path) -> tuple[list[str], np.ndarray]:
    return decode_store(Path(path).read_bytes(), str(path))


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    speaker_label: str
    audio_path: str
    phrase_id: str = ""
    origin: str = "original"

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise DataError(f"{self.utt_id}: unknown origin {self.origin!r}")


@dataclass(frozen=True)
class AugmentationRecord:
    source_utt_id: str
    method: str
    parameter: str
    similarity: float | None = None
    retained: bool = True
    utt_id: str = ""


def _dump_jsonl(items) -> str:
    return "".join(json.dumps(asdict(it), ensure_ascii=False) + "\n" for it in items)


def _load_jsonl(path, cls):
    names = {f.name for f in fields(cls)}
    required = {f.name for f in fields(cls) if f.default is MISSING}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            extra = set(obj) - names
            missing = required - set(obj)
            if extra or missing:
                raise FormatError(f"{path}:{lineno}: bad keys (extra={sorted(extra)}, missing={sorted(missing)})")
            out.append(cls(**obj))
    return out


def write_manifest(path, entries) -> None:
    entries = list(entries)
    check_unique(entries)
    atomic_write_text(path, _dump_jsonl(entries))


def read_manifest(path) -> list[ManifestEntry]:
    entries = _load_jsonl(path, ManifestEntry)
    check_unique(entries, str(path))
    return entries


def check_unique(entries, source="manifest") -> None:
    seen = set()
    for e in entries:
        if e.utt_id in seen:
            raise DataError(f"{source}: duplicate utt_id {e.utt_id}")
        seen.add(e.utt_id)


def aug_log_path(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.name + ".aug.jsonl")


def write_records(path, records) -> None:
    atomic_write_text(path, _dump_jsonl(records))


def read_records(path) -> list[AugmentationRecord]:
    return _load_jsonl(path, AugmentationRecord)


# -- trials and scores -------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    is_target: bool


def read_trials(path) -> list[Trial]:
    trials = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[2] not in ("target", "nontarget"):
                raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> <target|nontarget>'")
            trials.append(Trial(parts[0], parts[1], parts[2] == "target"))
    return trials


def format_trials(trials) -> str:
    return "".join(f"{t.enroll_id} {t.test_id} {'target' if t.is_target else 'nontarget'}\n" for t in trials)


def write_trials(path, trials) -> None:
    atomic_write_text(path, format_trials(trials))


def format_scores(trials, scores) -> str:
    return "".join(f"{t.enroll_id} {t.test_id} {s:.6f}\n" for t, s in zip(trials, scores))


def write_scores(path, trials, scores) -> None:
    atomic_write_text(path, format_scores(trials, scores))


def read_scores(path) -> list[tuple[str, str, float]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> <score>'")
            try:
                rows.append((parts[0], parts[1], float(parts[2])))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: score is not a number") from exc
    return rows


def read_enrollments(path) -> dict[str, list[str]]:
    """``<enroll_id> <utt_id> [<utt_id> ...]`` per line."""
    groups = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: enrollment line needs at least one utterance")
            groups.setdefault(parts[0], []).extend(parts[1:])
    return groups
