"""Side-by-side condition report (text, JSON, CSV and figures)."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from . import plotting, store
from .errors import DependencyError


def _order(names):
    return sorted(names, key=lambda n: (n != "baseline", n))


def load_conditions(ws) -> list[dict]:
    root = ws.conditions
    if not root.is_dir():
        raise DependencyError(f"no evaluated conditions under {root} (run 'evaluate' first)")
    names = _order(p.name for p in root.iterdir() if (p / "metrics.json").exists())
    if not names:
        raise DependencyError(f"no evaluated conditions under {root} (run 'evaluate' first)")
    return [json.loads((root / n / "metrics.json").read_text()) for n in names]


def table_rows(conditions) -> list[dict]:
    rows = []
    for c in conditions:
        m, d = c["metrics"], c["dataset"]
        r = c.get("retention") or {}
        rows.append({
            "condition": c["condition"],
            "speakers": d["speakers"],
            "utterances": d["utterances"],
            "spk_utt": f"{d['speakers']} / {d['utterances']}",
            "eer_percent": round(100 * m["eer"], 6),
            "mdcf": round(m["mdcf"], 6),
            "p_target": m["p_target"],
            "vc_retained": r.get("retained"),
            "vc_candidates": r.get("candidates"),
        })
    return rows


def format_text(rows) -> str:
    head = ("Condition", "Spk / Utt Num.", "EER[%]", "mDCF", "VC kept")
    body = [(r["condition"], r["spk_utt"], f"{r['eer_percent']:.6f}", f"{r['mdcf']:.6f}",
             "-" if r["vc_candidates"] is None else f"{r['vc_retained']}/{r['vc_candidates']}") for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    p = rows[0]["p_target"] if rows else 0.1
    out = [f"Speaker verification under data augmentation (mDCF at p_target={p})", "",
           line(head), line("-" * w for w in widths)]
    out += [line(b) for b in body]
    return "\n".join(out) + "\n"


def format_csv(rows) -> str:
    cols = ["condition", "speakers", "utterances", "eer_percent", "mdcf", "p_target", "vc_retained", "vc_candidates"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r[k] is None else r[k]) for k in cols})
    return buf.getvalue()


def _read_labeled_scores(path):
    scores, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                scores.append(float(parts[2]))
                labels.append(parts[3] == "target")
    return np.array(scores), np.array(labels)


def render_figures(ws, conditions) -> list[str]:
    fig_dir = ws.dir("reports/figures")
    written = []
    for c in conditions:
        name = c["condition"]
        cdir = ws.conditions / name
        scores, labels = _read_labeled_scores(cdir / "scores.txt")
        path = fig_dir / f"scores_{name}.png"
        plotting.score_histogram(scores, labels, path, c["metrics"]["eer_threshold"], title=name)
        written.append(path)
        rec_path = cdir / "filter_records.jsonl"
        records = store.read_records(rec_path) if rec_path.exists() else []
        if records:
            path = fig_dir / f"similarity_{name}.png"
            plotting.similarity_histogram([r.similarity for r in records], [r.retained for r in records],
                                          _threshold(ws, records), path, title=f"VC candidates: {name}")
            written.append(path)
    path = fig_dir / "conditions.png"
    plotting.condition_bars([c["condition"] for c in conditions], [c["metrics"]["eer"] for c in conditions],
                            [c["metrics"]["mdcf"] for c in conditions], path)
    written.append(path)
    return [str(p.relative_to(ws.root)) for p in written]


def _threshold(ws, records):
    mode = records[0].method.removeprefix("vc_")
    return ws.cfg["filter"].get(f"{mode}_threshold")


def build_report(ws) -> dict:
    conditions = load_conditions(ws)
    rows = table_rows(conditions)
    figures = render_figures(ws, conditions)
    bundle = {"conditions": conditions, "table": rows, "figures": figures}
    reports = ws.dir("reports")
    text = format_text(rows)
    store.atomic_write_text(reports / "report.json", json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    store.atomic_write_text(reports / "report.txt", text)
    store.atomic_write_text(reports / "report.csv", format_csv(rows))
    return {**bundle, "message": text.rstrip()}
