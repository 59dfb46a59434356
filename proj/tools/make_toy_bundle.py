#!/usr/bin/env python3
"""Writes the small synthetic bundle under tests/data/toy.

12 images, 40 caption embeddings (12 instances x 3 languages + 4 references),
d = 16. Caption quality drives both the embedding geometry and the ratings, so
the pipeline produces non-trivial correlations. Re-running with the same seed
reproduces the checked-in files byte for byte.
"""
import argparse
import json
import pathlib
import struct

import numpy as np

DIM = 16
LANGS = ["de", "en", "pt"]
N_INST = 12


def write_store(path, records):
    with open(path, "wb") as f:
        f.write(b"CAPEVEC1")
        f.write(struct.pack("<IIQ", 1, DIM, len(records)))
        for rid, vec, modality in records:
            raw = rid.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", modality))
            f.write(np.asarray(vec, dtype="<f4").tobytes())


def unit(v):
    return v / np.linalg.norm(v)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data/toy")
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    images = [unit(rng.normal(size=DIM)) for _ in range(N_INST)]
    # Quality in [0, 1]: high quality -> caption close to its image.
    quality = np.linspace(0.05, 0.95, N_INST)
    rng.shuffle(quality)
    ratings = np.clip(np.round(1 + 3 * quality + rng.normal(scale=0.35, size=N_INST)), 1, 4)

    texts = []
    base = {}
    for k in range(N_INST):
        noise = unit(rng.normal(size=DIM))
        base[k] = quality[k] * images[k] + (1.0 - quality[k]) * noise
    for lang in LANGS:
        for k in range(N_INST):
            drift = 0.0 if lang == "en" else 0.15
            vec = unit(base[k] + drift * rng.normal(size=DIM))
            texts.append((f"cap_{lang}_{k:02d}", vec, 1))
    for k in range(4):
        vec = unit(images[k] + 0.4 * rng.normal(size=DIM))
        texts.append((f"ref_en_{k:02d}", vec, 1))
    assert len(texts) == 40

    write_store(out / "images.capevec", [(f"img{k:02d}", images[k], 0) for k in range(N_INST)])
    write_store(out / "texts.capevec", texts)

    pairs = []
    for lang in LANGS:
        for k in range(N_INST):
            pairs.append({
                "instance_id": f"inst{k:02d}",
                "image_id": f"img{k:02d}",
                "candidate_id": f"cap_{lang}_{k:02d}",
                "reference_ids": [f"ref_en_{k:02d}"] if k < 4 else [],
                "rating": float(ratings[k]),
                "language": lang,
                "split": "test",
            })
    write_jsonl(out / "pairs.jsonl", pairs)

    phenomena = ["counting", "existence", "relations"]
    foils = []
    for lang in LANGS:
        for k in range(N_INST):
            foils.append({
                "image_id": f"img{k:02d}",
                "caption_id": f"cap_{lang}_{k:02d}",
                "foil_id": f"cap_{lang}_{(k + 1) % N_INST:02d}",
                "phenomenon": phenomena[k % 3],
                "language": lang,
            })
    write_jsonl(out / "foils.jsonl", foils)

    nli = []
    for lang in LANGS:
        for k in range(6):
            for offset, label in ((0, "entailment"), (1, "neutral"), (6, "contradiction")):
                nli.append({
                    "image_id": f"img{k:02d}",
                    "caption_id": f"cap_{lang}_{(k + offset) % N_INST:02d}",
                    "label": label,
                    "language": lang,
                })
    write_jsonl(out / "nli.jsonl", nli)

    marvl = []
    for lang in LANGS:
        for g in range(3):
            cap = f"cap_{lang}_{g:02d}"
            other = [(g + 3 + j) % N_INST for j in range(6)]
            rows = [
                (True, g, other[0]), (True, g, other[1]),
                (False, other[2], other[3]), (False, other[4], other[5]),
            ]
            if lang == "pt" and g == 2:
                rows = rows[:3]  # malformed group: 2 true + 1 false
            for label, left, right in rows:
                marvl.append({
                    "group_id": f"{lang}-g{g}",
                    "caption_id": cap,
                    "image_left": f"img{left:02d}",
                    "image_right": f"img{right:02d}",
                    "label": label,
                    "language": lang,
                })
    write_jsonl(out / "marvl.jsonl", marvl)

    categories = ["HC", "HI", "HM", "MM"]
    pascal = []
    for k in range(N_INST):
        votes_a = int(rng.integers(0, 49))
        pascal.append({
            "image_id": f"img{k:02d}",
            "candidate_a": f"cap_en_{k:02d}",
            "candidate_b": f"cap_en_{(k + 5) % N_INST:02d}",
            "category": categories[k % 4],
            "votes_a": votes_a,
            "votes_b": 48 - votes_a,
            "reference_ids": [f"ref_en_{k % 4:02d}"],
        })
    write_jsonl(out / "pascal.jsonl", pascal)

    cands = []
    for lang in ("de", "pt"):
        for k in range(N_INST):
            for b in range(3):
                cands.append({
                    "source_id": f"inst{k:02d}",
                    "target_language": lang,
                    "candidate_id": f"{lang}-{k:02d}-beam{b}",
                    "text": f"translation {b} of instance {k} into {lang}",
                    "lang_ok": bool(b != 1 or k % 2 == 0),
                    "qe_score": round(float(rng.uniform(0.4, 0.95)), 4),
                })
        # One source whose candidates all fail the language check.
        for b in range(2):
            cands.append({
                "source_id": "inst99",
                "target_language": lang,
                "candidate_id": f"{lang}-99-beam{b}",
                "text": f"wrong-language output {b}",
                "lang_ok": False,
                "qe_score": 0.9,
            })
    write_jsonl(out / "mt_candidates.jsonl", cands)


if __name__ == "__main__":
    main()
