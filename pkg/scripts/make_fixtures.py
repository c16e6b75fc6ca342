#!/usr/bin/env python
"""Regenerate the bundled demo fixtures.

Everything here is seeded, so reruns reproduce the committed files exactly.
The toy language model's bigram graph is shaped so that greedy decoding says
"walk to the chair" and larger contrastive penalties steer it toward less
probable but less redundant continuations.
"""

from __future__ import annotations

import json
import math
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from navinstruct.providers import bbox_key  # noqa: E402

OUT_DIR = ROOT / "src" / "navinstruct" / "fixtures"

SCAN = "grid10"
GRID = 10
SPACING = 2.0
PANO_W = 1024.0
PANO_H = 1024.0

LABELS = ["chair", "table", "door", "window", "sofa", "plant",
          "staircase", "picture"]
NOUNS = ["chair", "table", "door", "window", "sofa", "plant", "staircase",
         "picture", "hallway", "room", "stairs"]
ADJECTIVES = ["wooden", "small"]

TOKENS = ["<s>", "</s>", "walk", "go", "turn", "to", "the", "towards",
          "past", "up", "down", "and", "left", "right", "straight",
          "wooden", "small"] + NOUNS

NOUN_ROW = {"</s>": 0.7, "and": 0.3}
BIGRAM = {
    "<s>": {"walk": 0.5, "go": 0.3, "turn": 0.2},
    "walk": {"to": 0.5, "towards": 0.3, "past": 0.2},
    "go": {"straight": 0.5, "to": 0.3, "up": 0.2},
    "turn": {"left": 0.5, "right": 0.5},
    "to": {"the": 0.9, "</s>": 0.1},
    "towards": {"the": 0.9, "</s>": 0.1},
    "past": {"the": 1.0},
    "up": {"the": 0.6, "</s>": 0.4},
    "down": {"the": 0.6, "</s>": 0.4},
    "the": {"chair": 0.2, "wooden": 0.15, "table": 0.13, "door": 0.12,
            "window": 0.1, "sofa": 0.08, "plant": 0.07, "staircase": 0.05,
            "picture": 0.04, "small": 0.03, "stairs": 0.02, "hallway": 0.01},
    "and": {"walk": 0.4, "go": 0.3, "turn": 0.3},
    "left": {"</s>": 0.6, "and": 0.4},
    "right": {"</s>": 0.6, "and": 0.4},
    "straight": {"</s>": 0.7, "and": 0.3},
    "wooden": {"chair": 0.6, "table": 0.4},
    "small": {"table": 0.5, "room": 0.3, "picture": 0.2},
    **{noun: dict(NOUN_ROW) for noun in NOUNS},
}

# Token representations drive the degeneration penalty. Function words sit in
# hand-picked directions ("to" close to "walk", "towards" nearly orthogonal)
# so raising alpha visibly changes the chosen path; nouns fan out on an arc.
FUNCTION_REPS = {
    "<s>": [0.1, 0.1, 0.1, 0.1],
    "</s>": [0.5, 0.5, 0.5, 0.5],
    "walk": [1.0, 0.0, 0.0, 0.0],
    "go": [0.9, 0.3, 0.0, 0.1],
    "turn": [0.9, 0.0, 0.3, 0.1],
    "to": [0.5, 0.866, 0.0, 0.0],
    "towards": [0.1, 0.0, 0.995, 0.0],
    "past": [0.3, 0.3, 0.9, 0.0],
    "up": [0.4, 0.8, 0.2, 0.2],
    "down": [0.4, 0.2, 0.8, 0.2],
    "the": [0.0, 0.3, 0.3, 0.905],
    "and": [0.6, 0.6, 0.1, 0.5],
    "left": [0.7, 0.5, -0.3, 0.2],
    "right": [0.7, -0.3, 0.5, 0.2],
    "straight": [0.8, 0.4, 0.4, 0.0],
    "wooden": [0.2, 0.7, -0.6, 0.2],
    "small": [0.2, -0.6, 0.7, 0.2],
}


def viewpoint_id(row: int, col: int) -> str:
    return f"vp_{row}_{col}"


def make_graph() -> dict:
    viewpoints = []
    for row in range(GRID):
        for col in range(GRID):
            z = 0.25 if (row * GRID + col) % 7 == 0 else 0.0
            viewpoints.append({
                "id": viewpoint_id(row, col),
                "pos": [col * SPACING, row * SPACING, z],
            })
    edges = []
    for row in range(GRID):
        for col in range(GRID):
            if col + 1 < GRID:
                edges.append([viewpoint_id(row, col), viewpoint_id(row, col + 1)])
            if row + 1 < GRID:
                edges.append([viewpoint_id(row, col), viewpoint_id(row + 1, col)])
    return {"scan_id": SCAN, "viewpoints": viewpoints, "edges": edges}


def make_detections() -> dict:
    table = {}
    for row in range(GRID):
        for col in range(GRID):
            vp = viewpoint_id(row, col)
            rng = random.Random(f"det:{vp}")
            detections = []
            for _ in range(rng.randint(2, 4)):
                width = rng.uniform(60.0, 140.0)
                x0 = rng.uniform(0.0, PANO_W - width)
                height = rng.uniform(80.0, 200.0)
                y0 = rng.uniform(200.0, PANO_H - height - 100.0)
                detections.append({
                    "label": rng.choice(LABELS),
                    "bbox": [round(x0, 2), round(y0, 2),
                             round(x0 + width, 2), round(y0 + height, 2)],
                    "confidence": round(rng.uniform(0.35, 0.98), 3),
                })
            table[f"{SCAN}/{vp}"] = detections
    return table


def word_vec(word: str, dim: int = 8) -> list[float]:
    rng = random.Random(f"text:{word}")
    return [rng.uniform(-1.0, 1.0) for _ in range(dim)]


def phrase_vec(phrase: str) -> list[float]:
    vecs = [word_vec(word) for word in phrase.split()]
    return [sum(col) / len(vecs) for col in zip(*vecs)]


def make_embeddings(detections: dict) -> dict:
    phrases = list(NOUNS) + list(ADJECTIVES)
    phrases += [f"{adj} {noun}" for adj in ADJECTIVES for noun in NOUNS]
    text = {phrase: phrase_vec(phrase) for phrase in sorted(set(phrases))}
    image = {}
    for scan_vp, dets in detections.items():
        for det in dets:
            key = f"{scan_vp}/{bbox_key(det['bbox'])}"
            base = phrase_vec(det["label"])
            rng = random.Random(f"img:{key}")
            image[key] = [v + rng.uniform(-0.05, 0.05) for v in base]
    return {"text": text, "image": image}


def make_toy_lm() -> dict:
    reps = dict(FUNCTION_REPS)
    for j, noun in enumerate(NOUNS):
        theta = math.pi * j / (len(NOUNS) - 1)
        reps[noun] = [0.05, round(math.cos(theta), 6),
                      round(math.sin(theta), 6), 0.2]
    missing = [t for t in TOKENS if t not in reps]
    if missing:
        raise AssertionError(f"tokens without representations: {missing}")
    return {
        "tokens": TOKENS,
        "bos": "<s>",
        "eos": "</s>",
        "bigram": BIGRAM,
        "reps": reps,
    }


def make_demo_config() -> dict:
    return {
        "graph": "grid10.json",
        "categories": "categories.json",
        "providers": {
            "detector": {"fixture": "detections.json"},
            "embedding": {"fixture": "embeddings.json"},
            "lm": {"fixture": "toy_lm.json"},
        },
        "count": 3,
        "min_steps": 5,
        "max_steps": 7,
        "seed": 7,
        "variants": [
            {"alpha": 0.3, "k": 4},
            {"alpha": 0.5, "k": 4},
            {"alpha": 0.7, "k": 8},
        ],
        "out": "dataset.jsonl",
    }


def preview_decodes(lm_path: Path) -> None:
    """Print what each demo variant says, as a sanity check on the bigrams."""
    from navinstruct.providers import ToyLM
    from navinstruct.speaker import DecodingParams, decode

    lm = ToyLM.from_file(str(lm_path))
    for alpha, k in [(0.0, 4), (0.3, 4), (0.5, 4), (0.7, 8)]:
        params = DecodingParams(k=k, alpha=alpha)
        out = decode("", "", [], lm, lm.vocabulary, params)
        print(f"  alpha={alpha:.1f} k={k}: {out.text!r} "
              f"(truncated={out.truncated})")


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    detections = make_detections()
    files = {
        "grid10.json": make_graph(),
        "categories.json": {SCAN: LABELS},
        "detections.json": detections,
        "embeddings.json": make_embeddings(detections),
        "toy_lm.json": make_toy_lm(),
        "demo_config.json": make_demo_config(),
    }
    for name, payload in files.items():
        path = OUT_DIR / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}")
    preview_decodes(OUT_DIR / "toy_lm.json")


if __name__ == "__main__":
    main()
