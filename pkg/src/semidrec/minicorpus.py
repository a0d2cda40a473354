"""Synthetic review corpus small enough to run the whole pipeline offline.

200 users and 150 items in 8 disjoint topic clusters. Each user walks a
consecutive window of their cluster's items, so successor co-occurrence is
informative; reviews and titles draw from the cluster vocabulary, so token
overlap separates in-cluster from out-of-cluster items. Every user has 8 to
14 interactions and every item is reviewed by at least 5 users, so 5-core
filtering keeps everything. Fully deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

NUM_USERS = 200
NUM_ITEMS = 150
NUM_CLUSTERS = 8

THEMES = [
    ["garden", "rose", "tulip", "soil", "bloom", "petal", "seedling", "trowel", "orchid", "fern"],
    ["kitchen", "skillet", "whisk", "oven", "spice", "ladle", "saucepan", "grill", "cleaver", "apron"],
    ["audio", "speaker", "bass", "treble", "headphone", "stereo", "amplifier", "volume", "chord", "vinyl"],
    ["yarn", "knitting", "crochet", "wool", "stitch", "needle", "fleece", "loom", "bobbin", "weave"],
    ["trail", "hiking", "summit", "compass", "tent", "backpack", "ridge", "canyon", "lantern", "boot"],
    ["canvas", "easel", "brush", "pigment", "sketch", "palette", "mural", "ink", "charcoal", "fresco"],
    ["chess", "rook", "pawn", "gambit", "checkmate", "bishop", "opening", "endgame", "tactics", "clock"],
    ["reef", "coral", "snorkel", "tide", "wave", "kelp", "dolphin", "seashell", "lagoon", "driftwood"],
]

ADJECTIVES = [
    "classic", "deluxe", "compact", "premium", "sturdy", "gentle", "bright", "smooth",
    "rustic", "modern", "grand", "little", "super", "ultra", "prime", "cozy",
    "swift", "bold", "quiet", "fresh",
]


def _item_id(i: int) -> str:
    return f"AZ{i:04d}Q"


def _user_id(u: int) -> str:
    return f"U{u:03d}"


def generate(seed: int = 7) -> tuple[list[dict], list[dict]]:
    """Returns (review records, metadata records) in the raw ingest schema."""
    rng = np.random.default_rng(seed)
    metadata = []
    titles_seen = set()
    cluster_items: list[list[str]] = [[] for _ in range(NUM_CLUSTERS)]
    for i in range(NUM_ITEMS):
        c = i % NUM_CLUSTERS
        vocab = THEMES[c]
        while True:
            words = [ADJECTIVES[rng.integers(len(ADJECTIVES))]]
            words += [vocab[j] for j in rng.choice(len(vocab), size=2, replace=False)]
            title = " ".join(w.capitalize() for w in words)
            if title not in titles_seen:
                break
        titles_seen.add(title)
        metadata.append({"asin": _item_id(i), "title": title})
        cluster_items[c].append(_item_id(i))

    reviews = []
    for u in range(NUM_USERS):
        c = u % NUM_CLUSTERS
        items = cluster_items[c]
        length = 8 + u % 7
        start = (u * 3) % len(items)
        vocab = THEMES[c]
        for j in range(length):
            words = [vocab[w] for w in rng.integers(0, len(vocab), size=6)]
            reviews.append({
                "reviewerID": _user_id(u),
                "asin": items[(start + j) % len(items)],
                "overall": float((u + j) % 5 + 1),
                "unixReviewTime": 1_400_000_000 + j * 86_400 + u * 100,
                "reviewText": " ".join(words),
            })
    return reviews, metadata


def write_minicorpus(directory, seed: int = 7) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    reviews, metadata = generate(seed)
    reviews_path = directory / "reviews.jsonl"
    meta_path = directory / "meta.jsonl"
    with open(reviews_path, "w", encoding="utf-8") as fh:
        for rec in reviews:
            fh.write(json.dumps(rec) + "\n")
    with open(meta_path, "w", encoding="utf-8") as fh:
        for rec in metadata:
            fh.write(json.dumps(rec) + "\n")
    return reviews_path, meta_path
