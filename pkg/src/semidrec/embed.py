"""Text embedding providers and the precomputed-embedding TSV bridge.

The default provider is a seeded feature-hashing bag-of-tokens embedder:
deterministic, dependency-free, and good enough to give every downstream
stage real signal at desk scale. Users who run a real text encoder offline
can feed its vectors in through the TSV format (header ``D=<int>``, rows
``key TAB v1,v2,...``).
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

from .errors import DataError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN_RE.findall(text.lower())


class HashingEmbedder:
    """Feature-hashing bag-of-tokens embedder.

    Each token hashes to a (bucket, sign) pair; token counts accumulate into
    the bucket with that sign and the nonzero result is L2-normalized. The
    vector depends only on the token multiset, so word order never matters.
    Empty text maps to the zero vector.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self.name = f"hashing-d{dim}-s{seed}"

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(f"{self.seed}\x1f{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % self.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        return bucket, sign

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            bucket, sign = self._slot(token)
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class PrecomputedEmbedder:
    """Provider backed by a key -> vector map loaded from the TSV format."""

    def __init__(self, vectors: dict[str, np.ndarray], name: str = "precomputed"):
        if not vectors:
            raise DataError("precomputed embedder needs at least one vector")
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise DataError(f"inconsistent vector dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self.name = name
        self._vectors = vectors

    def embed_text(self, key: str) -> np.ndarray:
        try:
            return self._vectors[key]
        except KeyError:
            raise KeyError(f"no precomputed embedding for key {key!r}") from None


def save_embeddings(path, vectors: dict[str, np.ndarray], dim: int) -> None:
    """Write the TSV bridge format. Floats use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"D={dim}\n")
        for key in sorted(vectors):
            vec = np.asarray(vectors[key], dtype=float)
            if vec.shape != (dim,):
                raise DataError(f"vector for {key!r} has shape {vec.shape}, expected ({dim},)")
            fh.write(key + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Load the TSV bridge format; any row off the declared dimension is fatal."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("D="):
        raise DataError(f"{path}: missing 'D=<int>' header")
    try:
        dim = int(lines[0][2:])
    except ValueError:
        raise DataError(f"{path}: bad dimension header {lines[0]!r}") from None
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        key, _, rest = line.partition("\t")
        values = rest.split(",") if rest else []
        if len(values) != dim:
            raise DataError(f"{path}:{lineno}: row has {len(values)} values, header says D={dim}")
        vec = np.array([float(v) for v in values])
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{path}:{lineno}: non-finite entry")
        vectors[key] = vec
    return vectors
