"""Attention fusion of a user's review embeddings with their ID embedding.

Each review embedding e_i gets a logit e_i' A o against the user-ID embedding
o through a shared bilinear matrix A; the softmax of those logits weights a
convex combination of the review embeddings. A is trained jointly with the
quantizer by backpropagating the quantizer loss into it, with the
reconstruction target held constant so attention cannot collapse the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AttentionParams:
    """Shared bilinear attention matrix. One matrix serves every review slot."""

    matrix: np.ndarray  # (D, D)
    seed: int = 0

    @classmethod
    def init(cls, dim: int, seed: int = 0) -> "AttentionParams":
        # identity + small noise starts near raw dot-product similarity
        rng = np.random.default_rng(seed)
        matrix = np.eye(dim) + 0.01 * rng.standard_normal((dim, dim))
        return cls(matrix=matrix, seed=seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    return exps / exps.sum()


def _as_review_matrix(reviews) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(reviews, dtype=float))
    if mat.size == 0 or mat.shape[0] == 0:
        raise ValueError("no reviews for user")
    return mat


def attention_weights(params: AttentionParams, reviews, id_vec: np.ndarray) -> np.ndarray:
    """Softmax weights over the user's reviews; sum to 1, each in (0, 1]."""
    mat = _as_review_matrix(reviews)
    logits = mat @ params.matrix @ np.asarray(id_vec, dtype=float)
    return softmax(logits)


def fuse(params: AttentionParams, reviews, id_vec: np.ndarray) -> np.ndarray:
    """Attention-weighted combination of review embeddings (the quantizer input)."""
    mat = _as_review_matrix(reviews)
    weights = attention_weights(params, mat, id_vec)
    return weights @ mat


def fusion_grad(params: AttentionParams, reviews, id_vec: np.ndarray,
                upstream: np.ndarray) -> np.ndarray:
    """Gradient of <upstream, fused vector> with respect to A.

    With g_i = <upstream, e_i> and gbar the attention-weighted mean of g,
    the softmax chain rule gives dL/dA = sum_i a_i (g_i - gbar) e_i o'.
    """
    mat = _as_review_matrix(reviews)
    o = np.asarray(id_vec, dtype=float)
    weights = attention_weights(params, mat, o)
    g = mat @ np.asarray(upstream, dtype=float)
    coeff = weights * (g - float(weights @ g))
    return np.outer(coeff @ mat, o)
