import math

import numpy as np
import pytest

from semidrec.fusion import AttentionParams, attention_weights, fuse, fusion_grad, softmax


def params(dim, matrix=None, seed=0):
    p = AttentionParams.init(dim, seed=seed)
    if matrix is not None:
        p.matrix = np.asarray(matrix, dtype=float)
    return p


class TestWeights:
    def test_single_review_gets_weight_one(self):
        p = params(3)
        w = attention_weights(p, [np.array([1.0, 2.0, 3.0])], np.ones(3))
        assert w.tolist() == [1.0]

    def test_identical_reviews_share_weight(self):
        p = params(3)
        e = np.array([0.3, -1.0, 2.0])
        w = attention_weights(p, [e, e], np.ones(3))
        assert w == pytest.approx([0.5, 0.5])

    def test_zero_matrix_gives_uniform_weights(self):
        p = params(4, matrix=np.zeros((4, 4)))
        reviews = np.random.default_rng(0).standard_normal((4, 4))
        w = attention_weights(p, reviews, np.ones(4))
        assert w == pytest.approx([0.25] * 4)

    def test_weights_sum_to_one_and_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 8))
            w = attention_weights(params(5, seed=2), rng.standard_normal((n, 5)),
                                  rng.standard_normal(5))
            assert abs(w.sum() - 1.0) < 1e-9
            assert np.all(w > 0) and np.all(w <= 1)

    def test_empty_reviews_rejected(self):
        with pytest.raises(ValueError, match="no reviews"):
            attention_weights(params(3), np.empty((0, 3)), np.ones(3))


class TestFuse:
    def test_single_review_passes_through(self):
        e = np.array([1.0, -2.0, 0.5])
        assert fuse(params(3), [e], np.ones(3)) == pytest.approx(e)

    def test_opposite_reviews_cancel(self):
        e = np.array([1.0, 2.0, 3.0])
        p = params(3, matrix=np.zeros((3, 3)))
        assert fuse(p, [e, -e], np.ones(3)) == pytest.approx(np.zeros(3), abs=1e-12)

    def test_matches_explicit_recomputation(self):
        rng = np.random.default_rng(3)
        reviews = rng.standard_normal((3, 4))
        id_vec = rng.standard_normal(4)
        p = params(4, seed=9)
        # straight-line recomputation with scalar loops
        logits = []
        for e in reviews:
            s = 0.0
            for a in range(4):
                for b in range(4):
                    s += e[a] * p.matrix[a, b] * id_vec[b]
            logits.append(s)
        m = max(logits)
        exps = [math.exp(v - m) for v in logits]
        alphas = [v / sum(exps) for v in exps]
        expected = np.zeros(4)
        for alpha, e in zip(alphas, reviews):
            expected += alpha * e
        assert fuse(p, reviews, id_vec) == pytest.approx(expected, rel=1e-12)

    def test_fused_vector_inside_coordinate_hull(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(1, 6))
            reviews = rng.standard_normal((n, 6))
            x = fuse(params(6, seed=5), reviews, rng.standard_normal(6))
            assert np.all(x >= reviews.min(axis=0) - 1e-9)
            assert np.all(x <= reviews.max(axis=0) + 1e-9)


def test_softmax_shift_invariance():
    logits = np.array([0.1, -2.0, 3.5, 0.0])
    assert softmax(logits + 7.3) == pytest.approx(softmax(logits), rel=1e-12)


class TestGrad:
    def test_single_review_gradient_is_zero(self):
        g = fusion_grad(params(3), [np.ones(3)], np.ones(3), np.ones(3))
        assert np.array_equal(g, np.zeros((3, 3)))

    def test_identical_reviews_at_zero_matrix_give_zero(self):
        e = np.array([1.0, 2.0, 3.0])
        g = fusion_grad(params(3, matrix=np.zeros((3, 3))), [e, e], np.ones(3), e)
        assert g == pytest.approx(np.zeros((3, 3)), abs=1e-12)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            n = int(rng.integers(2, 6))
            reviews = rng.standard_normal((n, 4))
            id_vec = rng.standard_normal(4)
            upstream = rng.standard_normal(4)
            p = params(4, seed=8)
            analytic = fusion_grad(p, reviews, id_vec, upstream)
            eps = 1e-6
            fd = np.zeros_like(analytic)
            for a in range(4):
                for b in range(4):
                    saved = p.matrix[a, b]
                    p.matrix[a, b] = saved + eps
                    up = float(upstream @ fuse(p, reviews, id_vec))
                    p.matrix[a, b] = saved - eps
                    down = float(upstream @ fuse(p, reviews, id_vec))
                    p.matrix[a, b] = saved
                    fd[a, b] = (up - down) / (2 * eps)
            denom = max(np.abs(fd).max(), 1e-8)
            assert np.abs(analytic - fd).max() / denom < 1e-4


def test_init_is_near_identity():
    p = AttentionParams.init(32, seed=0)
    assert np.abs(p.matrix - np.eye(32)).max() < 0.1
    assert not np.array_equal(p.matrix, np.eye(32))
