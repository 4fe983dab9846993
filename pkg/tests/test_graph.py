"""Graph construction: hand-computed cases, brute-force oracle, and graph laws."""

import math

import numpy as np
import pytest

from cogcn import (
    build_cosine_graph,
    build_temporal_graph,
    cosine_similarity_matrix,
    export_dot,
    export_graph_json,
    graph_to_json_dict,
    norm_coefficients,
)


def brute_force_cosine(x):
    """O(n^2 d) python-loop oracle for the similarity matrix."""
    n, _ = x.shape
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ni = math.sqrt(sum(v * v for v in x[i]))
            nj = math.sqrt(sum(v * v for v in x[j]))
            if ni == 0.0 or nj == 0.0:
                sim[i, j] = 0.0
            else:
                sim[i, j] = sum(a * b for a, b in zip(x[i], x[j])) / (ni * nj)
    return np.clip(sim, -1.0, 1.0)


class TestCosineSimilarity:
    def test_orthogonal_rows(self):
        sim = cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert sim[0, 1] == 0.0

    def test_collinear_rows(self):
        sim = cosine_similarity_matrix(np.array([[1.0, 1.0], [2.0, 2.0]]))
        assert sim[0, 1] == 1.0

    def test_hand_computed_pair(self):
        # (1*2 + 2*1) / sqrt(5 * 5) = 4/5, exact in float64
        sim = cosine_similarity_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert sim[0, 1] == 0.8

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            x = rng.standard_normal((int(rng.integers(1, 9)), int(rng.integers(1, 6))))
            np.testing.assert_allclose(
                cosine_similarity_matrix(x), brute_force_cosine(x), atol=1e-12
            )

    def test_zero_norm_row_gets_zero_similarity_everywhere(self):
        x = np.array([[0.0, 0.0], [1.0, 2.0]])
        sim = cosine_similarity_matrix(x)
        assert sim[0, 0] == 0.0 and sim[0, 1] == 0.0 and sim[1, 0] == 0.0
        assert sim[1, 1] == 1.0

    def test_unit_diagonal_for_nonzero_rows(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 4))
        assert np.all(np.diag(cosine_similarity_matrix(x)) == 1.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            cosine_similarity_matrix(np.array([[1.0, np.nan]]))


class TestCosineGraph:
    def test_threshold_half(self):
        # s(0,2) = s(1,2) = 1/sqrt(2) ~ 0.7071 >= 0.5; s(0,1) = 0 < 0.5
        g = build_cosine_graph(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), 0.5)
        assert g.edges() == [(0, 2), (1, 2)]
        np.testing.assert_array_equal(g.degree_hat, [2.0, 2.0, 3.0])

    def test_threshold_point_eight(self):
        g = build_cosine_graph(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), 0.8)
        assert g.edges() == []
        np.testing.assert_array_equal(g.degree_hat, [1.0, 1.0, 1.0])

    def test_single_node(self):
        g = build_cosine_graph(np.array([[3.0, 4.0]]), 0.5)
        assert g.edges() == [] and g.degree_hat.tolist() == [1.0]

    @pytest.mark.parametrize("gamma", [-1.0, -2.0, 1.5])
    def test_gamma_range_rejected(self, gamma):
        with pytest.raises(ValueError, match="gamma"):
            build_cosine_graph(np.eye(3), gamma)

    def test_gamma_one_allowed(self):
        g = build_cosine_graph(np.array([[1.0, 1.0], [2.0, 2.0]]), 1.0)
        assert g.edges() == [(0, 1)]


class TestTemporalGraph:
    def test_chain_of_four(self):
        g = build_temporal_graph(np.zeros((4, 2)))
        assert g.edges() == [(0, 1), (1, 2), (2, 3)]
        np.testing.assert_array_equal(g.degree_hat, [2.0, 3.0, 3.0, 2.0])

    def test_single_node(self):
        g = build_temporal_graph(np.zeros((1, 2)))
        assert g.edges() == [] and g.degree_hat.tolist() == [1.0]

    def test_two_nodes(self):
        g = build_temporal_graph(np.zeros((2, 2)))
        assert g.edges() == [(0, 1)]
        np.testing.assert_array_equal(g.degree_hat, [2.0, 2.0])


class TestNormCoefficients:
    def test_single_node(self):
        g = build_cosine_graph(np.array([[1.0]]), 0.5)
        np.testing.assert_array_equal(norm_coefficients(g), [[1.0]])

    def test_two_connected_nodes(self):
        g = build_temporal_graph(np.zeros((2, 1)))
        np.testing.assert_allclose(norm_coefficients(g), np.full((2, 2), 0.5))

    def test_chain_middle_node(self):
        g = build_temporal_graph(np.zeros((3, 1)))
        coeffs = norm_coefficients(g)
        assert coeffs[1, 1] == pytest.approx(1.0 / 3.0)
        assert coeffs[1, 0] == pytest.approx(1.0 / math.sqrt(6.0))
        assert coeffs[0, 2] == 0.0

    def test_without_self(self):
        g = build_temporal_graph(np.zeros((3, 1)))
        coeffs = norm_coefficients(g, include_self=False)
        assert np.all(np.diag(coeffs) == 0.0)
        assert coeffs[1, 0] == pytest.approx(1.0 / math.sqrt(6.0))


class TestExports:
    def test_dot_chain(self, tmp_path):
        g = build_temporal_graph(np.zeros((3, 1)))
        path = tmp_path / "g.dot"
        export_dot(g, path)
        body = path.read_text()
        assert "0 -- 1;" in body and "1 -- 2;" in body
        assert body.count("--") == 2

    def test_dot_edgeless(self, tmp_path):
        g = build_cosine_graph(np.array([[1.0, 0.0], [0.0, 1.0]]), 0.5)
        path = tmp_path / "g.dot"
        export_dot(g, path)
        lines = path.read_text().splitlines()
        assert sum(1 for l in lines if l.strip().endswith(";") and "--" not in l) == 2
        assert not any("--" in l for l in lines)

    def test_dot_deterministic(self, tmp_path):
        g = build_temporal_graph(np.arange(8.0).reshape(4, 2))
        export_dot(g, tmp_path / "a.dot")
        export_dot(g, tmp_path / "b.dot")
        assert (tmp_path / "a.dot").read_bytes() == (tmp_path / "b.dot").read_bytes()

    def test_json_schema(self, tmp_path):
        import json

        g = build_temporal_graph(np.zeros((3, 1)))
        path = tmp_path / "g.json"
        export_graph_json(g, path)
        obj = json.loads(path.read_text())
        assert obj == {"n": 3, "edges": [[0, 1], [1, 2]], "degree_hat": [2.0, 3.0, 2.0]}
        assert obj == graph_to_json_dict(g)


class TestGraphLaws:
    """Randomized invariants; 200 trials each, zero tolerance for violations."""

    def test_similarity_symmetric_exactly(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(1, 12)), int(rng.integers(1, 7))))
            sim = cosine_similarity_matrix(x)
            assert np.array_equal(sim, sim.T)

    def test_threshold_monotone(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(2, 10)), 4))
            g1, g2 = sorted(rng.uniform(-0.9, 1.0, size=2))
            loose = set(build_cosine_graph(x, g1).edges())
            tight = set(build_cosine_graph(x, g2).edges())
            assert tight <= loose

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(2, 10)), 4))
            gamma = float(rng.uniform(-0.5, 0.9))
            row = int(rng.integers(x.shape[0]))
            scale = float(rng.uniform(0.1, 10.0))
            scaled = x.copy()
            scaled[row] *= scale
            assert (
                build_cosine_graph(x, gamma).edges()
                == build_cosine_graph(scaled, gamma).edges()
            )

    def test_similarity_range_and_clamp(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(1, 10)), 3)) * 10.0
            sim = cosine_similarity_matrix(x)
            assert np.all(sim >= -1.0) and np.all(sim <= 1.0)
            # clamping may move raw values by at most ~1e-12
            raw = brute_force_cosine_raw(x)
            assert np.all(np.abs(raw) <= 1.0 + 1e-12)

    def test_degree_hat_is_one_plus_rowsum(self):
        rng = np.random.default_rng(15)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(1, 10)), 3))
            g = build_cosine_graph(x, float(rng.uniform(-0.5, 1.0)))
            np.testing.assert_array_equal(g.degree_hat, 1.0 + g.adjacency.sum(axis=1))

    def test_adjacency_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(16)
        for _ in range(200):
            x = rng.standard_normal((int(rng.integers(1, 10)), 3))
            g = build_cosine_graph(x, float(rng.uniform(-0.5, 1.0)))
            assert np.array_equal(g.adjacency, g.adjacency.T)
            assert not np.any(np.diag(g.adjacency))


def brute_force_cosine_raw(x):
    """Unclamped pairwise cosine values (zero-norm rows -> 0)."""
    norms = np.linalg.norm(x, axis=1)
    sim = np.zeros((x.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        for j in range(x.shape[0]):
            if norms[i] > 0 and norms[j] > 0:
                sim[i, j] = float(x[i] @ x[j]) / (norms[i] * norms[j])
    return sim
