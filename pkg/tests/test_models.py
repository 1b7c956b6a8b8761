"""Utility estimators: features, encodings, sampling, equivariance."""

import numpy as np
import pytest

from linksched import nn
from linksched.graphs import (
    ConflictGraph,
    erdos_renyi_family,
    generate,
    is_independent_set,
    star_family,
)
from linksched.models import (
    ModelConfig,
    attention_sampling,
    init_params,
    load_model,
    make_policy,
    mean_utility_fn,
    node_features,
    positional_encoding,
    save_model,
    utilities,
)
from linksched.models import _candidate_mask


def random_state(graph, seed=0, q_hi=20.0):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.0, q_hi, graph.n)
    r = np.clip(rng.normal(50, 25, graph.n), 0, 100)
    return q, r


def permuted(graph, q, r, p):
    adj = np.zeros_like(graph.adj)
    adj[np.ix_(p, p)] = graph.adj
    q2 = np.empty_like(q)
    r2 = np.empty_like(r)
    q2[p] = q
    r2[p] = r
    return ConflictGraph.from_adjacency(adj), q2, r2


GCN_SMALL = ModelConfig(variant="gcn", hidden_dim=8, num_layers=2)
TRANS_SMALL = ModelConfig(
    variant="transgnn", hidden_dim=8, num_layers=2, num_heads=2, sample_k=5, pe_dim=4
)


class TestModelConfig:
    def test_heads_must_divide_hidden(self):
        with pytest.raises(ValueError):
            ModelConfig(variant="transgnn", hidden_dim=10, num_heads=4)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ModelConfig(variant="mlp")

    def test_feature_dim(self):
        assert GCN_SMALL.feature_dim == 3
        assert TRANS_SMALL.feature_dim == 7
        no_pe = ModelConfig(variant="transgnn", positional_encoding=False,
                            hidden_dim=8, pe_dim=4)
        assert no_pe.feature_dim == 3

    def test_meta_round_trip(self):
        back = ModelConfig.from_meta(
            {k: str(v) for k, v in TRANS_SMALL.to_meta().items()}
        )
        assert back == TRANS_SMALL


class TestNodeFeatures:
    def test_shape_and_bounds(self):
        g = generate(star_family(6))
        q, r = random_state(g)
        feats = node_features(g, q, r)
        assert feats.shape == (7, 3)
        assert (feats >= 0).all() and (feats[:, 0] <= 1).all()
        assert feats[0, 2] == 1.0  # hub degree n-1

    def test_huge_queues_stay_bounded(self):
        g = generate(erdos_renyi_family(10, 0.3, seed=1))
        q = np.full(10, 1e6)
        r = np.full(10, 50.0)
        feats = node_features(g, q, r)
        assert np.isfinite(feats).all()
        u = utilities(g, q, r, init_params(TRANS_SMALL, np.random.default_rng(0)),
                      TRANS_SMALL)
        assert np.isfinite(u).all()


class TestPositionalEncoding:
    def test_triangle_two_step_return(self):
        tri = ConflictGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        enc = positional_encoding(tri, 3)
        # leave and come back through either neighbor: probability 1/2
        assert enc[:, 2] == pytest.approx([0.5, 0.5, 0.5])
        assert enc[:, 1] == pytest.approx([0.0, 0.0, 0.0])  # no 1-step returns

    def test_isolated_vertex_is_zero(self):
        g = ConflictGraph.from_edges(3, [(0, 1)])
        enc = positional_encoding(g, 5)
        assert np.array_equal(enc[2], np.zeros(5))

    def test_star_hub_differs_from_leaf(self):
        g = generate(star_family(4))
        enc = positional_encoding(g, 4)
        assert enc[0, 0] == 1.0
        assert enc[1, 0] == pytest.approx(0.25)
        assert not np.allclose(enc[0], enc[1])

    def test_deterministic(self):
        g = generate(erdos_renyi_family(12, 0.3, seed=9))
        assert np.array_equal(positional_encoding(g, 6), positional_encoding(g, 6))


class TestAttentionSampling:
    def test_saturates_to_all_vertices(self):
        g = generate(erdos_renyi_family(6, 0.2, seed=3))
        feats = node_features(g, *random_state(g, 3))
        B = np.random.default_rng(4).normal(size=(3, 3))
        mask = attention_sampling(g, feats, B, k=10)
        assert mask.all()

    def test_identical_features_fill_by_lowest_index(self):
        g = ConflictGraph.from_edges(6, [(0, 1)])
        feats = np.ones((6, 3))
        B = np.zeros((3, 3))  # every score ties at zero
        mask = attention_sampling(g, feats, B, k=4)
        # vertex 0: self + neighbor 1, then lowest-index non-neighbors 2, 3
        assert set(np.flatnonzero(mask[0])) == {0, 1, 2, 3}

    def test_high_similarity_non_neighbor_included(self):
        # vertices 0-1 adjacent; vertex 4 engineered to score highest with 0
        g = ConflictGraph.from_edges(5, [(0, 1), (2, 3)])
        feats = np.zeros((5, 3))
        feats[0] = [1.0, 0.0, 0.0]
        feats[2] = [0.1, 0.0, 0.0]
        feats[3] = [0.2, 0.0, 0.0]
        feats[4] = [5.0, 0.0, 0.0]   # bilinear score with 0 dominates
        B = np.eye(3)
        mask = attention_sampling(g, feats, B, k=3)
        # budget 3 = self + neighbor 1 + one sampled: must be vertex 4
        assert set(np.flatnonzero(mask[0])) == {0, 1, 4}

    def test_neighbors_never_sampled_away(self):
        g = generate(star_family(8))
        feats = node_features(g, *random_state(g, 5))
        B = np.random.default_rng(6).normal(size=(3, 3))
        mask = attention_sampling(g, feats, B, k=2)  # below hub degree
        assert mask[0, 1:].all()       # hub keeps all 8 leaves
        assert mask.diagonal().all()   # self always present

    def test_disabled_sampling_mask_is_one_hop(self):
        g = generate(erdos_renyi_family(7, 0.3, seed=8))
        cfg = ModelConfig(variant="transgnn", attention_sampling=False,
                          hidden_dim=8, pe_dim=4)
        params = init_params(cfg, np.random.default_rng(0))
        feats = node_features(g, *random_state(g, 7))
        mask = _candidate_mask(g, feats, params, cfg)
        expect = g.adj | np.eye(g.n, dtype=bool)
        assert np.array_equal(mask, expect)
        assert "sampler.B" not in params


class TestGcn:
    def test_zero_weights_yield_head_bias(self):
        g = generate(erdos_renyi_family(9, 0.3, seed=2))
        params = init_params(GCN_SMALL, np.random.default_rng(1))
        params = {k: np.zeros_like(v) for k, v in params.items()}
        params["head.b"] = np.array([0.37])
        u = utilities(g, *random_state(g, 2), params, GCN_SMALL)
        assert np.allclose(u, 0.37)

    def test_edgeless_graph_reduces_to_per_vertex_mlp(self):
        g = ConflictGraph.from_edges(5, [])
        q, r = random_state(g, 4)
        params = init_params(GCN_SMALL, np.random.default_rng(3))
        u = utilities(g, q, r, params, GCN_SMALL)
        feats = node_features(g, q, r)
        for v in range(5):
            h = feats[v:v + 1]
            for i in range(GCN_SMALL.num_layers):
                h = nn.relu(nn.dense_forward(h, params[f"layer{i}.W"],
                                             params[f"layer{i}.b"]))
            expect = nn.dense_forward(h, params["head.W"], params["head.b"])[0, 0]
            assert u[v] == pytest.approx(expect, abs=1e-12)


class TestTransgnn:
    def test_single_vertex_finite(self):
        g = ConflictGraph.from_edges(1, [])
        params = init_params(TRANS_SMALL, np.random.default_rng(4))
        u = utilities(g, np.array([3.0]), np.array([40.0]), params, TRANS_SMALL)
        assert u.shape == (1,) and np.isfinite(u).all()

    def test_emits_one_utility_per_vertex(self):
        for n in (1, 2, 7, 13):
            g = generate(erdos_renyi_family(n, 0.3, seed=n))
            params = init_params(TRANS_SMALL, np.random.default_rng(5))
            u = utilities(g, *random_state(g, n), params, TRANS_SMALL)
            assert u.shape == (n,)

    @pytest.mark.parametrize("as_flag,pe_flag", [
        (True, True), (False, True), (True, False), (False, False),
    ])
    def test_ablation_flags_run_and_gradcheck(self, as_flag, pe_flag):
        cfg = ModelConfig(variant="transgnn", attention_sampling=as_flag,
                          positional_encoding=pe_flag, hidden_dim=8,
                          num_layers=1, num_heads=2, sample_k=4, pe_dim=4)
        g = generate(erdos_renyi_family(7, 0.3, seed=6))
        q, r = random_state(g, 6)
        params = init_params(cfg, np.random.default_rng(7))
        report = nn.grad_check(mean_utility_fn(g, q, r, cfg), params,
                               tolerance=1e-3, rng=np.random.default_rng(8),
                               samples_per_tensor=4)
        assert report.passed, str(report)


class TestEquivariance:
    @pytest.mark.parametrize("config", [GCN_SMALL, TRANS_SMALL])
    def test_permutation_equivariance(self, config):
        rng = np.random.default_rng(20)
        params = init_params(config, np.random.default_rng(21))
        for trial in range(10):
            g = generate(erdos_renyi_family(9, 0.35, seed=trial))
            q, r = random_state(g, trial)
            u = utilities(g, q, r, params, config)
            p = rng.permutation(g.n)
            g2, q2, r2 = permuted(g, q, r, p)
            u2 = utilities(g2, q2, r2, params, config)
            assert np.abs(u2[p] - u).max() < 1e-9


class TestPolicyAndPersistence:
    def test_policy_produces_independent_sets(self):
        g = generate(erdos_renyi_family(14, 0.25, seed=11))
        params = init_params(TRANS_SMALL, np.random.default_rng(12))
        policy = make_policy(TRANS_SMALL, params)
        rng = np.random.default_rng(13)
        for _ in range(20):
            q = rng.uniform(0, 30, g.n)
            r = np.clip(rng.normal(50, 25, g.n), 0, 100)
            members = policy(g, q, r)
            assert is_independent_set(g, members)

    def test_policy_tracks_running_queue_max(self):
        g = generate(star_family(3))
        params = init_params(TRANS_SMALL, np.random.default_rng(14))
        policy = make_policy(TRANS_SMALL, params)
        r = np.full(g.n, 50.0)
        policy(g, np.full(g.n, 8.0), r)
        # later slots with smaller queues still normalize by the episode max
        u_run = utilities(g, np.full(g.n, 2.0), r, params, TRANS_SMALL, q_scale=8.0)
        got = policy(g, np.full(g.n, 2.0), r)
        from linksched.solver import solve

        assert set(got.tolist()) == solve(g, u_run).member_set()

    def test_save_load_round_trip(self, tmp_path):
        params = init_params(TRANS_SMALL, np.random.default_rng(15))
        path = tmp_path / "m.ckpt"
        save_model(path, params, TRANS_SMALL, extra_meta={"phase": "unit"})
        loaded, config, meta = load_model(path)
        assert config == TRANS_SMALL
        assert meta["phase"] == "unit"
        for k in params:
            assert np.array_equal(loaded[k], params[k])

    def test_architecture_mismatch_detected(self, tmp_path):
        params = init_params(GCN_SMALL, np.random.default_rng(16))
        path = tmp_path / "m.ckpt"
        nn.save_checkpoint(path, params, TRANS_SMALL.to_meta())  # lying header
        with pytest.raises(ValueError, match="architecture"):
            load_model(path)
