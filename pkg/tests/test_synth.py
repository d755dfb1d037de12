import dataclasses

import numpy as np
import pytest

from mspace.errors import ConfigError
from mspace.synth import (
    PRESETS,
    SynthParams,
    _LawCache,
    gen_er_graph,
    gen_preset,
    gen_synthetic,
    instance_seed,
    materialize_law,
)


def small_params(**overrides):
    base = dict(nodes=4, edge_prob=0.5, d=1, length=60,
                mu_min=-10.0, mu_max=10.0, var_min=1.0, var_max=2.0,
                init_mean=100.0, init_std=5.0, period=0, seed=3)
    base.update(overrides)
    return SynthParams(**base)


class TestErGraph:
    def test_p_zero_edgeless(self):
        adj = gen_er_graph(10, 0.0, np.random.default_rng(0))
        assert not adj.any()

    def test_p_one_complete(self):
        adj = gen_er_graph(6, 1.0, np.random.default_rng(0))
        assert adj.sum() == 6 * 5  # n(n-1)/2 edges, counted twice
        assert not np.diag(adj).any()

    def test_symmetric_zero_diagonal(self):
        adj = gen_er_graph(15, 0.4, np.random.default_rng(1))
        assert np.array_equal(adj, adj.T)
        assert not np.diag(adj).any()

    def test_binomial_edge_count(self):
        # 200 instances of G(20, 0.2): mean edge count near 190 * 0.2 = 38
        counts = []
        for s in range(200):
            adj = gen_er_graph(20, 0.2, np.random.default_rng(s))
            counts.append(adj.sum() // 2)
        sigma_mean = np.sqrt(190 * 0.2 * 0.8 / 200)
        assert abs(np.mean(counts) - 38.0) < 3 * sigma_mean


class TestPresets:
    def test_syn01_fields(self):
        p = PRESETS["syn01"]
        assert (p.nodes, p.edge_prob, p.d, p.length) == (20, 0.2, 1, 1000)
        assert (p.mu_min, p.mu_max) == (-200.0, 200.0)
        assert (p.var_min, p.var_max) == (40.0, 50.0)
        assert (p.init_mean, p.init_std) == (2e4, 5000.0)
        assert (p.period, p.season_mean, p.season_std) == (100, 100.0, 20.0)

    def test_syn02_is_syn01_without_seasonality(self):
        a, b = PRESETS["syn01"], PRESETS["syn02"]
        assert b.period == 0
        assert dataclasses.replace(a, period=0, season_mean=0.0, season_std=0.0) == b

    def test_syn03_fields(self):
        p = PRESETS["syn03"]
        assert (p.nodes, p.edge_prob, p.length) == (40, 0.5, 1000)
        assert (p.mu_min, p.mu_max) == (-400.0, 400.0)
        assert (p.var_min, p.var_max) == (30.0, 40.0)
        assert (p.init_mean, p.init_std, p.period) == (1e4, 2000.0, 0)

    def test_syn04_is_longer_syn03(self):
        assert PRESETS["syn04"] == dataclasses.replace(PRESETS["syn03"], length=10000)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            gen_preset("syn99")

    def test_preset_instances_deterministic(self):
        a = gen_preset("syn02", instances=2, seed=9)
        b = gen_preset("syn02", instances=2, seed=9)
        for da, db in zip(a, b):
            assert np.array_equal(da.features, db.features)
            assert np.array_equal(da.adjacency, db.adjacency)
        assert not np.array_equal(a[0].features, a[1].features)


class TestGenerator:
    def test_shapes(self):
        ds = gen_synthetic(small_params())
        assert ds.features.shape == (61, 4, 1)
        assert ds.num_shocks == 60

    def test_same_seed_identical(self):
        a = gen_synthetic(small_params())
        b = gen_synthetic(small_params())
        assert np.array_equal(a.features, b.features)

    def test_seasonal_branch_adds_tiled_signal(self):
        plain = gen_synthetic(small_params(period=0))
        periodic, trace = gen_synthetic(
            small_params(period=5, season_mean=3.0, season_std=1.0), trace=True)
        assert trace.seasonal.shape == (5, 4)
        steps = np.arange(1, 61)
        tiled = trace.seasonal[steps % 5].reshape(60, 4, 1)
        assert np.array_equal(periodic.features[0], plain.features[0])
        assert np.array_equal(periodic.features[1:], plain.features[1:] + tiled)

    def test_initial_feature_law(self):
        # mean of x0 entries over 100 instances within 3 sigma of init_mean
        entries = []
        for i in range(100):
            ds = gen_synthetic(small_params(length=1, seed=1000 + i))
            entries.append(ds.features[0].ravel())
        entries = np.concatenate(entries)
        tolerance = 3 * 5.0 / np.sqrt(entries.size)
        assert abs(entries.mean() - 100.0) < tolerance

    def test_masking_zeroes_non_adjacent_pairs(self):
        params = small_params(d=2)
        ds, trace = gen_synthetic(params, trace=True)
        adj = trace.adjacency
        for index in range(len(trace.state_keys)):
            _, masked, repaired, _ = materialize_law(params, adj, index)
            for u in range(params.nodes):
                for v in range(params.nodes):
                    if u != v and not adj[u, v]:
                        block = masked[u * 2:(u + 1) * 2, v * 2:(v + 1) * 2]
                        assert not block.any()
            # diagonal blocks survive the mask
            assert np.diag(masked).all()
            assert np.all(np.linalg.eigvalsh(repaired) >= 0)

    def test_state_law_reuse(self):
        # group shocks by predecessor state; group means approach the law mean
        params = small_params(nodes=3, length=4000, mu_min=-5.0, mu_max=5.0,
                              var_min=0.5, var_max=1.0)
        ds, trace = gen_synthetic(params, trace=True)
        shocks = np.diff(ds.features, axis=0).reshape(4000, 3)
        for index in range(len(trace.state_keys)):
            rows = shocks[trace.state_indices == index]
            if len(rows) < 100:
                continue
            mu, _, repaired, _ = materialize_law(params, trace.adjacency, index)
            sigma = np.sqrt(np.diag(repaired) / len(rows))
            assert np.all(np.abs(rows.mean(axis=0) - mu) < 6 * sigma + 1e-9)

    def test_law_regeneration_is_deterministic(self):
        params = small_params()
        adj = gen_er_graph(4, 0.5, np.random.default_rng([3, 2]))
        a = materialize_law(params, adj, 7)
        b = materialize_law(params, adj, 7)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_law_cache_eviction_transparent(self):
        params = small_params()
        adj = gen_er_graph(4, 0.5, np.random.default_rng([3, 2]))
        cache = _LawCache(params, adj, limit=2)
        first = cache.get(0)
        cache.get(1)
        cache.get(2)  # evicts index 0
        again = cache.get(0)
        assert np.array_equal(first[0], again[0])
        assert np.array_equal(first[1], again[1])

    def test_instance_seed_mixing(self):
        seeds = {instance_seed(5, i) for i in range(50)}
        assert len(seeds) == 50

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            SynthParams(nodes=0, edge_prob=0.5)
        with pytest.raises(ConfigError):
            small_params(mu_min=5.0, mu_max=-5.0)
        with pytest.raises(ConfigError):
            small_params(var_min=-1.0)
        with pytest.raises(ConfigError):
            small_params(edge_prob=1.5)

    def test_explicit_adjacency(self):
        adj = ((0, 1, 0), (1, 0, 0), (0, 0, 0))
        ds = gen_synthetic(SynthParams(nodes=3, adjacency=adj, length=10,
                                       mu_min=-1, mu_max=1, var_min=0.1,
                                       var_max=0.2, init_mean=0.0, init_std=1.0,
                                       seed=0))
        assert np.array_equal(ds.adjacency, np.array(adj))

    def test_features_finite(self):
        ds = gen_synthetic(small_params(length=500))
        assert np.all(np.isfinite(ds.features))
