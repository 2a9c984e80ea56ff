"""Full clustering loop: assignment, weights, objective, restarts, outliers."""

import numpy as np
import pytest
from scipy.optimize import minimize

from mixclust import (
    AlgoConfig,
    GaussianComponent,
    IrlsConfig,
    MixtureParams,
    assign,
    check_constraints,
    component_beta_objective,
    detect_outliers,
    fit,
    fit_component,
    fit_single,
    initialize,
    pseudo_beta_likelihood,
    update_weights,
)
from mixclust.clustering import component_fit_score, log_discriminants


def two_comp_params(mu1=0.0, mu2=5.0, v1=1.0, v2=1.0, w1=0.5):
    return MixtureParams(
        weights=np.array([w1, 1.0 - w1]),
        components=[GaussianComponent([mu1], [[v1]]),
                    GaussianComponent([mu2], [[v2]])],
    )


def blob_data(rng, centers, n_per, scale=1.0):
    parts = [c + scale * rng.standard_normal((n_per, np.size(c))) for c in centers]
    return np.vstack(parts)


class TestAssign:
    def test_nearer_mean_wins(self):
        labels, _ = assign(np.array([[1.0]]), two_comp_params())
        assert labels[0] == 0

    def test_exact_tie_takes_smallest_index(self):
        labels, _ = assign(np.array([[2.5]]), two_comp_params())
        assert labels[0] == 0

    def test_unequal_weights_shift_boundary(self):
        params = two_comp_params(w1=0.9)
        # closed-form crossing of the two weighted densities (equal variances)
        boundary = 2.5 + np.log(0.9 / 0.1) / 5.0
        xs = np.linspace(2.0, 4.0, 2001)[:, None]
        labels, _ = assign(xs, params)
        flip = xs[np.argmax(labels == 1), 0]
        assert flip == pytest.approx(boundary, abs=2e-3)
        gap = np.diff(log_discriminants(np.array([[boundary]]), params), axis=1)
        assert abs(gap[0, 0]) < 1e-10

    def test_discriminant_is_weighted_density(self):
        params = two_comp_params()
        pts = np.array([[0.3], [4.5]])
        labels, disc = assign(pts, params)
        logd = log_discriminants(pts, params)
        assert np.allclose(disc, np.exp(logd[np.arange(2), labels]))

    def test_no_single_point_relabel_improves(self):
        rng = np.random.default_rng(3)
        params = two_comp_params(v2=2.0, w1=0.4)
        pts = rng.normal(2.0, 3.0, size=(100, 1))
        labels, _ = assign(pts, params)
        logd = log_discriminants(pts, params)
        best = logd[np.arange(100), labels]
        assert np.all(best >= logd.max(axis=1) - 1e-12)

    def test_distance_rule(self):
        params = two_comp_params(v1=100.0, w1=0.99)
        labels, _ = assign(np.array([[4.0]]), params, rule="distance")
        assert labels[0] == 1  # nearest mean, weights and spreads ignored

    def test_mahalanobis_rule(self):
        # euclidean prefers the nearer mean, mahalanobis the wider component
        params = two_comp_params(mu1=0.0, mu2=3.0, v1=0.04, v2=9.0)
        x = np.array([[1.0]])
        euclid, _ = assign(x, params, rule="distance")
        mahal, _ = assign(x, params, rule="mahalanobis")
        assert euclid[0] == 0
        assert mahal[0] == 1


class TestWeightsUpdate:
    def test_counts(self):
        a = np.concatenate([np.zeros(30, dtype=int), np.ones(70, dtype=int)])
        assert np.allclose(update_weights(a, 100, 2), [0.3, 0.7])

    def test_single_cluster(self):
        assert np.allclose(update_weights(np.zeros(10, dtype=int), 10, 3), [1, 0, 0])

    def test_sums_to_one_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(1, 6))
            a = rng.integers(0, k, size=int(rng.integers(1, 50)))
            w = update_weights(a, len(a), k)
            assert w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_maximizes_weighted_log_simplex(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(1, 50, size=4).astype(float)

        def neg(w):
            return -float(counts @ np.log(w))

        res = minimize(neg, np.full(4, 0.25), method="SLSQP",
                       bounds=[(1e-9, 1)] * 4,
                       constraints={"type": "eq", "fun": lambda w: w.sum() - 1})
        assert np.allclose(res.x, counts / counts.sum(), atol=1e-6)


class TestObjective:
    def test_single_cluster_collapse(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((40, 1))
        comp = GaussianComponent([0.1], [[1.2]])
        params = MixtureParams(weights=np.array([1.0]), components=[comp])
        got = pseudo_beta_likelihood(data, params, np.zeros(40, dtype=int), 0.4)
        assert got == pytest.approx(component_beta_objective(data, comp, 0.4), rel=1e-12)

    def test_far_point_contribution_monotone(self):
        params = two_comp_params()
        base = np.zeros(9)[:, None]
        vals = []
        for far in (3.0, 6.0, 12.0):
            data = np.vstack([base, [[far]]])
            labels = np.zeros(10, dtype=int)
            vals.append(pseudo_beta_likelihood(data, params, labels, 0.5))
        assert vals[0] > vals[1] > vals[2]

    def test_beta_zero_form(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((30, 1))
        params = two_comp_params()
        labels, _ = assign(data, params)
        got = pseudo_beta_likelihood(data, params, labels, 0.0)
        expected = 0.0
        from mixclust import log_density
        for j in range(2):
            members = data[labels == j]
            if len(members):
                expected += len(members) * np.log(params.weights[j])
                expected += log_density(members, params.components[j]).sum()
        assert got == pytest.approx(expected / 30, rel=1e-12)

    def test_ascent_over_seeded_runs(self):
        improved = 0
        for seed in range(50):
            rng = np.random.default_rng([100, seed])
            data = blob_data(rng, [np.zeros(2), np.full(2, 6.0)], 30)
            cfg = AlgoConfig(beta=0.2, n_restarts=2, seed=seed,
                             irls=IrlsConfig(epsilon=1e-8))
            init_params, init_labels = initialize(data, 2, np.random.default_rng([seed, 0]))
            before = pseudo_beta_likelihood(data, init_params, init_labels, cfg.beta)
            res = fit(data, 2, cfg)
            after = res.objective
            improved += bool(after >= before)
        assert improved == 50


class TestInitialize:
    def test_every_point_its_own_center(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((6, 2)) * 10
        params, labels = initialize(data, 6, np.random.default_rng(1))
        means = np.stack([c.mean for c in params.components])
        assert {tuple(m) for m in means} == {tuple(row) for row in data}
        assert sorted(labels.tolist()) == sorted(range(6))

    def test_seed_determinism(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((50, 2))
        p1, a1 = initialize(data, 3, np.random.default_rng(7))
        p2, a2 = initialize(data, 3, np.random.default_rng(7))
        assert np.array_equal(a1, a2)
        for c1, c2 in zip(p1.components, p2.components):
            assert np.array_equal(c1.mean, c2.mean)

    def test_sampled_indices_distinct(self):
        rng = np.random.default_rng(8)
        data = rng.standard_normal((20, 1))
        for seed in range(10_000):
            params, _ = initialize(data, 5, np.random.default_rng(seed))
            means = np.stack([c.mean for c in params.components])
            assert len({float(m) for m in means[:, 0]}) == 5

    def test_requires_enough_points(self):
        with pytest.raises(ValueError):
            initialize(np.zeros((2, 1)), 3, np.random.default_rng(0))


class TestFit:
    def test_k1_equals_component_fit(self):
        rng = np.random.default_rng(9)
        data = rng.standard_normal((60, 2)) + [1.0, 2.0]
        cfg = AlgoConfig(beta=0.3, n_restarts=1, seed=0,
                         irls=IrlsConfig(epsilon=1e-10))
        res = fit(data, 1, cfg)
        ref = fit_component(data, 0.3, cfg.irls).estimate
        assert res.params.weights[0] == 1.0
        assert np.allclose(res.params.components[0].mean, ref.mean, atol=1e-9)
        assert np.allclose(res.params.components[0].cov, ref.cov, atol=1e-9)

    @pytest.mark.parametrize("beta", [0.0, 0.3])
    def test_separated_blobs_zero_errors(self, beta):
        rng = np.random.default_rng(10)
        data = np.concatenate([rng.normal(0, 1, 100), rng.normal(100, 1, 100)])[:, None]
        truth = np.repeat([0, 1], 100)
        res = fit(data, 2, AlgoConfig(beta=beta, n_restarts=5, seed=4))
        pred = res.assignments
        direct = np.sum(pred != truth)
        swapped = np.sum((1 - pred) != truth)
        assert min(direct, swapped) == 0

    def test_determinism(self):
        rng = np.random.default_rng(11)
        data = blob_data(rng, [np.zeros(2), np.full(2, 8.0), np.full(2, -8.0)], 40)
        cfg = AlgoConfig(beta=0.2, n_restarts=4, seed=123)
        r1 = fit(data, 3, cfg)
        r2 = fit(data, 3, cfg)
        assert np.array_equal(r1.assignments, r2.assignments)
        assert r1.objective == r2.objective
        assert r1.restart_index == r2.restart_index
        for c1, c2 in zip(r1.params.components, r2.params.components):
            assert np.array_equal(c1.cov, c2.cov)

    def test_label_permutation_same_partition(self):
        rng = np.random.default_rng(12)
        data = blob_data(rng, [np.zeros(2), np.full(2, 7.0)], 50)
        params, _ = initialize(data, 2, np.random.default_rng(3))
        cfg = AlgoConfig(beta=0.2, seed=0)
        out_a = fit_single(data, 2, cfg, params)
        flipped = MixtureParams(weights=params.weights[::-1].copy(),
                                components=list(params.components[::-1]))
        out_b = fit_single(data, 2, cfg, flipped)
        part_a = {frozenset(np.flatnonzero(out_a["assignments"] == j)) for j in range(2)}
        part_b = {frozenset(np.flatnonzero(out_b["assignments"] == j)) for j in range(2)}
        assert part_a == part_b

    def test_result_invariants(self):
        rng = np.random.default_rng(13)
        data = blob_data(rng, [np.zeros(2), np.full(2, 6.0), np.full(2, -6.0)], 50)
        cfg = AlgoConfig(beta=0.25, n_restarts=5, seed=5)
        res = fit(data, 3, cfg)
        ok, _, _ = check_constraints([c.cov for c in res.params.components],
                                     cfg.constraint)
        assert ok
        recomputed = pseudo_beta_likelihood(data, res.params, res.assignments, cfg.beta)
        assert res.objective == pytest.approx(recomputed, rel=1e-12)
        score = component_fit_score(data, res.params, res.assignments, cfg.beta)
        assert res.selection_score == pytest.approx(score, rel=1e-12)
        assert res.params.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_needs_k_points(self):
        with pytest.raises(ValueError):
            fit(np.zeros((2, 1)), 3, AlgoConfig())

    def test_empty_cluster_reseeded_keeps_k(self):
        # two tight blobs, k=3: one cluster must be reseeded or carved out
        rng = np.random.default_rng(14)
        data = blob_data(rng, [np.zeros(2), np.full(2, 9.0)], 30, scale=0.5)
        res = fit(data, 3, AlgoConfig(beta=0.1, n_restarts=6, seed=2))
        assert res.params.k == 3
        assert np.isfinite(res.objective)


class TestDetectOutliers:
    def test_boundary_inclusive(self):
        params = two_comp_params()
        data = np.array([[0.0], [5.0]])
        labels, disc = assign(data, params)
        threshold = float(disc[0]) * len(data)
        flags, types = detect_outliers(data, params, labels, threshold)
        assert flags[0]
        assert types[0] == labels[0]

    def test_zero_threshold_flags_nothing(self):
        rng = np.random.default_rng(15)
        params = two_comp_params()
        data = rng.normal(0, 5, size=(50, 1))
        labels, _ = assign(data, params)
        flags, types = detect_outliers(data, params, labels, 0.0)
        assert not flags.any()
        assert np.all(types == -1)

    def test_scaled_vs_raw_rule(self):
        params = two_comp_params()
        data = np.vstack([np.zeros((99, 1)), [[30.0]]])
        labels, disc = assign(data, params)
        raw_threshold = float(disc[-1]) * 2.0
        flags_raw, _ = detect_outliers(data, params, labels, raw_threshold,
                                       scale_by_n=False)
        flags_scaled, _ = detect_outliers(data, params, labels, raw_threshold,
                                          scale_by_n=True)
        assert flags_raw[-1]
        assert not flags_scaled[-1]  # scaling by n=100 lifts the score above T

    def test_far_blob_flagged_and_typed(self):
        rng = np.random.default_rng(16)
        data = np.vstack([
            blob_data(rng, [np.zeros(2), np.full(2, 7.0)], 80),
            np.full((8, 2), 25.0) + 0.1 * rng.standard_normal((8, 2)),
        ])
        res = fit(data, 2, AlgoConfig(beta=0.3, outlier_threshold=1e-6,
                                      n_restarts=5, seed=1))
        assert res.outlier_flags[-8:].all()
        assert not res.outlier_flags[:160].any()
        flagged_types = res.outlier_types[res.outlier_flags]
        assert np.all(flagged_types >= 0)
        assert np.all(res.outlier_types[~res.outlier_flags] == -1)
