"""Generators, contamination schemes, metrics and the experiment driver."""

import numpy as np
import pytest
from scipy.stats import chi2, kstest

from mixclust import (
    AlgoConfig,
    GaussianComponent,
    MixtureParams,
    bias_mse,
    gen_pure,
    generate,
    paper_design,
    regular_misclassification,
    run_experiment,
    undetected_outlier_proportion,
)
from mixclust.clustering import ClusteringResult
from mixclust.simulation import LabeledSample, ScenarioSpec, aggregate_rows, default_threshold


def make_result(assignments, flags, k=3, p=2):
    n = len(assignments)
    params = MixtureParams(
        weights=np.full(k, 1.0 / k),
        components=[GaussianComponent(np.full(p, float(j)), np.eye(p)) for j in range(k)],
    )
    assignments = np.asarray(assignments, dtype=int)
    flags = np.asarray(flags, dtype=bool)
    return ClusteringResult(
        params=params, assignments=assignments, outlier_flags=flags,
        outlier_types=np.where(flags, assignments, -1), objective=0.0,
        iterations=1, restart_index=0, discriminants=np.ones(n), stable=True)


class TestSpecs:
    def test_paper_design_pure(self):
        spec = paper_design(p=4)
        assert spec.weights.sum() == pytest.approx(1.0)
        assert spec.means.shape == (3, 4)
        assert spec.n_outliers == 0

    def test_paper_design_contaminated(self):
        spec = paper_design(p=2, contamination="annulus")
        assert spec.weights.sum() == pytest.approx(0.9)
        assert spec.n_outliers == 100

    def test_weight_sum_enforced(self):
        with pytest.raises(ValueError):
            ScenarioSpec(n=100, p=2, k=2, means=np.zeros((2, 2)), cov_scale=1.0,
                         weights=np.array([0.5, 0.5]), contamination="annulus",
                         contamination_level=0.1)

    def test_default_thresholds(self):
        assert default_threshold(2) == 1e-3
        assert default_threshold(10) == 1e-24


class TestGenerators:
    def test_label_frequencies(self):
        spec = paper_design(p=2, n=5000, seed=1)
        sample = gen_pure(spec, np.random.default_rng(1))
        for j, w in enumerate(spec.weights):
            freq = np.mean(sample.true_labels == j)
            bound = 3 * np.sqrt(w * (1 - w) / spec.n)
            assert abs(freq - w) <= bound

    def test_cluster_means_clt(self):
        spec = paper_design(p=3, n=3000, seed=2)
        sample = gen_pure(spec, np.random.default_rng(2))
        for j in range(3):
            pts = sample.data[sample.true_labels == j]
            bound = 3 * np.sqrt(spec.cov_scale / len(pts))
            assert np.all(np.abs(pts.mean(axis=0) - spec.means[j]) <= bound)

    def test_determinism(self):
        spec = paper_design(p=2, seed=5)
        s1 = gen_pure(spec, np.random.default_rng([5, 0]))
        s2 = gen_pure(spec, np.random.default_rng([5, 0]))
        assert np.array_equal(s1.data, s2.data)

    def test_chisq_acceptance_property(self):
        spec = paper_design(p=2, contamination="uniform_chisq", n=2000, seed=3)
        sample = generate(spec, np.random.default_rng(3))
        outliers = sample.data[sample.true_outlier_flags]
        assert len(outliers) == spec.n_outliers
        cutoff = chi2.ppf(0.975, df=2)
        d2 = ((outliers[:, None, :] - spec.means[None]) ** 2).sum(axis=2)
        assert np.all(d2.min(axis=1) / spec.cov_scale > cutoff)

    def test_chisq_acceptance_rate_matches_area(self):
        # Monte Carlo acceptance fraction vs a fine-grid area computation
        spec = paper_design(p=2, contamination="uniform_chisq", seed=4)
        cutoff = chi2.ppf(0.975, df=2)
        rng = np.random.default_rng(4)
        draws = rng.uniform(-10, 10, size=(200_000, 2))
        d2 = ((draws[:, None, :] - spec.means[None]) ** 2).sum(axis=2)
        mc = np.mean(d2.min(axis=1) > cutoff)
        axis = np.linspace(-10, 10, 801)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        gd2 = ((pts[:, None, :] - spec.means[None]) ** 2).sum(axis=2)
        area = np.mean(gd2.min(axis=1) > cutoff)
        assert mc == pytest.approx(area, abs=0.02 * area)

    def test_annulus_radii_and_ks(self):
        spec = paper_design(p=3, contamination="annulus", n=4000, seed=6)
        sample = generate(spec, np.random.default_rng(6))
        pts = sample.data[sample.true_outlier_flags]
        radii = np.linalg.norm(pts, axis=1)
        assert np.all((radii >= 15.0) & (radii <= 20.0))

        def radial_cdf(r):
            return (r**3 - 15.0**3) / (20.0**3 - 15.0**3)

        assert kstest(radii, radial_cdf).pvalue > 0.01

    def test_annulus_direction_uniform(self):
        spec = paper_design(p=3, contamination="annulus", n=3000, seed=7)
        sample = generate(spec, np.random.default_rng(7))
        pts = sample.data[sample.true_outlier_flags]
        dirs = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        assert np.linalg.norm(dirs.mean(axis=0)) <= 3.0 / np.sqrt(len(pts))

    def test_outlying_cluster_properties(self):
        spec = paper_design(p=4, contamination="outlying_cluster", n=2000, seed=8)
        sample = generate(spec, np.random.default_rng(8))
        pts = sample.data[sample.true_outlier_flags]
        assert len(pts) == spec.n_outliers
        bound = 3.0 / np.sqrt(len(pts))
        assert np.all(np.abs(pts.mean(axis=0) - 20.0) <= bound)
        assert np.all(sample.true_labels[sample.true_outlier_flags] == -1)
        assert not np.any(sample.true_outlier_flags[:spec.n - spec.n_outliers])


class TestMetrics:
    def test_exact_predictions(self):
        truth_labels = np.repeat([0, 1, 2], 10)
        truth = LabeledSample(np.zeros((30, 2)), truth_labels, np.zeros(30, bool))
        res = make_result(truth_labels, np.zeros(30, bool))
        assert regular_misclassification(res, truth) == 0.0

    def test_relabeled_predictions(self):
        truth_labels = np.repeat([0, 1, 2], 10)
        truth = LabeledSample(np.zeros((30, 2)), truth_labels, np.zeros(30, bool))
        perm = np.array([2, 0, 1])
        res = make_result(perm[truth_labels], np.zeros(30, bool))
        assert regular_misclassification(res, truth) == 0.0

    def test_one_in_ten_wrong(self):
        truth = LabeledSample(np.zeros((10, 2)), np.repeat([0, 1], 5), np.zeros(10, bool))
        pred = np.repeat([0, 1], 5)
        pred[0] = 1
        res = make_result(pred, np.zeros(10, bool), k=2)
        assert regular_misclassification(res, truth) == pytest.approx(0.1)

    def test_flagged_regular_counts_by_convention(self):
        truth = LabeledSample(np.zeros((10, 2)), np.repeat([0, 1], 5), np.zeros(10, bool))
        flags = np.zeros(10, bool)
        flags[3] = True
        res = make_result(np.repeat([0, 1], 5), flags, k=2)
        assert regular_misclassification(res, truth) == pytest.approx(0.1)
        assert regular_misclassification(res, truth,
                                         count_flagged_as_error=False) == 0.0

    def test_undetected_proportion(self):
        flags_true = np.array([False] * 6 + [True] * 4)
        truth = LabeledSample(np.zeros((10, 2)),
                              np.where(flags_true, -1, 0), flags_true)
        all_found = make_result(np.zeros(10, int), flags_true)
        assert undetected_outlier_proportion(all_found, truth) == 0.0
        none_found = make_result(np.zeros(10, int), np.zeros(10, bool))
        assert undetected_outlier_proportion(none_found, truth) == 1.0
        pure = LabeledSample(np.zeros((10, 2)), np.zeros(10, int), np.zeros(10, bool))
        assert undetected_outlier_proportion(none_found, pure) is None

    def test_bias_mse_exact(self):
        true_means = np.array([[0.0, 0.0], [5.0, 5.0]])
        bias, mse = bias_mse([true_means.copy() for _ in range(6)], true_means)
        assert bias == 0.0 and mse == 0.0

    def test_bias_mse_constant_offset(self):
        true_means = np.array([[0.0, 0.0], [5.0, 5.0]])
        off = true_means.copy()
        off[:, 0] += 0.5
        bias, mse = bias_mse([off.copy() for _ in range(4)], true_means)
        assert bias == pytest.approx(0.5)
        assert mse == pytest.approx(0.25)

    def test_bias_mse_unbiased_noise(self):
        rng = np.random.default_rng(9)
        true_means = np.array([[0.0, 0.0], [5.0, 5.0]])
        sigma = 0.1
        draws = [true_means + sigma * rng.standard_normal((2, 2)) for _ in range(4000)]
        bias, mse = bias_mse(draws, true_means)
        assert bias <= 3 * sigma / np.sqrt(4000) * 3
        assert mse == pytest.approx(sigma**2 * 2, rel=0.1)

    def test_permutation_matching_in_bias(self):
        true_means = np.array([[0.0, 0.0], [5.0, 5.0]])
        bias, mse = bias_mse([true_means[::-1].copy()], true_means)
        assert bias == 0.0 and mse == 0.0


@pytest.fixture(scope="module")
def small_report():
    spec = ScenarioSpec(
        n=150, p=2, k=3,
        means=np.array([[0.0, 0.0], [6.0, 6.0], [-6.0, -6.0]]),
        cov_scale=1.0, weights=np.array([0.33, 0.33, 0.34]),
        contamination="none", contamination_level=0.0,
        replications=3, seed=17)
    cfgs = [AlgoConfig(beta=0.1, n_restarts=4, seed=0),
            AlgoConfig(beta=0.0, n_restarts=4, seed=0)]
    return run_experiment(spec, cfgs)


class TestRunExperiment:
    def test_rows_and_labels(self, small_report):
        assert len(small_report.rows) == 6
        assert {r["config"] for r in small_report.rows} == {"beta=0.1", "beta=0"}
        assert all(r["error"] is None for r in small_report.rows)

    def test_aggregates_regenerate_exactly(self, small_report):
        agg = small_report.aggregates
        again = aggregate_rows(small_report.rows, small_report.config_labels)
        assert agg == again
        for label in small_report.config_labels:
            assert 0.0 <= agg[label]["misclassification"] <= 1.0
            assert agg[label]["mse"] >= agg[label]["bias"] ** 2 - 1e-12

    def test_thread_invariance(self):
        spec = ScenarioSpec(
            n=120, p=2, k=2, means=np.array([[0.0, 0.0], [7.0, 7.0]]),
            cov_scale=1.0, weights=np.array([0.5, 0.5]),
            contamination="none", contamination_level=0.0,
            replications=4, seed=23)
        cfgs = [AlgoConfig(beta=0.2, n_restarts=3, seed=0)]
        serial = run_experiment(spec, cfgs, threads=1)
        threaded = run_experiment(spec, cfgs, threads=4)
        key = lambda r: r["replication"]
        for a, b in zip(sorted(serial.rows, key=key), sorted(threaded.rows, key=key)):
            assert a["misclassification"] == b["misclassification"]
            assert a["objective"] == b["objective"]

    def test_csv_roundtrip(self, small_report, tmp_path):
        path = tmp_path / "rows.csv"
        small_report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("replication,config,")
        assert len(lines) == 7

    def test_outlying_cluster_p4_fully_detected(self):
        # planted far cluster at (20,...,20): flagged completely at beta=0.3
        spec = paper_design(p=4, contamination="outlying_cluster",
                            replications=1, seed=31)
        sample = generate(spec, np.random.default_rng([31, 0]))
        from mixclust import fit

        res = fit(sample.data, 3, AlgoConfig(beta=0.3, outlier_threshold=1e-5,
                                             n_restarts=8, seed=2))
        assert undetected_outlier_proportion(res, sample) == 0.0
        assert regular_misclassification(res, sample) <= 0.01

    def test_outlying_cluster_p8_beta_contrast(self):
        # beta=0 merges/covers while beta=0.3 recovers the design exactly
        spec = paper_design(p=8, contamination="outlying_cluster",
                            replications=1, seed=41)
        sample = generate(spec, np.random.default_rng([41, 0]))
        from mixclust import fit

        robust = fit(sample.data, 3, AlgoConfig(beta=0.3, outlier_threshold=1e-18,
                                                n_restarts=10, seed=1))
        plain = fit(sample.data, 3, AlgoConfig(beta=0.0, outlier_threshold=1e-18,
                                               n_restarts=10, seed=1))
        assert regular_misclassification(robust, sample) <= 0.01
        assert undetected_outlier_proportion(robust, sample) == 0.0
        assert regular_misclassification(plain, sample) >= 0.15
        assert undetected_outlier_proportion(plain, sample) >= 0.9

    def test_pure_p10_tiny_threshold(self):
        # densities underflow to zero floats at this scale; flags must not
        spec = paper_design(p=10, contamination="none", replications=1, seed=41)
        sample = generate(spec, np.random.default_rng([41, 0]))
        from mixclust import fit

        res = fit(sample.data, 3, AlgoConfig(beta=0.3, outlier_threshold=1e-24,
                                             n_restarts=8, seed=1))
        assert regular_misclassification(res, sample) <= 0.005
        assert res.outlier_flags.sum() <= 2

    def test_failures_recorded_not_fatal(self):
        spec = ScenarioSpec(
            n=10, p=2, k=8, means=np.tile(np.arange(8)[:, None], (1, 2)).astype(float),
            cov_scale=1.0, weights=np.full(8, 0.125),
            contamination="none", contamination_level=0.0,
            replications=2, seed=1)
        # k=8 clusters on 10 points degenerates; the driver must survive
        cfgs = [AlgoConfig(beta=0.5, n_restarts=2, seed=0)]
        report = run_experiment(spec, cfgs)
        assert len(report.rows) == 2
        agg = report.aggregates["beta=0.5"]
        assert agg["failures"] + agg["replications"] == 2
