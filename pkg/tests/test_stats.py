"""Histogram, Simpson-integration and chi-squared machinery tests."""

import math

import numpy as np
import pytest

from qtraj import model, stats
from qtraj.engine import simulate
from qtraj.model import MeasurementConfig, Setting, SuperpositionSpec
from qtraj.stats import (
    Grid3,
    accumulate_counts,
    analytic_bin_probs,
    bin_counts,
    chi2_counts_vs_probs,
    chi2_time_averaged,
    jackknife_mean_var,
    moment_summary,
    two_sample_chi2,
)

SPEC = SuperpositionSpec(0.5, 1.0, 2.0)
MIX = SuperpositionSpec(0.5, 1.0, 2.0, mixture=True)


def cfg_gtf(gtf, steps, n, seed, setting=Setting.X):
    return MeasurementConfig.from_gtf(gtf, steps, setting=setting, n_samples=n, seed=seed)


class TestGrid:
    def test_auto_grid_covers_support(self):
        cfg = cfg_gtf(3.0, 30, 50_000, seed=4)
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2)
        binned = accumulate_counts(SPEC, cfg, grid)
        assert binned.out_of_grid_fraction() < 1e-4

    def test_edges_are_uniform_lattice(self):
        cfg = cfg_gtf(2.0, 20, 10, seed=1)
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2)
        assert np.allclose(np.diff(grid.x_edges), 0.1)
        assert grid.area == pytest.approx(0.02)
        # windows widen monotonically for the amplified axis
        widths = [w[1] - w[0] for w in grid.windows]
        assert widths == sorted(widths)

    def test_bad_edges_rejected(self):
        with pytest.raises(ValueError):
            Grid3(x_edges=np.array([0.0, 1.0, 1.5]), p_edges=np.array([0.0, 1.0]),
                  t_steps=(0,), dt=0.1)


class TestBinning:
    def test_point_mass_lands_in_one_bin(self):
        cfg = cfg_gtf(1.0, 10, 100, seed=2)
        batch = simulate(SPEC, cfg)
        batch.amplified[:, :] = 0.55
        batch.attenuated[:, :] = -1.31
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2)
        binned = bin_counts(batch, grid)
        for counts in binned.counts:
            assert counts.sum() == 100
            assert (counts > 0).sum() == 1
            assert counts.max() == 100

    def test_out_of_grid_counted(self):
        cfg = cfg_gtf(1.0, 10, 100, seed=2)
        batch = simulate(SPEC, cfg)
        batch.amplified[:50, :] = 1e6
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2)
        binned = bin_counts(batch, grid)
        assert np.all(binned.out_of_grid == 50)
        assert all(c.sum() == 50 for c in binned.counts)

    def test_worker_count_never_changes_counts(self):
        cfg = cfg_gtf(2.0, 20, 40_000, seed=11)
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2)
        b1 = accumulate_counts(SPEC, cfg, grid, workers=1)
        b2 = accumulate_counts(SPEC, cfg, grid, workers=2)
        for c1, c2 in zip(b1.counts, b2.counts):
            np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(b1.out_of_grid, b2.out_of_grid)


class TestAnalyticBinProbs:
    def test_single_huge_bin_is_unit_mass(self):
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        sx = math.sqrt(float(model.sigma_x2(SPEC.r, 0.0)))
        sp = math.sqrt(float(model.sigma_p2(SPEC.r, 0.0)))
        grid = Grid3(
            x_edges=np.array([-SPEC.x1 - 10 * sx, SPEC.x1 + 10 * sx]),
            p_edges=np.array([-10 * sp, 10 * sp]),
            t_steps=(0,),
            dt=cfg.dt,
        )
        probs = analytic_bin_probs(SPEC, cfg, grid, nodes_per_bin=2001)
        assert probs[0][0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_separable_equals_dense(self):
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        grid = Grid3(
            x_edges=np.arange(-30, 31) * 0.1,
            p_edges=np.arange(-20, 21) * 0.2,
            t_steps=(0, 5, 10),
            dt=cfg.dt,
        )
        sep = analytic_bin_probs(SPEC, cfg, grid)
        dense = analytic_bin_probs(SPEC, cfg, grid, method="dense")
        for a, b in zip(sep, dense):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)

    def test_node_refinement_converged_on_fine_grid(self):
        # production resolution: halving the node spacing moves nothing
        # beyond 1e-8 relative.  The balanced superposition has exact
        # density zeros at the fringe troughs where a pointwise ratio is
        # ill-conditioned, so its check is taken relative to the local
        # density scale; the fringe-free mixture satisfies the pointwise
        # relative bound on every bin.
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        grid = Grid3(
            x_edges=np.arange(-150, 151) * 0.02,
            p_edges=np.arange(-60, 61) * 0.05,
            t_steps=(0,),
            dt=cfg.dt,
        )
        m3 = analytic_bin_probs(MIX, cfg, grid, nodes_per_bin=3)[0]
        m5 = analytic_bin_probs(MIX, cfg, grid, nodes_per_bin=5)[0]
        mask = m3 > 1e-30
        assert (np.abs(m5[mask] - m3[mask]) / m3[mask]).max() < 1e-8

        p3 = analytic_bin_probs(SPEC, cfg, grid, nodes_per_bin=3)[0]
        p5 = analytic_bin_probs(SPEC, cfg, grid, nodes_per_bin=5)[0]
        pmax = p3.max()
        assert np.abs(p5 - p3).max() / pmax < 1e-8
        bulk = p3 >= 0.2 * pmax
        assert (np.abs(p5[bulk] - p3[bulk]) / p3[bulk]).max() < 1e-8

    def test_spot_bins_match_adaptive_quadrature(self):
        # independent oracle: scipy adaptive double quadrature on a few bins
        from scipy.integrate import dblquad

        spec = SuperpositionSpec(0.4, 1.3, 1.5)
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        grid = Grid3(
            x_edges=np.arange(-30, 31) * 0.1,
            p_edges=np.arange(-25, 26) * 0.2,
            t_steps=(0, 5),
            dt=cfg.dt,
        )
        probs = analytic_bin_probs(spec, cfg, grid, nodes_per_bin=7)
        for s, i, j in [(0, 20, 6), (1, 36, 25), (1, 35, 43)]:
            t = grid.t_steps[s] * cfg.dt
            val, _ = dblquad(
                lambda p, x: float(model.q_sup(spec, x, p, t, cfg)),
                grid.x_edges[i],
                grid.x_edges[i + 1],
                grid.p_edges[j],
                grid.p_edges[j + 1],
                epsabs=1e-13,
            )
            assert probs[s][i, j] == pytest.approx(val, abs=1e-10)

    def test_mixture_probs_symmetric_fringe_antisymmetric(self):
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        grid = Grid3(
            x_edges=np.arange(-40, 41) * 0.1,
            p_edges=np.arange(-30, 31) * 0.2,
            t_steps=(0,),
            dt=cfg.dt,
        )
        p_mix = analytic_bin_probs(MIX, cfg, grid)[0]
        p_sup = analytic_bin_probs(SPEC, cfg, grid)[0]
        # hill-only content symmetric under x -> -x
        np.testing.assert_allclose(p_mix, p_mix[::-1, :], rtol=0, atol=1e-12)
        # interference content odd under p -> -p
        fringe = p_sup - p_mix
        np.testing.assert_allclose(fringe, -fringe[:, ::-1], rtol=0, atol=1e-12)

    def test_fringe_rows_alternate_at_origin(self):
        # at t = 0 the central column shows alternating depletion/enhancement
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        sx2 = float(model.sigma_x2(SPEC.r, 0.0))
        period = 2 * math.pi * sx2 / SPEC.x1
        dp = period / 8
        grid = Grid3(
            x_edges=np.array([-0.05, 0.05]),
            p_edges=np.arange(-8, 9) * dp,
            t_steps=(0,),
            dt=cfg.dt,
        )
        p_sup = analytic_bin_probs(SPEC, cfg, grid)[0][0]
        p_mix = analytic_bin_probs(MIX, cfg, grid)[0][0]
        # first antinode above zero: sin > 0 means depletion
        assert p_sup[8] < p_mix[8] and p_sup[9] < p_mix[9]
        assert p_sup[6] > p_mix[6] and p_sup[7] > p_mix[7]

    def test_invalid_nodes(self):
        cfg = cfg_gtf(1.0, 10, 10, seed=1)
        grid = Grid3.auto(SPEC, cfg, dx=0.5, dp=0.5, t_steps=(0,))
        with pytest.raises(ValueError):
            analytic_bin_probs(SPEC, cfg, grid, nodes_per_bin=4)


def _multinomial_counts(rng, probs, n_samples):
    counts = []
    for p in probs:
        flat = p.ravel()
        rest = max(0.0, 1.0 - flat.sum())
        pvals = np.append(flat, rest)
        draw = rng.multinomial(n_samples, pvals / pvals.sum())
        counts.append(draw[:-1].reshape(p.shape))
    return counts


@pytest.fixture(scope="module")
def desk_probs():
    cfg = cfg_gtf(3.0, 30, 200_000, seed=1)
    grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2, t_steps=(0, 10, 20, 30))
    return cfg, grid, analytic_bin_probs(SPEC, cfg, grid)


class TestChi2:

    def test_multinomial_self_consistency(self, desk_probs):
        # counts drawn straight from the analytic probabilities sit at
        # chi2_bar ~ k, inside the 3-sigma band
        cfg, grid, probs = desk_probs
        rng = np.random.default_rng(12)
        counts = _multinomial_counts(rng, probs, cfg.n_samples)
        report = chi2_time_averaged(counts, probs, n_samples=cfg.n_samples)
        assert report.passed
        assert abs(report.chi2_bar / report.k - 1.0) < 0.1

    def test_repeated_multinomial_pass_rate(self, desk_probs):
        cfg, grid, probs = desk_probs
        rng = np.random.default_rng(99)
        passes = 0
        for _ in range(100):
            counts = _multinomial_counts(rng, probs, cfg.n_samples)
            if chi2_time_averaged(counts, probs, n_samples=cfg.n_samples).passed:
                passes += 1
        assert passes >= 99

    def test_wrong_model_rejected(self, desk_probs):
        # negative control: analytic packets displaced by 0.5
        cfg, grid, probs = desk_probs
        rng = np.random.default_rng(7)
        counts = _multinomial_counts(rng, probs, cfg.n_samples)
        bad = SuperpositionSpec(0.5, 1.5, 2.0)
        bad_probs = analytic_bin_probs(bad, cfg, grid)
        report = chi2_time_averaged(counts, bad_probs, n_samples=cfg.n_samples)
        assert not report.passed
        assert report.chi2_bar > report.band_hi * 10

    def test_mixture_trajectories_pass_end_to_end(self):
        # fringe-free state: linked trajectories match the analytic density
        # at every slice, so the full pipeline lands inside the band
        cfg = cfg_gtf(3.0, 30, 200_000, seed=6)
        grid = Grid3.auto(MIX, cfg, dx=0.1, dp=0.2)
        binned = accumulate_counts(MIX, cfg, grid)
        probs = analytic_bin_probs(MIX, cfg, grid)
        report = chi2_time_averaged(binned, probs)
        assert report.passed, f"chi2_bar={report.chi2_bar:.1f} band_hi={report.band_hi:.1f}"

    def test_fringed_state_slice_structure(self):
        # characterization of the linked ensemble on the fringe-dominated
        # microscopic state: the joint density is statistically exact at the
        # linking time t = 0 and at the horizon, while interior slices carry
        # a large reproducible deviation (no positively-weighted pairing can
        # concentrate the interference term of the analytic density around
        # the inter-packet midpoint once both noises have acted).  If the
        # interior deviation ever disappears, the time-averaged acceptance
        # gate for this state becomes attainable and this test should be
        # revisited.
        cfg = cfg_gtf(3.0, 30, 200_000, seed=21)
        grid = Grid3.auto(SPEC, cfg, dx=0.1, dp=0.2, t_steps=(0, 5, 30))
        binned = accumulate_counts(SPEC, cfg, grid)
        probs = analytic_bin_probs(SPEC, cfg, grid)
        z_scores = []
        for s in range(3):
            c, k = chi2_counts_vs_probs(binned.counts[s], probs[s], cfg.n_samples)
            z_scores.append((c - k) / math.sqrt(2 * k))
        assert abs(z_scores[0]) < 3.0, f"t=0 slice should be exact, z={z_scores[0]:.1f}"
        assert abs(z_scores[2]) < 3.0, f"horizon slice should be exact, z={z_scores[2]:.1f}"
        assert z_scores[1] > 10.0, f"interior deviation vanished, z={z_scores[1]:.1f}"

    def test_macroscopic_superposition_passes_end_to_end(self):
        # x1 e^r >> 1: interference is unobservably small and the linked
        # ensemble is equivalent to the analytic density
        spec = SuperpositionSpec(0.5, 8.0, 2.0)
        cfg = cfg_gtf(2.0, 20, 100_000, seed=16)
        grid = Grid3.auto(spec, cfg, dx=0.1, dp=0.2)
        binned = accumulate_counts(spec, cfg, grid)
        probs = analytic_bin_probs(spec, cfg, grid)
        report = chi2_time_averaged(binned, probs)
        assert report.passed, f"chi2_bar={report.chi2_bar:.1f} band_hi={report.band_hi:.1f}"

    def test_zero_significant_bins_raises(self):
        probs = [np.full((2, 2), 0.25)]
        counts = [np.zeros((2, 2), dtype=np.int64)]
        with pytest.raises(ValueError):
            chi2_time_averaged(counts, probs, n_samples=4)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            chi2_counts_vs_probs(np.zeros((2, 2)), np.zeros((3, 2)), 10)

    def test_report_serialization(self, desk_probs):
        cfg, grid, probs = desk_probs
        rng = np.random.default_rng(3)
        counts = _multinomial_counts(rng, probs, cfg.n_samples)
        report = chi2_time_averaged(counts, probs, n_samples=cfg.n_samples)
        payload = report.to_dict()
        assert payload["band"][0] == pytest.approx(report.k - 3 * math.sqrt(2 * report.k))
        assert len(payload["per_slice"]) == 4
        assert payload["n_valid"] == report.n_valid


class TestMoments:
    def test_constant_batch_zero_variance(self):
        cfg = cfg_gtf(1.0, 10, 5000, seed=2)
        batch = simulate(SPEC, cfg)
        batch.amplified[:, :] = 2.0
        mom = moment_summary(batch, 0)
        assert mom["x"].var == 0.0 and mom["x"].se_var == 0.0

    def test_jackknife_se_scale(self):
        rng = np.random.default_rng(8)
        values = rng.normal(0.0, 2.0, size=100_000)
        mean, var, se_mean, se_var = jackknife_mean_var(values)
        assert se_mean == pytest.approx(2.0 / math.sqrt(len(values)), rel=0.15)
        assert se_var == pytest.approx(4.0 * math.sqrt(2.0 / len(values)), rel=0.15)
        assert abs(mean) < 4 * se_mean
        assert abs(var - 4.0) < 4 * se_var

    def test_matches_reference_moments(self):
        cfg = cfg_gtf(2.0, 20, 100_000, seed=14)
        batch = simulate(SPEC, cfg)
        mom = moment_summary(batch, 20)
        ref = model.reference_moments(SPEC, 2.0, cfg)
        assert abs(mom["x"].var - ref.var_x) < 4 * mom["x"].se_var
        assert abs(mom["p"].var - ref.var_p) < 4 * mom["p"].se_var


class TestTwoSample:
    def test_same_distribution_compatible(self):
        rng = np.random.default_rng(5)
        a, _ = np.histogram(rng.normal(size=200_000), bins=np.linspace(-4, 4, 41))
        b, _ = np.histogram(rng.normal(size=100_000), bins=np.linspace(-4, 4, 41))
        stat, dof, p = two_sample_chi2(a, b)
        assert p > 0.01

    def test_shifted_distribution_rejected(self):
        rng = np.random.default_rng(5)
        a, _ = np.histogram(rng.normal(size=100_000), bins=np.linspace(-4, 4, 41))
        b, _ = np.histogram(rng.normal(0.1, 1.0, size=100_000), bins=np.linspace(-4, 4, 41))
        _, _, p = two_sample_chi2(a, b)
        assert p < 1e-6

    def test_mismatched_bins_raise(self):
        with pytest.raises(ValueError):
            two_sample_chi2(np.ones(5), np.ones(6))


class TestHistogramDump:
    def test_sparse_rows_roundtrip(self, tmp_path):
        cfg = cfg_gtf(1.0, 10, 20_000, seed=9)
        grid = Grid3.auto(SPEC, cfg, dx=0.2, dp=0.5, t_steps=(0, 10))
        binned = accumulate_counts(SPEC, cfg, grid)
        probs = analytic_bin_probs(SPEC, cfg, grid)
        path = tmp_path / "hist.csv"
        stats.write_histogram_csv(path, binned, probs)
        lines = path.read_text().strip().split("\n")
        expected_rows = sum(int((c > 0).sum()) for c in binned.counts)
        assert lines[0] == "t,x_lo,x_hi,p_lo,p_hi,count,analytic_prob"
        assert len(lines) - 1 == expected_rows
