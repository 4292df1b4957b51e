"""Local FDR, threshold semantics, post-selection reports."""

import numpy as np
import pytest

from densreg.errors import DataError
from densreg.gss import GroupedDesignMatrix, McmcSettings, gibbs_fit
from densreg.selection import (
    build_report,
    fdr_threshold,
    local_fdr,
    read_selection_csv,
    spearman_fit,
    write_fitplot_csv,
    write_selection_csv,
)


class TestLocalFdr:
    def test_all_zero_draws(self):
        assert local_fdr(np.zeros((50, 1)))[0] == 1.0

    def test_all_large_draws(self):
        assert local_fdr(np.full((50, 1), 0.7))[0] == 0.0

    def test_count_oracle(self):
        draws = np.array([0.0005, 0.002, -0.0009, 0.5])[:, None]
        assert local_fdr(draws, c=0.001)[0] == pytest.approx(0.5)

    def test_draw_order_invariance(self):
        rng = np.random.default_rng(0)
        draws = rng.normal(0, 0.01, size=(200, 3))
        base = local_fdr(draws)
        np.testing.assert_array_equal(local_fdr(draws[rng.permutation(200)]), base)

    def test_bad_threshold_rejected(self):
        with pytest.raises(DataError):
            local_fdr(np.zeros((10, 1)), c=0.0)


class TestFdrThreshold:
    def test_worked_example(self):
        # prefix means {0.01, 0.015, 0.0433, 0.1325}: u = 3, phi = 0.10
        p = np.array([0.01, 0.02, 0.10, 0.50])
        phi, selected = fdr_threshold(p, alpha=0.05, boundary="strict")
        assert phi == pytest.approx(0.10)
        np.testing.assert_array_equal(selected, [True, True, False, False])

    def test_worked_example_default_rule_matches_strict_here(self):
        p = np.array([0.01, 0.02, 0.10, 0.50])
        phi, selected = fdr_threshold(p, alpha=0.05)
        assert phi == pytest.approx(0.10)
        np.testing.assert_array_equal(selected, [True, True, False, False])

    def test_worked_example_prefix_rule_keeps_threshold_item(self):
        p = np.array([0.01, 0.02, 0.10, 0.50])
        phi, selected = fdr_threshold(p, alpha=0.05, boundary="prefix")
        assert phi == pytest.approx(0.10)
        np.testing.assert_array_equal(selected, [True, True, True, False])

    def test_all_zero_boundary_semantics(self):
        # the strict rule collapses (phi = 0 selects nothing); the
        # default keeps exact-zero coefficients
        p = np.zeros(4)
        phi, selected = fdr_threshold(p, alpha=0.05, boundary="strict")
        assert phi == 0.0 and not selected.any()
        phi, selected = fdr_threshold(p, alpha=0.05)
        assert phi == 0.0 and selected.all()

    def test_alpha_one_boundary(self):
        p = np.array([0.3, 0.9, 0.1])
        phi, _ = fdr_threshold(p, alpha=0.999999)
        assert phi == pytest.approx(0.9)

    def test_no_qualifying_prefix(self):
        p = np.array([0.4, 0.6])
        for rule in ("strict", "prefix", "strict_plus_zero"):
            phi, selected = fdr_threshold(p, alpha=0.05, boundary=rule)
            assert phi == 0.0 and not selected.any()

    @pytest.mark.parametrize("boundary", ["strict", "prefix", "strict_plus_zero"])
    def test_alpha_monotonicity(self, boundary):
        rng = np.random.default_rng(1)
        p = rng.random(40) * 0.5
        prev_phi, prev_sel = 0.0, np.zeros(40, dtype=bool)
        for alpha in (0.02, 0.05, 0.15, 0.4):
            phi, selected = fdr_threshold(p, alpha=alpha, boundary=boundary)
            assert phi >= prev_phi
            assert np.all(selected | ~prev_sel)  # nested selections
            prev_phi, prev_sel = phi, selected

    @pytest.mark.parametrize("boundary", ["strict", "prefix", "strict_plus_zero"])
    def test_selected_mean_bounded(self, boundary):
        rng = np.random.default_rng(2)
        for _ in range(30):
            p = np.round(rng.random(25), 3)
            phi, selected = fdr_threshold(p, alpha=0.1, boundary=boundary)
            if selected.any():
                assert p[selected].mean() <= 0.1 + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            fdr_threshold(np.array([]))

    def test_unknown_rule_rejected(self):
        with pytest.raises(DataError):
            fdr_threshold(np.array([0.1]), boundary="loose")


class TestSpearman:
    def test_perfect_fit(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((20, 3))
        beta = np.array([1.0, -0.5, 0.2])
        y = X @ beta
        rho, defined = spearman_fit(y, X, beta)
        assert defined and rho == pytest.approx(1.0)

    def test_reversed_ordering(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((20, 1))
        y = (X @ np.array([1.0])).ravel()
        rho, defined = spearman_fit(y, X, np.array([-1.0]))
        assert defined and rho == pytest.approx(-1.0)

    def test_zero_coefficients_flagged(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((10, 2))
        rho, defined = spearman_fit(rng.standard_normal(10), X, np.zeros(2))
        assert not defined and rho == 0.0

    def test_tied_values_use_average_ranks(self):
        X = np.array([[1.0], [1.0], [2.0], [3.0]])
        y = np.array([0.5, 0.5, 2.0, 2.5])
        rho, defined = spearman_fit(y, X, np.array([1.0]))
        assert defined and rho == pytest.approx(1.0)


@pytest.fixture(scope="module")
def fitted_report():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((40, 4))
    groups = np.array([1, 1, 2, 2])
    y = 0.25 * X[:, 0] + 0.02 * rng.standard_normal(40)
    design = GroupedDesignMatrix(X=X, groups=groups)
    draws = gibbs_fit(y, design, settings=McmcSettings(6000, 1000, 5), seed=3)
    return build_report(draws, alpha=0.05, c=0.001)


class TestReports:
    def test_unselected_coefficients_zeroed(self, fitted_report):
        report = fitted_report
        assert np.all(report.beta_map[~report.selected] == 0.0)

    def test_signal_coefficient_selected(self, fitted_report):
        assert fitted_report.selected[0]
        assert fitted_report.beta_map[0] != 0.0

    def test_csv_roundtrip(self, fitted_report, tmp_path):
        path = tmp_path / "selection_toy.csv"
        write_selection_csv(path, fitted_report, header_comment="config_hash=1")
        back = read_selection_csv(path)
        assert back.column_names == fitted_report.column_names
        np.testing.assert_array_equal(back.selected, fitted_report.selected)
        np.testing.assert_allclose(back.p, fitted_report.p)
        np.testing.assert_allclose(back.beta_map, fitted_report.beta_map)
        assert back.phi_alpha == fitted_report.phi_alpha

    def test_fitplot_csv(self, tmp_path):
        path = tmp_path / "fitplot_toy.csv"
        write_fitplot_csv(path, np.array([1.0, 2.0]), np.array([0.9, 2.2]))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "observed,fitted"
        assert len(lines) == 3
