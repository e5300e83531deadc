import numpy as np
import pytest

from conftest import DOMAINS, PROPORTIONS, normal_quantile_oracle
from pgupdate.errors import ConfigError, DataError
from pgupdate.truncation import (
    TruncationRule,
    domain_interval,
    rule_proportions,
    thresholds_from_proportions,
    truncate,
)


def test_even_split_threshold_zero():
    rule = thresholds_from_proportions(("A", "B"), (0.5, 0.5))
    assert rule.g1_threshold == pytest.approx(0.0, abs=1e-12)


def test_first_split_matches_quantile_oracle():
    # proportions adjusted in the last entry so they sum to exactly 1,
    # keeping the first-split proportion at exactly 0.1420
    rule = thresholds_from_proportions(DOMAINS, (0.1420, 0.4004, 0.3648, 0.0692, 0.0236))
    assert rule.g1_threshold == pytest.approx(normal_quantile_oracle(0.1420), abs=1e-9)
    assert rule.g1_threshold == pytest.approx(-1.0714, abs=5e-4)


def test_equal_thirds_stack():
    rule = thresholds_from_proportions(("A", "B", "C"), (1 / 3, 1 / 3, 1 / 3))
    # conditional proportions of B and C renormalise to one half each
    expected = normal_quantile_oracle(0.5)
    assert rule.g2_thresholds[0] == pytest.approx(expected, abs=1e-9)
    third = normal_quantile_oracle(1 / 3)
    assert third == pytest.approx(-0.4307, abs=5e-4)


def test_table_proportion_roundtrip_analytic():
    rule = thresholds_from_proportions(DOMAINS, PROPORTIONS)
    target = np.asarray(PROPORTIONS) / np.sum(PROPORTIONS)
    assert np.abs(rule_proportions(rule) - target).max() < 1e-9


def test_proportions_sum_to_one():
    rule = thresholds_from_proportions(DOMAINS, PROPORTIONS)
    assert rule_proportions(rule).sum() == pytest.approx(1.0, abs=1e-12)


def test_monte_carlo_proportions(five_domain_rule):
    rng = np.random.default_rng(99)
    g1 = rng.standard_normal(1_000_000)
    g2 = rng.standard_normal(1_000_000)
    codes = five_domain_rule.truncate_codes(g1, g2)
    target = np.asarray(PROPORTIONS) / np.sum(PROPORTIONS)
    empirical = np.bincount(codes, minlength=5) / codes.size
    assert np.abs(empirical - target).max() < 0.005


def test_truncate_two_domain_lookup():
    rule = thresholds_from_proportions(("A", "B"), (0.5, 0.5))
    assert truncate(-1.0, 3.0, rule) == "A"
    assert truncate(1.0, -3.0, rule) == "B"


def test_boundary_closed_below():
    rule = thresholds_from_proportions(("A", "B"), (0.5, 0.5))
    # exactly on the threshold belongs to the rectangle above
    assert truncate(0.0, 0.0, rule) == "B"
    three = thresholds_from_proportions(("A", "B", "C"), (1 / 3, 1 / 3, 1 / 3))
    t = three.g2_thresholds[0]
    assert truncate(1.0, t, three) == "C"


def test_domain_intervals(five_domain_rule):
    lo, hi = domain_interval(five_domain_rule, "VOLC", 1)
    assert lo == -np.inf
    assert hi == pytest.approx(five_domain_rule.g1_threshold)
    assert domain_interval(five_domain_rule, "VOLC", 2) == (-np.inf, np.inf)
    lo2, hi2 = domain_interval(five_domain_rule, "HEM", 2)
    assert lo2 == -np.inf and np.isfinite(hi2)
    with pytest.raises(DataError):
        domain_interval(five_domain_rule, "XYZ", 1)


def test_volc_interval_matches_oracle():
    rule = thresholds_from_proportions(DOMAINS, (0.1420, 0.4004, 0.3648, 0.0692, 0.0236))
    lo, hi = rule.domain_interval("VOLC", 1)
    assert (lo, hi) == (-np.inf, pytest.approx(normal_quantile_oracle(0.1420), abs=1e-9))


def test_truncate_total_fuzz(five_domain_rule):
    rng = np.random.default_rng(123)
    g1 = rng.normal(scale=2.0, size=1_000_000)
    g2 = rng.normal(scale=2.0, size=1_000_000)
    codes = five_domain_rule.truncate_codes(g1, g2)
    assert codes.min() >= 0 and codes.max() < 5


def test_threshold_monotonicity(five_domain_rule):
    # raising the boundary between a domain (below) and its neighbour
    # (above) never shrinks the lower domain's analytic proportion
    base = five_domain_rule.threshold_vector()
    p0 = rule_proportions(five_domain_rule)
    for k in range(base.size):
        theta = base.copy()
        theta[k] += 0.2
        shifted = five_domain_rule.with_thresholds(theta)
        p1 = rule_proportions(shifted)
        below = 0 if k == 0 else k  # domain directly below threshold k
        assert p1[below] >= p0[below] - 1e-12


def test_rule_validation():
    with pytest.raises(ConfigError):
        thresholds_from_proportions(("A", "B"), (0.7, 0.7))
    with pytest.raises(ConfigError):
        thresholds_from_proportions(("A", "B", "C"), (0.5, 0.5, 0.0))
    with pytest.raises(ConfigError):
        TruncationRule(("A",), 0.0)
    with pytest.raises(ConfigError):
        TruncationRule(("A", "B", "C", "D"), 0.0, (0.5, -0.5))


def test_with_thresholds_resorts_stack(five_domain_rule):
    theta = five_domain_rule.threshold_vector()
    swapped = theta.copy()
    swapped[1], swapped[2] = theta[2], theta[1]
    rebuilt = five_domain_rule.with_thresholds(swapped)
    assert np.all(np.diff(rebuilt.g2_thresholds) >= 0)
