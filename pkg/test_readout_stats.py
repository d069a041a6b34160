#!/usr/bin/env python3
"""
Tests for single-shot readout statistics
"""

import numpy as np
import pytest

from src.analysis.readout_stats import (
    ErrorMatrix,
    GaussianFit,
    assign_states,
    assignment_error_probability,
    bootstrap_probabilities,
    correct_counts,
    error_matrix_from_rates,
    fit_readout_gaussians,
    joint_counts,
    simulate_shots,
    threshold_error_matrix,
    threshold_error_rates,
    transition_probabilities,
    two_state_error_matrix,
)
from src.config.loader import load_device_catalog
from src.config.settings import settings
from src.core.errors import ParameterError, StatsError

CENTERS = np.array([[-1.0, 0.5], [1.5, 0.5]])
TRANSITION = np.array([[0.97, 0.10], [0.03, 0.90]])


def test_assignment_error_formula():
    assert assignment_error_probability(16.0) == pytest.approx(0.02275, abs=1e-5)
    assert assignment_error_probability(0.0) == 0.5
    values = [assignment_error_probability(s) for s in np.linspace(0.0, 50.0, 26)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ParameterError):
        assignment_error_probability(-1.0)


def test_threshold_rates_match_formula_for_equal_widths():
    """Midpoint threshold on equal Gaussians reproduces ½(1 − erf(√(SNR/8)))"""
    fit = GaussianFit(np.array([[0.0, 0.0], [2.0, 0.0]]), 0.5, np.array([0.5, 0.5]), 0.0)
    p_e_given_g, p_g_given_e = threshold_error_rates(fit)
    assert p_e_given_g == pytest.approx(p_g_given_e, rel=1e-12)
    assert p_e_given_g == pytest.approx(assignment_error_probability(fit.snr), rel=1e-9)
    assert fit.snr == pytest.approx(16.0)
    assert threshold_error_matrix(fit).matrix == pytest.approx(two_state_error_matrix(16.0).matrix)


def test_gaussian_fit_recovers_clusters():
    shots, _, _ = simulate_shots(CENTERS, 0.4, np.eye(2), 20000, seed=1)
    fit = fit_readout_gaussians(shots, measurement="initial")
    separation = np.linalg.norm(CENTERS[1] - CENTERS[0])
    assert np.allclose(fit.centers, CENTERS, atol=0.02 * separation)
    assert fit.weights == pytest.approx([0.5, 0.5], abs=0.02)
    assert fit.sigma == pytest.approx(0.4, rel=0.05)
    assert fit.rotation == pytest.approx(0.0, abs=0.02)
    assert not fit.degenerate
    assert fit.to_dict()["covariance_type"] == "tied"


def test_full_covariance_fit():
    shots, _, _ = simulate_shots(CENTERS, 0.3, np.eye(2), 10000, seed=2)
    fit = fit_readout_gaussians(shots, covariance_type="full", measurement="final")
    assert fit.sigmas.shape == (2,)
    assert fit.sigmas == pytest.approx([0.3, 0.3], rel=0.05)


def test_single_cluster_is_degenerate():
    shots, _, _ = simulate_shots(np.zeros((2, 2)), 0.4, np.eye(2), 20000, seed=3)
    fit = fit_readout_gaussians(shots, measurement="initial")
    assert fit.degenerate


def test_three_cluster_fit_orders_other_state():
    centers = np.array([[0.0, 0.0], [3.0, 0.0], [1.5, -2.5]])
    transition = np.eye(3)
    shots, _, final = simulate_shots(centers, 0.3, transition, 15000, preparation=[0.4, 0.4, 0.2], seed=4)
    reference = GaussianFit(centers[:2], 0.3, np.array([0.5, 0.5]), 0.0)
    fit = fit_readout_gaussians(shots, 3, measurement="final", reference=reference)
    assert np.allclose(fit.centers, centers, atol=0.05)
    assert fit.q_sign == -1.0
    assert fit.q_threshold is not None
    labels = assign_states(fit, shots.final)
    assert np.mean(labels == final) > 0.98


def test_too_few_shots():
    shots, _, _ = simulate_shots(CENTERS, 0.4, np.eye(2), 200, seed=5)
    with pytest.raises(StatsError):
        fit_readout_gaussians(shots, measurement="initial")
    with pytest.raises(ParameterError):
        fit_readout_gaussians(shots, n_components=4)


def test_identity_correction():
    corrected = correct_counts([10.0, 90.0], ErrorMatrix(np.eye(2)))
    assert corrected.values.tolist() == [10.0, 90.0]
    assert not corrected.clipped


def test_correction_inverts_confusion():
    e = two_state_error_matrix(9.0)
    truth = np.array([300.0, 700.0])
    corrected = correct_counts(e.matrix @ truth, e)
    assert np.allclose(corrected.values, truth, atol=1e-9)


def test_negative_counts_are_clipped():
    e = error_matrix_from_rates(0.1)
    corrected = correct_counts([0.0, 100.0], e)
    assert corrected.clipped
    assert corrected.values.min() == 0.0
    assert corrected.values.sum() == pytest.approx(100.0)


def test_singular_error_matrix():
    with pytest.raises(StatsError):
        correct_counts([50.0, 50.0], ErrorMatrix([[0.5, 0.5], [0.5, 0.5]]))


def test_error_matrix_validation():
    with pytest.raises(ParameterError):
        ErrorMatrix([[0.9, 0.2], [0.2, 0.8]])
    with pytest.raises(ParameterError):
        ErrorMatrix(np.eye(4))


def test_device_a_three_state_correction():
    """Device A final-readout rates correct a 3-state count vector"""
    rates = load_device_catalog()["readout_errors"]["A"]["final"]
    e = error_matrix_from_rates(**rates)
    assert e.dimension == 3
    assert e.labels == ("g", "e", "o")
    assert e.matrix.sum(axis=0) == pytest.approx(np.ones(3), abs=1e-12)
    truth = np.array([6000.0, 3500.0, 500.0])
    corrected = correct_counts(e.matrix @ truth, e)
    assert np.allclose(corrected.values, truth, rtol=1e-10)


def test_joint_counts_and_transition_layout():
    counts = joint_counts([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], 2)
    assert counts.tolist() == [[1.0, 1.0], [1.0, 2.0]]
    p = transition_probabilities(counts)
    assert p[:, 0] == pytest.approx([0.5, 0.5])
    assert p[:, 1] == pytest.approx([1 / 3, 2 / 3])
    rectangular = joint_counts([0, 1], [2, 0], 2, 3)
    assert rectangular.shape == (3, 2)
    assert np.all(np.isnan(transition_probabilities(joint_counts([0], [0], 2))[:, 1]))


def test_bootstrap_of_deterministic_pairs():
    pairs = np.array([[0, 0]] * 500 + [[1, 1]] * 500)
    result = bootstrap_probabilities(pairs, n_samples=50, sample_size=400, seed=3)
    assert np.allclose(result.mean, np.eye(2))
    assert np.allclose(result.sd, 0.0)
    frame = result.to_frame()
    assert list(frame.columns) == ["initial", "final", "probability", "sd"]
    assert len(frame) == 4


def test_bootstrap_binomial_spread():
    rng = np.random.default_rng(11)
    n = 20000
    initial = np.repeat([0, 1], n // 2)
    final = np.where(initial == 0, 0, (rng.random(n) >= 0.3).astype(int))
    result = bootstrap_probabilities(np.column_stack([initial, final]), n_samples=300, sample_size=5000, seed=0)
    assert result.mean[0, 1] == pytest.approx(0.3, abs=0.02)
    expected_sd = np.sqrt(0.3 * 0.7 / 2500)
    assert result.sd[0, 1] == pytest.approx(expected_sd, rel=0.3)


def test_bootstrap_is_reproducible():
    pairs = np.column_stack([np.arange(2000) % 2, (np.arange(2000) // 3) % 2])
    a = bootstrap_probabilities(pairs, n_samples=20, sample_size=1000, seed=5)
    b = bootstrap_probabilities(pairs, n_samples=20, sample_size=1000, seed=5)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.sd, b.sd)


def test_bootstrap_sample_size_limit():
    pairs = np.zeros((100, 2), dtype=int)
    with pytest.raises(StatsError):
        bootstrap_probabilities(pairs, n_samples=10, sample_size=101)


def run_round_trip(n_shots: int, n_samples: int, sample_size: int):
    shots, _, _ = simulate_shots(CENTERS, 0.6, TRANSITION, n_shots, seed=21)
    initial_fit = fit_readout_gaussians(shots, measurement="initial")
    final_fit = fit_readout_gaussians(shots, measurement="final")
    pairs = np.column_stack([initial_fit.assign(shots.initial), final_fit.assign(shots.final)])
    matrices = (threshold_error_matrix(initial_fit), threshold_error_matrix(final_fit))
    return bootstrap_probabilities(pairs, n_samples, sample_size, matrices, seed=0)


def test_generate_correct_bootstrap_round_trip():
    """Error-corrected bootstrap recovers the generating transition probabilities"""
    result = run_round_trip(40000, 200, 10000)
    assert np.all(np.abs(result.mean - TRANSITION) <= 2.0 * result.sd + 2e-3)


@pytest.mark.skipif(not settings.RUN_SLOW_TESTS, reason="set RUN_SLOW_TESTS=1 for acceptance-scale runs")
def test_full_bootstrap_round_trip():
    result = run_round_trip(100000, 1000, 20000)
    assert np.all(np.abs(result.mean - TRANSITION) <= 2.0 * result.sd + 1e-3)
