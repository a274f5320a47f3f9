import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzybell.errors import ConfigError, SizeCapError
from fuzzybell.loss import (
    EXACT_MAX_PAIRS,
    FringeKernel,
    LossChannel,
    McConfig,
    fringe_point,
    outcome_labels,
    outcome_matrix_exact,
    outcome_matrix_mc,
    singlet_kernel,
    spdc_fringe_point,
    spdc_kernel,
    thin_binomial_exact,
)
from fuzzybell.measure import MeasurementScheme, joint_probabilities
from fuzzybell.state import singlet_coefficients, spdc_weights

import oracles

D = MeasurementScheme.dichotomic()
OF = MeasurementScheme.orthogonality_filter
TD = MeasurementScheme.threshold_detector


def test_thinning_examples():
    np.testing.assert_allclose(thin_binomial_exact([0, 0, 1], 0.5), [0.25, 0.5, 0.25], atol=1e-15)
    dist = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(thin_binomial_exact(dist, 1.0), dist, atol=1e-15)
    np.testing.assert_allclose(thin_binomial_exact(dist, 0.0), [1, 0, 0, 0], atol=1e-15)
    with pytest.raises(ConfigError):
        thin_binomial_exact(dist, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=25), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_thinning_mean_and_composition(raw, e1, e2):
    dist = np.asarray(raw) + 1e-3
    dist /= dist.sum()
    k = np.arange(len(dist))
    once = thin_binomial_exact(dist, e1)
    assert abs(once.sum() - 1.0) < 1e-12
    assert abs(k @ once - e1 * (k @ dist)) < 1e-10
    twice = thin_binomial_exact(once, e2)
    np.testing.assert_allclose(twice, thin_binomial_exact(dist, e1 * e2), atol=1e-10)


def test_channel_validation():
    with pytest.raises(ConfigError):
        LossChannel(-0.1)
    with pytest.raises(ConfigError):
        LossChannel(0.5, (0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        LossChannel(0.5, (0.5, 0.5, 0.5, 1.2))
    assert LossChannel(0.3).etas == (0.3,) * 4
    assert LossChannel(1.0).is_identity
    with pytest.raises(ConfigError):
        McConfig(shots=0)
    with pytest.raises(ConfigError):
        McConfig(workers=0)


def test_workers_default_from_environment(monkeypatch):
    monkeypatch.setenv("FUZZYBELL_WORKERS", "3")
    assert McConfig().workers == 3
    monkeypatch.setenv("FUZZYBELL_WORKERS", "many")
    with pytest.raises(ConfigError):
        McConfig()


def test_single_pair_lossless_cell():
    M = outcome_matrix_exact(1, D, LossChannel(1.0)).M
    # cell (0, 0): A counts (1, 0), B counts (0, 1)
    assert M[0, 1, 0, 0] == 1.0
    assert M[:, :, 0, 0].sum() == 1.0


@pytest.mark.parametrize("scheme,kind", [(D, ("dichotomic", 0, 0)), (OF(1), ("of", 1, 0)), (TD(1), ("td", 0, 1)),
                                         (TD(2), ("td", 0, 2))])
@pytest.mark.parametrize("etas", [(0.5,) * 4, (0.9, 0.2, 0.6, 0.35)])
def test_two_pair_matrix_against_enumeration(scheme, kind, etas):
    channel = LossChannel(etas[0], etas if len(set(etas)) > 1 else None)
    M = outcome_matrix_exact(2, scheme, channel).M
    for m in range(3):
        for p in range(3):
            expected = np.array(oracles.lossy_cell(2, m, p, etas, *kind))
            np.testing.assert_allclose(M[:, :, m, p], expected, atol=1e-14)


@pytest.mark.parametrize("n", [3, 5])
def test_larger_cells_against_enumeration(n):
    etas = (0.7, 0.4, 0.55, 0.8)
    M = outcome_matrix_exact(n, OF(2), LossChannel(0.5, etas)).M
    for m, p in [(0, 0), (1, n), (n // 2, 1), (n, n - 1)]:
        expected = np.array(oracles.lossy_cell(n, m, p, etas, "of", 2, 0))
        np.testing.assert_allclose(M[:, :, m, p], expected, atol=1e-13)


def test_cells_complete():
    for scheme in (D, OF(3), TD(4)):
        M = outcome_matrix_exact(20, scheme, LossChannel(0.37))
        np.testing.assert_allclose(M.cell_sums(), 1.0, atol=1e-12)


def test_exact_cap():
    with pytest.raises(SizeCapError):
        outcome_matrix_exact(EXACT_MAX_PAIRS + 1, D, LossChannel(0.5))
    with pytest.raises(ConfigError):
        outcome_matrix_exact(2, MeasurementScheme.parity(), LossChannel(0.5))


def test_mc_lossless_reproduces_exact():
    cfg = McConfig(shots=20_000, seed=3)
    for n in (3, 4):
        ex = outcome_matrix_exact(n, D, LossChannel(1.0))
        mc = outcome_matrix_mc(n, D, LossChannel(1.0), cfg)
        # deterministic cells match exactly; only tie cells carry coin noise
        certain = np.isin(ex.M, (0.0, 1.0))
        assert np.array_equal(mc.M[certain], ex.M[certain])
        z = np.abs(mc.M - ex.M) / mc.stderr
        assert z.max() < 3.0


def test_mc_against_exact_seven_pairs():
    ex = outcome_matrix_exact(7, D, LossChannel(0.3))
    mc = outcome_matrix_mc(7, D, LossChannel(0.3), McConfig(shots=100_000, seed=0))
    z = np.abs(mc.M - ex.M) / mc.stderr
    # 576 entries put about 1.6 beyond 3 sigma by chance; more than 5 has
    # probability below 1% for a correct sampler
    assert np.count_nonzero(z > 3.0) <= 5
    assert z.max() < 5.0
    np.testing.assert_allclose(mc.cell_sums(), 1.0, atol=1e-12)


def test_mc_is_reproducible_and_worker_independent():
    channel = LossChannel(0.6)
    a = outcome_matrix_mc(4, TD(2), channel, McConfig(shots=2000, seed=11, workers=1))
    b = outcome_matrix_mc(4, TD(2), channel, McConfig(shots=2000, seed=11, workers=1))
    c = outcome_matrix_mc(4, TD(2), channel, McConfig(shots=2000, seed=11, workers=2))
    d = outcome_matrix_mc(4, TD(2), channel, McConfig(shots=2000, seed=12, workers=1))
    assert np.array_equal(a.M, b.M) and np.array_equal(a.M, c.M)
    assert not np.array_equal(a.M, d.M)


def test_mc_cap():
    with pytest.raises(SizeCapError):
        outcome_matrix_mc(401, D, LossChannel(0.5), McConfig(shots=1))


@pytest.mark.parametrize("theta", [0.0, 0.3, 1.1])
def test_fringe_point_identity_channel(theta):
    c = singlet_coefficients(1, theta)
    fp = fringe_point(c, outcome_matrix_exact(1, D, LossChannel(1.0)))
    np.testing.assert_allclose(fp.p, joint_probabilities(c, D, D).p, atol=1e-15)


def test_fringe_point_size_mismatch():
    with pytest.raises(ConfigError):
        fringe_point(singlet_coefficients(2, 0.1), outcome_matrix_exact(3, D, LossChannel(1.0)))


def test_fringe_point_brute_force():
    n, theta, etas = 3, 0.8, (0.6,) * 4
    amp = oracles.singlet_amplitudes(n, theta)
    expected = sum(np.array(oracles.lossy_cell(n, m, p, etas, "td", 0, 2)) * amp[m][p] ** 2
                   for m in range(n + 1) for p in range(n + 1))
    got = fringe_point(singlet_coefficients(n, theta), outcome_matrix_exact(n, TD(2), LossChannel(0.6)))
    np.testing.assert_allclose(got.p, expected, atol=1e-14)


@pytest.mark.parametrize("n", [0, 1, 6, 25])
@pytest.mark.parametrize("scheme", [D, OF(2), TD(3)])
def test_kernel_matches_coefficient_route(n, scheme):
    channel = LossChannel(0.45)
    kern, _ = singlet_kernel(n, scheme, channel)
    M = outcome_matrix_exact(n, scheme, channel)
    thetas = np.array([0.0, 0.37, 1.2, 2.9])
    tables = kern(thetas)
    for t, table in zip(thetas, tables):
        np.testing.assert_allclose(table, fringe_point(singlet_coefficients(n, t), M).p, atol=1e-13)
    # the outcome-matrix form of the kernel is the same expansion
    np.testing.assert_allclose(FringeKernel.from_outcome_matrix(M).coefficients, kern.coefficients, atol=1e-13)
    assert kern.degree == n


@pytest.mark.parametrize("n", [4, 9])
@pytest.mark.parametrize("h", [2, 5])
def test_td_rate_survives_loss(n, h):
    kern, _ = singlet_kernel(n, TD(h), LossChannel(0.55))
    rates = kern(np.linspace(0, math.pi, 37))[:, :2, :2].sum(axis=(1, 2))
    assert np.ptp(rates) < 1e-9


def test_td_rate_survives_loss_mc():
    n, h = 5, 2
    channel = LossChannel(0.5)
    M = outcome_matrix_mc(n, TD(h), channel, McConfig(shots=20_000, seed=5))
    rates, errs = [], []
    for t in np.linspace(0, math.pi, 13):
        fp = fringe_point(singlet_coefficients(n, t), M)
        rates.append(fp.p[:2, :2].sum())
        errs.append(math.sqrt((fp.stderr[:2, :2] ** 2).sum()))
    rates = np.array(rates)
    assert np.all(np.abs(rates - rates.mean()) <= 4 * np.array(errs))


def test_vacuum_mixture_is_inconclusive():
    w = spdc_weights(0.0)
    fp = spdc_fringe_point(w, 0.4, TD(1), TD(1), LossChannel(1.0))
    assert fp[(0, 0)] == 1.0


def test_spdc_kernel_is_weighted_sector_sum():
    w = spdc_weights(0.6, 1e-10)
    channel = LossChannel(0.7)
    theta = 0.9
    got = spdc_fringe_point(w, theta, OF(1), OF(1), channel).p
    expected = np.zeros((3, 3))
    for n, wn in enumerate(w.weight):
        M = outcome_matrix_exact(n, OF(1), channel)
        expected += wn * fringe_point(singlet_coefficients(n, theta), M).p
    np.testing.assert_allclose(got, expected / w.weight.sum(), atol=1e-13)
    assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_spdc_mc_matches_exact():
    w = spdc_weights(0.3, 1e-4)
    channel = LossChannel(0.5)
    ex = spdc_kernel(w, D, channel)(0.5)
    mc = spdc_kernel(w, D, channel, cfg=McConfig(shots=20_000, seed=1))(0.5)
    np.testing.assert_allclose(mc, ex, atol=0.01)
    assert mc.sum() == pytest.approx(1.0, abs=1e-12)


def test_outcome_labels_order():
    assert outcome_labels() == ["p_pp", "p_pm", "p_pz", "p_mp", "p_mm", "p_mz", "p_zp", "p_zm", "p_zz"]
