import math
import tracemalloc

import numpy as np
import pytest
from scipy.special import logsumexp

from survgam.frailty import (
    _marginals,
    _modes,
    fit_frailty,
    gauss_hermite,
    subject_marginal,
    subject_mode,
)
from survgam.quadrature import ExpandedDataset, expand


def grid_marginal(s, c, a, sigma2, npts=100001):
    """Brute-force trapezoid integral over mode +- 10 posterior sds."""
    b_hat, curv = _modes(np.array([s]), np.array([c]), sigma2)
    b_hat, curv = b_hat[0], curv[0]
    tau = 1.0 / math.sqrt(curv)
    b = np.linspace(b_hat - 10 * tau, b_hat + 10 * tau, npts)
    h = a + s * b - c * np.exp(b) - b * b / (2 * sigma2)
    w = np.full(npts, b[1] - b[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return float(logsumexp(h + np.log(w)) - 0.5 * math.log(2 * math.pi * sigma2))


def random_subjects(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        sigma = rng.uniform(0.1, 0.6)
        c = rng.uniform(0.05, 3.0)
        s = float(rng.integers(0, 2))
        a = rng.normal()
        out.append((s, c, a, sigma * sigma))
    return out


class TestGaussHermite:
    @pytest.mark.parametrize("n", [1, 3, 9, 15])
    def test_integrates_monomials_under_gaussian_weight(self, n):
        x, w = gauss_hermite(n)
        # moments of exp(-x^2): integral x^k = Gamma((k+1)/2) for even k
        for k in range(0, 2 * n, 2):
            if k >= 2 * n:
                break
            exact = math.gamma((k + 1) / 2.0)
            assert abs(float(np.sum(w * x**k)) - exact) < 1e-10 * max(1, exact)
        for k in range(1, 2 * n, 2):
            assert abs(float(np.sum(w * x**k))) < 1e-10


class TestSubjectMode:
    def test_single_event_row_has_zero_mode(self):
        mode, curv = subject_mode(np.array([1.0]), np.array([0.0]), 1.0)
        assert mode == pytest.approx(0.0, abs=1e-10)
        assert curv == pytest.approx(2.0, abs=1e-8)

    def test_vanishing_variance_pins_mode_at_zero(self):
        y = np.array([0.0, 0.0, 1.0])
        eta = np.array([-1.0, -0.5, 0.2])
        for s2 in (1e-2, 1e-4, 1e-6):
            mode, _ = subject_mode(y, eta, s2)
            assert abs(mode) < 10 * s2

    def test_no_information_returns_prior_mode(self):
        y = np.zeros(4)
        eta = np.full(4, -40.0)
        mode, _ = subject_mode(y, eta, 1.0)
        assert abs(mode) < 1e-10

    def test_score_residual_below_tolerance(self, rng):
        for _ in range(50):
            nrow = int(rng.integers(2, 12))
            y = np.zeros(nrow)
            y[-1] = rng.integers(0, 2)
            eta = rng.normal(-2, 1.5, nrow)
            s2 = rng.uniform(0.01, 25.0)
            mode, _ = subject_mode(y, eta, s2)
            g = y.sum() - np.exp(eta).sum() * math.exp(mode) - mode / s2
            assert abs(g) < 1e-8

    def test_extreme_inputs_stay_finite(self):
        # large sigma with tiny exposure: root is far from zero but finite
        mode, curv = subject_mode(np.array([1.0]), np.array([-200.0]), 2500.0)
        assert np.isfinite(mode) and np.isfinite(curv)
        g = 1.0 - math.exp(-200.0 + mode) - mode / 2500.0
        assert abs(g) < 1e-8


class TestSubjectMarginal:
    def test_one_node_quadrature_equals_laplace(self, rng):
        for _ in range(25):
            nrow = int(rng.integers(2, 10))
            y = np.zeros(nrow)
            y[-1] = rng.integers(0, 2)
            eta = rng.normal(-2, 1, nrow)
            s2 = rng.uniform(0.05, 4.0)
            laplace = subject_marginal(y, eta, s2, "laplace")
            agq1 = subject_marginal(y, eta, s2, "agq", 1)
            assert abs(laplace - agq1) < 1e-12

    def test_agq15_matches_grid_oracle(self):
        for s, c, a, s2 in random_subjects(100):
            ll, _, _ = _marginals(np.array([s]), np.array([c]), np.array([a]), s2, 15)
            assert abs(float(ll[0]) - grid_marginal(s, c, a, s2)) < 1e-8

    def test_error_non_increasing_in_node_count(self):
        subjects = random_subjects(100)
        oracle = {sub: grid_marginal(*sub) for sub in subjects}
        max_err = {}
        for nodes in (1, 3, 9, 15):
            errs = [
                abs(float(_marginals(np.array([s]), np.array([c]), np.array([a]), s2, nodes)[0][0]) - oracle[(s, c, a, s2)])
                for (s, c, a, s2) in subjects
            ]
            max_err[nodes] = max(errs)
        assert max_err[3] <= max_err[1] * 1.05 + 1e-12
        assert max_err[9] <= max_err[3] * 1.05 + 1e-12
        assert max_err[15] <= max_err[9] * 1.05 + 1e-12

    def test_even_node_count_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            subject_marginal(np.array([1.0]), np.array([0.0]), 1.0, "agq", 4)

    def test_non_finite_offsets_rejected(self):
        from survgam.errors import FitError

        with pytest.raises(FitError, match="non-finite"):
            subject_marginal(np.array([1.0]), np.array([np.inf]), 1.0)


def _toy_expanded(rng, n_subjects, base_rate=-1.5, nodes=5, sigma_f=0.0):
    """Expanded pseudo-data with known per-row offsets for frailty tests."""
    z = rng.normal(0, sigma_f, n_subjects) if sigma_f > 0 else np.zeros(n_subjects)
    subj = np.repeat(np.arange(n_subjects), nodes)
    offsets = rng.normal(base_rate, 0.3, n_subjects * nodes)
    rate = np.exp(offsets + z[subj])
    cum = np.bincount(subj, weights=rate)
    # terminal-row Bernoulli event from the subject's integrated intensity
    p_event = 1.0 - np.exp(-cum)
    y = np.zeros(n_subjects * nodes)
    y[nodes - 1 :: nodes] = rng.random(n_subjects) < p_event
    e = ExpandedDataset(
        subject=subj,
        node_time=np.tile(np.linspace(0, 1, nodes), n_subjects),
        y=y,
        log_weight=np.zeros(n_subjects * nodes),
        n_subjects=n_subjects,
        nodes_per_subject=nodes,
    )
    return e, offsets, z


class TestFitFrailty:
    def test_exact_rates_drive_sigma_to_floor(self, rng):
        e, offsets, _ = _toy_expanded(rng, 800, sigma_f=0.0)
        fit = fit_frailty(e, offsets, method="laplace", with_intercept=False)
        assert fit.boundary
        assert fit.sigma_u == pytest.approx(1e-4)

    def test_additivity_under_subject_permutation(self, rng):
        e, offsets, _ = _toy_expanded(rng, 200, sigma_f=0.6)
        fit = fit_frailty(e, offsets, method="agq", agq_nodes=9, with_intercept=False)
        perm = rng.permutation(200)
        remap = np.empty(200, dtype=int)
        remap[perm] = np.arange(200)
        order = np.argsort(remap[e.subject], kind="stable")
        e2 = ExpandedDataset(
            subject=remap[e.subject][order],
            node_time=e.node_time[order],
            y=e.y[order],
            log_weight=e.log_weight[order],
            n_subjects=200,
            nodes_per_subject=e.nodes_per_subject,
        )
        fit2 = fit_frailty(e2, offsets[order], method="agq", agq_nodes=9, with_intercept=False)
        assert abs(fit.marginal_loglik - fit2.marginal_loglik) < 1e-12 * max(1, abs(fit.marginal_loglik))
        np.testing.assert_allclose(np.sort(fit.modes), np.sort(fit2.modes), atol=1e-10)

    def test_mode_residuals_at_solution(self, rng):
        e, offsets, _ = _toy_expanded(rng, 300, sigma_f=0.8)
        fit = fit_frailty(e, offsets, method="agq", agq_nodes=9, with_intercept=True)
        s2 = fit.sigma_u**2
        per_rate = np.exp(offsets + fit.alpha)
        c = np.bincount(e.subject, weights=per_rate)
        s = np.bincount(e.subject, weights=e.y)
        g = s - c * np.exp(fit.modes) - fit.modes / s2
        assert np.max(np.abs(g)) < 1e-8

    def test_intercept_absorbs_constant_offset_error(self, rng):
        e, offsets, _ = _toy_expanded(rng, 4000, sigma_f=0.5)
        shift = 0.6
        base = fit_frailty(e, offsets, method="agq", agq_nodes=9, with_intercept=True)
        shifted = fit_frailty(e, offsets - shift, method="agq", agq_nodes=9, with_intercept=True)
        assert shifted.alpha - base.alpha == pytest.approx(shift, abs=0.02)
        assert shifted.sigma_u == pytest.approx(base.sigma_u, rel=0.05)

    def test_sigma_recovered_from_true_offsets(self, rng):
        e, offsets, z = _toy_expanded(rng, 6000, sigma_f=0.7)
        fit = fit_frailty(e, offsets, method="agq", agq_nodes=9, with_intercept=False)
        assert fit.sigma_u == pytest.approx(0.7, rel=0.15)

    def test_memory_stays_linear_in_subjects(self, rng):
        sizes = (2000, 8000)
        peaks = []
        for n in sizes:
            e, offsets, _ = _toy_expanded(np.random.default_rng(1), n, sigma_f=0.4)
            tracemalloc.start()
            fit_frailty(e, offsets, method="agq", agq_nodes=15, with_intercept=True)
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            peaks.append(peak)
        # 4x subjects must not cost more than ~6x allocation (no quadratic term)
        assert peaks[1] < 6 * peaks[0] + 1_000_000


class TestFullPipelineSigmaZero:
    def test_pipeline_sigma_below_noise_floor(self):
        from survgam.backfit import BackfitConfig, two_stage_fit
        from survgam.simulate import pilot_trial_dataset

        d, _ = pilot_trial_dataset(2000, lam=0.03, sigma_f=0.0, seed=21)
        res = two_stage_fit(d, BackfitConfig())
        assert res.frailty.sigma_u < 0.05
