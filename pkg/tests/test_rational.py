import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fraclap.errors import DomainError, PoleError
from fraclap.operators import identity_operator, laplacian_1d, laplacian_2d
from fraclap.rational import (
    BandwidthWarning,
    KSelectionWarning,
    RationalOperator,
    apply_rational,
    assemble_mk,
    build_coeffs,
    convergence_factor,
    ellipse_radius,
    epsilon_k,
    error_bound,
    eval_scalar,
    mobius_pole,
    pole_distance,
    remark_estimate,
    resolvent_partial_fractions,
    select_k,
    spectral_error,
    tau_opt,
    write_coeffs_csv,
)
from oracles import dense_eig_power, laplacian_dense_1d, laplacian_dense_2d


def _opt(L):
    return tau_opt(L.lambda_min, L.lambda_max)


class TestTau:
    def test_fig1_data(self):
        assert tau_opt(0.5, 4.0) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_degenerate(self):
        assert tau_opt(1.0, 1.0) == 1.0

    def test_grid_search(self):
        lmin = 2 - 2 * math.cos(math.pi / 201)
        lmax = 2 - 2 * math.cos(200 * math.pi / 201)
        # maximise min over the spectrum of |p_tau|; the minimum sits at an endpoint
        taus = np.geomspace(lmin, lmax, 10_002)[1:-1]
        obj = np.minimum(np.abs((taus + lmin) / (taus - lmin)),
                         np.abs((taus + lmax) / (taus - lmax)))
        best = taus[np.argmax(obj)]
        step = taus[1] / taus[0]
        assert best / step <= tau_opt(lmin, lmax) <= best * step

    @pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (-1.0, 2.0), (3.0, 2.0)])
    def test_invalid(self, lo, hi):
        with pytest.raises(DomainError):
            tau_opt(lo, hi)


class TestMobius:
    def test_matches_pole_distance(self):
        p = mobius_pole(math.sqrt(2), 0.5)
        assert p == pytest.approx((math.sqrt(2) + 0.5) / (math.sqrt(2) - 0.5), rel=1e-15)
        assert abs(p - pole_distance(8.0)) <= 1e-14

    def test_sign_convention(self):
        assert mobius_pole(1.0, 1.0 + 1e-6) < -1e5
        assert mobius_pole(1.0, 0.3) > 1.0

    def test_symmetry_at_opt(self):
        tau = tau_opt(0.5, 4.0)
        assert mobius_pole(tau, 0.5) - 1 == pytest.approx(-mobius_pole(tau, 4.0) - 1, rel=1e-14)

    def test_pole(self):
        with pytest.raises(PoleError):
            mobius_pole(2.0, 2.0)

    def test_pole_distance_kappa_one(self):
        assert math.isinf(pole_distance(1.0))


class TestCoefficients:
    def test_k1_half(self):
        R = build_coeffs(1, 0.5, 1.0)
        assert_allclose(R.gamma, [2.0], rtol=1e-14)
        assert_allclose(R.eta, [1.0], rtol=1e-14)
        assert eval_scalar(R, 1.0) == pytest.approx(1.0, rel=1e-14)
        assert eval_scalar(R, 4.0) == pytest.approx(1.6, rel=1e-14)

    def test_positive_and_decreasing(self):
        L = laplacian_1d(200)
        R = build_coeffs(3, 0.9, _opt(L))
        assert np.all(R.gamma > 0) and np.all(R.eta > 0)
        assert np.all(np.diff(R.eta) < 0)
        assert np.all(np.diff(R.rule.nodes) > 0)

    @settings(max_examples=30, deadline=None)
    @given(k=st.integers(1, 25), beta=st.floats(0.51, 0.99), tau=st.floats(1e-3, 1e3))
    def test_exact_at_tau(self, k, beta, tau):
        R = build_coeffs(k, beta, tau)
        assert np.all(R.gamma > 0) and np.all(R.eta > 0)
        assert eval_scalar(R, tau) == pytest.approx(tau ** beta, rel=1e-12)
        assert np.all(eval_scalar(R, np.geomspace(1e-6, 1e6, 13)) > 0)

    def test_bad_tau(self):
        with pytest.raises(DomainError):
            build_coeffs(3, 0.5, 0.0)

    def test_callable(self):
        R = build_coeffs(4, 0.7, 2.0)
        assert R(3.0) == eval_scalar(R, 3.0)

    def test_geometric_decay_beta09(self):
        L = laplacian_1d(200)
        lam = np.sort(np.random.default_rng(0).choice(L.eigenvalues(), 150, replace=False))
        errs = [spectral_error(build_coeffs(k, 0.9, _opt(L)), lam, relative=True)
                for k in (3, 5, 7, 9)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < errs[0] * convergence_factor(L.condition_number) ** 4

    def test_csv(self, tmp_path):
        R = build_coeffs(5, 0.75, 0.3)
        path = tmp_path / "coeffs.csv"
        write_coeffs_csv(R, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#")
        rows = list(csv.reader(lines[1:]))
        assert rows[0] == ["j", "node", "weight", "gamma", "eta"]
        table = np.array(rows[1:], dtype=float)
        assert_allclose(table[:, 3], R.gamma, rtol=1e-16)
        assert_allclose(table[:, 4], R.eta, rtol=1e-16)


class TestApply:
    def test_zero(self):
        L = laplacian_1d(8)
        assert np.all(apply_rational(build_coeffs(3, 0.7, _opt(L)), L, np.zeros(8)) == 0)

    @pytest.mark.parametrize("k", [1, 5, 20])
    @pytest.mark.parametrize("beta", [0.55, 0.8, 0.95])
    def test_identity_exact(self, k, beta):
        v = np.random.default_rng(k).standard_normal(30)
        out = apply_rational(build_coeffs(k, beta, 1.0), identity_operator(30), v)
        assert np.linalg.norm(out - v) <= 1e-14 * np.linalg.norm(v)

    def test_small_against_oracle(self):
        L = laplacian_1d(10)
        v = np.random.default_rng(1).standard_normal(10)
        v /= np.linalg.norm(v)
        out = apply_rational(build_coeffs(50, 0.9, _opt(L)), L, v)
        ref = dense_eig_power(laplacian_dense_1d(10), 0.9, v)
        assert np.linalg.norm(out - ref) <= 1e-10

    def test_operator_matches_function(self):
        L = laplacian_2d(6)
        R = build_coeffs(7, 0.75, _opt(L))
        op = RationalOperator(R, L)
        V = np.random.default_rng(2).standard_normal((36, 2))
        assert_allclose(op.apply(V), apply_rational(R, L, V), rtol=1e-13, atol=1e-13)


class TestResolvent:
    @pytest.mark.parametrize("k", [1, 4, 12, 40])
    def test_partial_fraction_identity(self, k):
        R = build_coeffs(k, 0.85, 0.05)
        a, b = 1.3, 7.0
        d, zeta, c = resolvent_partial_fractions(R, a, b)
        assert np.all(zeta > 0) and np.all(c > 0)
        z = np.geomspace(1e-4, 10, 25)
        lhs = 1.0 / (a + b * eval_scalar(R, z))
        rhs = d + np.sum(c / (z[:, None] + zeta), axis=1)
        assert_allclose(rhs, lhs, rtol=1e-12)

    def test_invalid(self):
        with pytest.raises(DomainError):
            resolvent_partial_fractions(build_coeffs(2, 0.5, 1.0), 0.0, 1.0)

    @pytest.mark.parametrize("N,k", [(12, 3), (50, 40)])
    def test_solve_against_spectral(self, N, k):
        L = laplacian_1d(N)
        R = build_coeffs(k, 0.8, _opt(L))
        op = RationalOperator(R, L)
        y = np.random.default_rng(3).standard_normal(N)
        a, b = 1.0, 250.0
        x = op.solve(a, b, y)
        lam, Q = np.linalg.eigh(laplacian_dense_1d(N))
        ref = Q @ ((Q.T @ y) / (a + b * eval_scalar(R, lam)))
        assert np.linalg.norm(x - ref) <= 1e-11 * np.linalg.norm(ref)


class TestFactorized:
    def test_k1(self):
        L = laplacian_1d(9)
        R = build_coeffs(1, 0.6, _opt(L))
        P = assemble_mk(R, L)
        v = np.random.default_rng(4).standard_normal(9)
        D = laplacian_dense_1d(9)
        ref = R.gamma[0] * np.linalg.solve(R.eta[0] * np.eye(9) + D, D @ v)
        assert_allclose(P.apply(v), ref, rtol=1e-13)

    def test_dense_n10_k4(self):
        L = laplacian_1d(10)
        R = build_coeffs(4, 0.75, _opt(L))
        D = laplacian_dense_1d(10)
        ref = sum(g * D @ np.linalg.inv(e * np.eye(10) + D) for g, e in zip(R.gamma, R.eta))
        assert np.max(np.abs(assemble_mk(R, L).dense() - ref)) <= 1e-12

    @pytest.mark.parametrize("k", [1, 3, 6])
    def test_bandwidths_1d(self, k):
        L = laplacian_1d(40)
        P = assemble_mk(build_coeffs(k, 0.7, _opt(L)), L)
        assert P.M.bandwidths == (k, k)
        assert P.K.bandwidths == (k, k)

    def test_fallback_when_dense(self):
        L = laplacian_1d(5)
        R = build_coeffs(8, 0.7, _opt(L))
        with pytest.warns(BandwidthWarning):
            P = assemble_mk(R, L)
        assert not P.banded
        v = np.arange(5.0)
        assert_allclose(P.apply(v), apply_rational(R, L, v), rtol=1e-13)

    @pytest.mark.parametrize("N,k", [(10, 4), (20, 3), (50, 2), (200, 1), (30, 4)])
    def test_equivalence_where_conditioned(self, N, k):
        L = laplacian_1d(N)
        R = build_coeffs(k, 0.75, _opt(L))
        v = np.random.default_rng(N + k).standard_normal(N)
        diff = assemble_mk(R, L).apply(v) - apply_rational(R, L, v)
        assert np.linalg.norm(diff) <= 1e-10 * np.linalg.norm(v)

    @pytest.mark.xfail(strict=True, reason="M = prod(eta_j I + L) is too ill-conditioned "
                       "for the explicit product form at N=200, k=8")
    def test_equivalence_full_range(self):
        L = laplacian_1d(200)
        R = build_coeffs(8, 0.75, _opt(L))
        v = np.random.default_rng(0).standard_normal(200)
        diff = assemble_mk(R, L).apply(v) - apply_rational(R, L, v)
        assert np.linalg.norm(diff) <= 1e-10 * np.linalg.norm(v)

    @pytest.mark.parametrize("beta", [0.55, 0.9])
    @pytest.mark.parametrize("N", [4, 12])
    def test_positive_spectrum(self, N, beta):
        for dim_L in (laplacian_1d(N), laplacian_2d(3)):
            for k in range(1, 9):
                R = build_coeffs(k, beta, _opt(dim_L))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", BandwidthWarning)
                    P = assemble_mk(R, dim_L)
                if not P.banded:
                    continue
                ev = np.linalg.eigvals(P.dense())
                assert np.all(ev.real > 0)
                assert np.max(np.abs(ev.imag)) <= 1e-8 * np.max(ev.real)


class TestBounds:
    def test_kappa8(self):
        g = pole_distance(8.0)
        rho = ellipse_radius(8.0)
        q = 8.0 ** 0.25
        assert g == pytest.approx(2.0938363213560542, rel=1e-14)
        assert round(g, 4) == 2.0938 and round(rho, 4) == 3.9334
        assert abs(rho - (q + 1) / (q - 1)) <= 1e-12
        cf = convergence_factor(8.0)
        assert abs(cf - ((q - 1) / (q + 1)) ** 2) <= 1e-15
        assert abs(cf - rho ** -2) <= 1e-12
        assert cf == pytest.approx(0.06464, abs=1e-5)

    def test_kappa1(self):
        assert convergence_factor(1.0) == 0.0
        assert error_bound(3, 0.5, 1.0, 1.0, 1.0) == 0.0

    def test_invalid(self):
        with pytest.raises(DomainError):
            convergence_factor(0.5)
        with pytest.raises(DomainError):
            error_bound(0, 0.5, 4.0, 1.0, 1.0)

    @pytest.mark.parametrize("k", [1, 5, 30])
    def test_ratio_structure(self, k):
        kappa = 50.0
        r = error_bound(k + 1, 0.7, kappa, 3.0, 0.4) / error_bound(k, 0.7, kappa, 3.0, 0.4)
        assert r == pytest.approx(ellipse_radius(kappa) ** -2 * (k + 1) / k, rel=1e-12)

    def test_no_overflow(self):
        assert error_bound(500, 0.7, 1.5, 1.0, 1.0) >= 0.0

    def test_measured_below_bound(self):
        L = laplacian_1d(200)
        lam = L.eigenvalues()
        for k in range(3, 21):
            R = build_coeffs(k, 0.9, _opt(L))
            bound = error_bound(k, 0.9, L.condition_number, L.lambda_max, R.tau)
            assert spectral_error(R, lam) <= bound

    def test_per_step_ratio(self):
        L = laplacian_1d(200)
        lam = L.eigenvalues()
        cf = convergence_factor(L.condition_number)
        for beta in (0.6, 0.75, 0.9):
            errs = [spectral_error(build_coeffs(k, beta, _opt(L)), lam) for k in range(5, 16)]
            ratios = np.array(errs[1:]) / np.array(errs[:-1])
            assert np.all(ratios <= 1.1 * cf)

    def test_alpha_insensitive(self):
        L = laplacian_1d(200)
        lam = L.eigenvalues()
        errs = [spectral_error(build_coeffs(10, a / 2, _opt(L)), lam, relative=True)
                for a in (1.2, 1.5, 1.8)]
        assert max(errs) / min(errs) < 10.0

    def test_remark_values(self):
        for N in (100, 200, 400):
            kappa = laplacian_1d(N).condition_number
            direct = 1.0 / convergence_factor(kappa)
            assert remark_estimate(N) == pytest.approx(1 + 2 * math.pi / N, rel=1e-15)
            # ((1 + x) / (1 - x))**2 = 1 + 4x + 8x**2 + ... with x = kappa**-0.25,
            # and 4x ~ 2 sqrt(2 pi / (N + 1)), not 2 pi / N
            x = kappa ** -0.25
            assert direct == pytest.approx(1 + 4 * x + 8 * x ** 2, rel=0.02)
            assert 4 * x == pytest.approx(2 * math.sqrt(2 * math.pi / (N + 1)), rel=0.01)
            assert direct - 1 > 3 * (remark_estimate(N) - 1)


class TestEpsilonK:
    def test_closed_form(self):
        assert epsilon_k(build_coeffs(1, 0.5, 1.0), 4.0) == pytest.approx(0.4, rel=1e-13)

    def test_zero_at_tau(self):
        assert epsilon_k(build_coeffs(6, 0.8, 0.37), 0.37) <= 1e-15

    def test_geometric(self):
        L = laplacian_1d(200)
        eps = [epsilon_k(build_coeffs(k, 0.9, _opt(L)), L.lambda_min) for k in range(2, 30, 3)]
        assert all(b < a for a, b in zip(eps, eps[1:]))
        slope = np.polyfit(np.arange(len(eps)), np.log(eps), 1)[0]
        assert slope < -0.5


class TestSelectK:
    def test_infinite_tolerance(self):
        assert select_k(laplacian_1d(50), 0.9, math.inf) == 1

    def test_monotone(self):
        L = laplacian_1d(200)
        ks = [select_k(L, 0.9, tol) for tol in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)]
        assert ks == sorted(ks)
        k = ks[3]
        tau = _opt(L)
        assert epsilon_k(build_coeffs(k, 0.9, tau), L.lambda_min) <= 1e-6
        assert epsilon_k(build_coeffs(k - 1, 0.9, tau), L.lambda_min) > 1e-6

    def test_2d_consistent(self):
        L = laplacian_2d(20)
        k = select_k(L, 0.75, 1e-4)
        eps = [epsilon_k(build_coeffs(j, 0.75, _opt(L)), L.lambda_min) for j in range(1, k + 1)]
        assert eps[-1] <= 1e-4 and all(e > 1e-4 for e in eps[:-1])

    def test_unreachable_warns(self):
        with pytest.warns(KSelectionWarning):
            assert select_k(laplacian_1d(200), 0.9, 1e-14, k_max=3) == 3

    def test_bad_tolerance(self):
        with pytest.raises(DomainError):
            select_k(laplacian_1d(10), 0.9, 0.0)
