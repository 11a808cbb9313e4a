"""One-dimensional theory lab: closed forms, MC oracles, gradient flow.

The closed-form error curve was frozen only after MC verification; here we
keep both tied together permanently, plus the flow integrator as a third
independent route to the same numbers.
"""

import math

import numpy as np
import pytest

from volumize import (
    ConfigError,
    NoiseSpec,
    SeededRng,
    TeacherStudentProblem,
    alpha_for_weight_decay,
    cauchy_comparison,
    clip_error_closed_form,
    clip_error_mc,
    closed_form_curve,
    flow_curve,
    gradient_flow_sim,
    mc_curve,
    optimal_volume,
    stable_hash,
    weight_decay_error_mc,
    weight_decay_optimum,
)
from volumize.errors import DomainError
from volumize.linalg import sample_cauchy
from volumize.theory import unregularized_prefix_errors


def problem(dim=1, a=1.0, sigma=0.5, kind="uniform"):
    return TeacherStudentProblem(dim=dim, a=a, noise=NoiseSpec(kind, sigma))


class TestClosedForm:
    def test_zero_volume_kills_everything(self):
        # student pinned at 0: error is E[u^2] = a^2/3
        assert clip_error_closed_form(2.0, 0.5, 0.0) == pytest.approx(4.0 / 3.0)

    def test_flat_beyond_support_edge(self):
        for vol in (1.5, 2.0, 10.0):
            assert clip_error_closed_form(1.0, 0.5, vol) == 0.25 / 3.0

    def test_continuous_at_knots(self):
        a, sigma = 1.3, 0.4
        for knot in (a - sigma, a + sigma):
            below = clip_error_closed_form(a, sigma, knot - 1e-9)
            above = clip_error_closed_form(a, sigma, knot + 1e-9)
            assert below == pytest.approx(above, abs=1e-7)

    def test_noise_free_limit(self):
        # sigma=0: clipping costs (a-V)^3/(3a) until V reaches a, then zero
        assert clip_error_closed_form(1.0, 0.0, 0.25) == pytest.approx(
            0.75**3 / 3.0
        )
        assert clip_error_closed_form(1.0, 0.0, 1.0) == 0.0

    def test_optimum_location_and_value(self):
        vol, err = optimal_volume(1.0, 1.0)
        assert vol == pytest.approx(0.5)
        assert err == pytest.approx(37.0 / 192.0)
        # interior stationary point of the middle branch
        h = 1e-6
        d = (
            clip_error_closed_form(1.0, 1.0, vol + h)
            - clip_error_closed_form(1.0, 1.0, vol - h)
        ) / (2 * h)
        assert abs(d) < 1e-9

    def test_optimum_beats_neighbors_generic(self):
        a, sigma = 1.7, 0.6
        vol, err = optimal_volume(a, sigma)
        assert clip_error_closed_form(a, sigma, vol) == pytest.approx(err, rel=1e-12)
        for other in (vol - 0.1, vol + 0.1, 0.0, a + sigma):
            assert err < clip_error_closed_form(a, sigma, other)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            clip_error_closed_form(-1.0, 0.5, 1.0)
        with pytest.raises(DomainError):
            clip_error_closed_form(1.0, 1.5, 1.0)  # sigma > a
        with pytest.raises(DomainError):
            clip_error_closed_form(1.0, 0.5, -0.1)


class TestClipMc:
    def test_matches_closed_form_within_stderr(self):
        p = problem(sigma=0.5)
        for vol in (0.0, 0.3, 0.75, 1.2, 1.4):
            est = clip_error_mc(p, vol, SeededRng(stable_hash("mc", str(vol))), 200000)
            want = clip_error_closed_form(1.0, 0.5, vol)
            assert abs(est.value - want) < 4 * est.stderr + 1e-12

    def test_control_variate_exact_beyond_support(self):
        p = problem(sigma=0.5)
        est = clip_error_mc(p, 1.6, SeededRng(0), 10000, control_variate=True)
        assert est.value == 0.25 / 3.0
        assert est.stderr == 0.0

    def test_control_variate_shrinks_stderr(self):
        p = problem(sigma=0.5)
        plain = clip_error_mc(p, 1.4, SeededRng(1), 100000, control_variate=False)
        cv = clip_error_mc(p, 1.4, SeededRng(1), 100000, control_variate=True)
        assert cv.stderr < 0.2 * plain.stderr

    def test_deterministic_given_seed(self):
        p = problem(sigma=0.5)
        a = clip_error_mc(p, 0.8, SeededRng(7), 50000)
        b = clip_error_mc(p, 0.8, SeededRng(7), 50000)
        assert a.value == b.value and a.stderr == b.stderr

    def test_custom_correlation_rejected(self):
        p = TeacherStudentProblem(
            dim=2, a=1.0, noise=NoiseSpec("uniform", 0.5), correlation=np.eye(2)
        )
        with pytest.raises(ConfigError):
            clip_error_mc(p, 0.5, SeededRng(0), 1000)

    def test_cauchy_noise_needs_plain_estimator(self):
        p = problem(sigma=1.0, kind="cauchy")
        with pytest.raises(ConfigError):
            clip_error_mc(p, 0.5, SeededRng(0), 1000, control_variate=True)
        est = clip_error_mc(p, 0.5, SeededRng(0), 10000, control_variate=False)
        assert np.isfinite(est.value)


class TestWeightDecay:
    def test_mc_matches_shrinkage_formula(self):
        a, sigma = 1.0, 0.5
        for lam in (0.0, 0.25, 1.0):
            est = weight_decay_error_mc(a, sigma, lam, SeededRng(stable_hash("wd", str(lam))), 200000)
            want = (sigma**2 + lam**2 * a**2) / (3.0 * (1.0 + lam) ** 2)
            assert abs(est.value - want) < 4 * est.stderr

    def test_optimum_formula(self):
        lam, err = weight_decay_optimum(1.0, 1.0)
        assert lam == pytest.approx(1.0)
        assert err == pytest.approx(1.0 / 6.0)

    def test_optimum_is_a_minimum(self):
        a, sigma = 1.2, 0.7
        lam, err = weight_decay_optimum(a, sigma)
        f = lambda l: (sigma**2 + l**2 * a**2) / (3.0 * (1.0 + l) ** 2)
        assert err == pytest.approx(f(lam), rel=1e-12)
        assert f(lam) < f(lam * 0.9) and f(lam) < f(lam * 1.1)


class TestGradientFlow:
    def test_alpha0_flow_recovers_clip_error(self):
        p = problem(dim=50000, sigma=0.5)
        res = gradient_flow_sim(p, 0.75, 0.0, SeededRng(21))
        assert res.converged
        want = clip_error_closed_form(1.0, 0.5, 0.75)
        # flow error is an MC average over dim coordinates
        se = 0.5 / math.sqrt(p.dim)
        assert abs(res.error - want) < 4 * se

    def test_alpha1_flow_is_unregularized(self):
        p = problem(dim=20000, sigma=0.5)
        res = gradient_flow_sim(p, 0.2, 1.0, SeededRng(22))
        assert res.converged
        np.testing.assert_allclose(res.w, res.u_prime, atol=1e-8)

    def test_weight_decay_alpha_mapping_hits_shrinkage_fixed_point(self):
        lam, step = 0.7, 0.1
        alpha = alpha_for_weight_decay(lam, step)
        p = problem(dim=5000, sigma=0.5)
        res = gradient_flow_sim(p, 0.0, alpha, SeededRng(23), step=step)
        assert res.converged
        np.testing.assert_allclose(res.w, res.u_prime / (1.0 + lam), atol=1e-7)

    def test_mapping_is_step_invariant(self):
        # the fixed point must not depend on the integrator step
        lam = 0.5
        p = problem(dim=500, sigma=0.5)
        res_a = gradient_flow_sim(
            p, 0.0, alpha_for_weight_decay(lam, 0.1), SeededRng(24), step=0.1
        )
        res_b = gradient_flow_sim(
            p, 0.0, alpha_for_weight_decay(lam, 0.37), SeededRng(24), step=0.37
        )
        np.testing.assert_allclose(res_a.w, res_b.w, atol=1e-7)

    def test_identity_and_explicit_identity_matrix_agree(self):
        p_fast = problem(dim=40, sigma=0.5)
        p_mat = TeacherStudentProblem(
            dim=40, a=1.0, noise=NoiseSpec("uniform", 0.5), correlation=np.eye(40)
        )
        fast = gradient_flow_sim(p_fast, 0.6, 0.3, SeededRng(25), step=0.05)
        slow = gradient_flow_sim(p_mat, 0.6, 0.3, SeededRng(25), step=0.05)
        np.testing.assert_allclose(fast.w, slow.w, atol=1e-8)
        assert fast.converged and slow.converged

    def test_non_spd_correlation_rejected(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1
        p = TeacherStudentProblem(
            dim=2, a=1.0, noise=NoiseSpec("uniform", 0.5), correlation=bad
        )
        with pytest.raises(DomainError):
            gradient_flow_sim(p, 0.5, 0.0, SeededRng(26))

    def test_oversized_step_rejected(self):
        p = problem(dim=10, sigma=0.5)
        with pytest.raises(DomainError):
            gradient_flow_sim(p, 0.5, 0.0, SeededRng(27), step=3.0)


class TestCurves:
    def test_closed_form_curve_matches_pointwise(self):
        vols = [0.0, 0.5, 1.0, 1.5]
        curve = closed_form_curve(1.0, 0.5, vols)
        assert curve.method == "closed_form"
        for v, e in zip(curve.vols, curve.errors):
            assert e == clip_error_closed_form(1.0, 0.5, v)
        assert all(s == 0.0 for s in curve.stderrs)

    def test_mc_curve_reproducible_and_tight(self):
        vols = [0.3, 0.8, 1.3]
        c1 = mc_curve(1.0, 0.5, vols, seed=5, n_samples=50000)
        c2 = mc_curve(1.0, 0.5, vols, seed=5, n_samples=50000)
        np.testing.assert_array_equal(c1.errors, c2.errors)
        for v, e, s in zip(c1.vols, c1.errors, c1.stderrs):
            assert abs(e - clip_error_closed_form(1.0, 0.5, v)) < 4 * s + 1e-12

    def test_flow_curve_argmin_near_theory(self):
        vols = np.round(np.arange(0.3, 1.2001, 0.05), 10).tolist()
        curve = flow_curve(1.0, 0.5, vols, seed=6, dim=200000)
        want, _ = optimal_volume(1.0, 0.5)
        assert abs(curve.argmin_vol() - want) <= 0.05 + 1e-12

    def test_curve_rows_round_trip(self):
        curve = closed_form_curve(1.0, 0.5, [0.5])
        (row,) = list(curve.rows())
        assert row["method"] == "closed_form"
        assert float(row["V"]) == 0.5


class TestCauchy:
    def test_prefix_estimates_share_one_stream(self):
        rng = SeededRng(9)
        ests = unregularized_prefix_errors(rng, 1.0, [100, 1000])
        eta = sample_cauchy(SeededRng(9), 1.0, 1000)
        sq = eta * eta
        assert ests[0] == pytest.approx(sq[:100].mean(), rel=1e-12)
        assert ests[1] == pytest.approx(sq.mean(), rel=1e-12)

    def test_comparison_table_properties(self):
        table = cauchy_comparison(n_samples=10**5, seed=3)
        best = table.best_volumization()
        constant = [r for r in table.rows if r.method == "weight_decay"]
        unreg = sorted(
            (r for r in table.rows if r.method == "unregularized"),
            key=lambda r: r.n_samples,
        )
        assert best.error < 1.0 / 3.0  # walls beat the constant student
        assert constant and constant[0].error == pytest.approx(1.0 / 3.0)
        assert unreg[-1].error > unreg[0].error  # heavy tail: estimate grows
        assert unreg[-1].error > 10 * best.error

    def test_rows_carry_metadata(self):
        table = cauchy_comparison(n_samples=10**4, seed=4)
        for row in table.csv_rows():
            assert set(row) == {
                "method",
                "a",
                "sigma",
                "V",
                "error",
                "stderr",
                "n_samples",
                "seed",
            }
