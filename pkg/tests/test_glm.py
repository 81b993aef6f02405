import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpscore.errors import InvalidParameterError
from dpscore.glm import (
    LOGISTIC,
    GlmDataset,
    design_second_moment,
    family_by_name,
    fit_glm_mle,
    gaussian_linear,
    generate_glm,
    glm_gradient,
    glm_score,
    neg_log_likelihood,
    read_glm_csv,
    write_glm_csv,
)
from dpscore.mechanisms import SeededRng

from conftest import mean_se

FAMILIES = [LOGISTIC, gaussian_linear(1.0), gaussian_linear(0.5)]


def _central_diff(f, t, h=1e-5):
    return (f(t + h) - f(t - h)) / (2 * h)


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f"{f.name}-{f.dispersion}")
class TestFamily:
    def test_derivatives_match_finite_differences(self, family):
        t = np.random.default_rng(0).uniform(-10, 10, 100)
        d1 = _central_diff(family.psi, t)
        d2 = _central_diff(family.psi_prime, t)
        assert np.allclose(family.psi_prime(t), d1, rtol=1e-5, atol=1e-9)
        assert np.allclose(family.psi_double_prime(t), d2, rtol=1e-5, atol=1e-9)

    def test_bounds(self, family):
        t = np.random.default_rng(1).uniform(-50, 50, 10_000)
        assert np.all(np.abs(family.psi_prime(t)) <= family.psi_prime_bound)
        dd = family.psi_double_prime(t)
        assert np.all(dd >= 0) and np.all(dd <= family.psi_double_prime_bound)


def test_logistic_psi_is_overflow_safe():
    t = np.array([-1000.0, -40.0, 0.0, 40.0, 1000.0])
    vals = LOGISTIC.psi(t)
    assert np.all(np.isfinite(vals))
    assert vals[2] == pytest.approx(math.log(2))
    assert vals[-1] == pytest.approx(1000.0)
    assert np.allclose(vals, np.logaddexp(0, t), rtol=1e-14)


def test_family_lookup():
    assert family_by_name("logistic") is LOGISTIC
    assert family_by_name("gaussian", 2.0).dispersion == 4.0
    with pytest.raises(InvalidParameterError):
        family_by_name("poisson")


class TestDataset:
    def test_rejects_design_violation(self):
        with pytest.raises(InvalidParameterError):
            GlmDataset([[2.0, 0.0]], [1.0], "l2_scaled", 1.0)
        with pytest.raises(InvalidParameterError):
            GlmDataset([[1.5]], [1.0], "linf", 1.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            GlmDataset(np.zeros((3, 2)), np.zeros(2))

    def test_immutable(self):
        data = GlmDataset(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            data.X[0, 0] = 1.0

    def test_replace_row(self):
        data = GlmDataset(np.zeros((3, 2)), np.zeros(3))
        other = data.replace_row(1, [0.5, 0.5], 1.0)
        assert other.y[1] == 1.0 and data.y[1] == 0.0

    def test_csv_roundtrip(self, tmp_path, rng):
        data = generate_glm(50, 3, [0.5, -0.5, 0.1], LOGISTIC, rng)
        path = tmp_path / "d.csv"
        write_glm_csv(path, data)
        assert path.read_text().splitlines()[0] == "y,x_1,x_2,x_3"
        back = read_glm_csv(path)
        assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


class TestLikelihood:
    def test_logistic_at_zero_is_log2(self, rng):
        data = generate_glm(37, 4, np.zeros(4), LOGISTIC, rng)
        assert neg_log_likelihood(data, LOGISTIC, np.zeros(4)) == pytest.approx(math.log(2), abs=1e-15)

    def test_linear_arithmetic(self):
        data = GlmDataset([[1.0]], [2.0])
        assert neg_log_likelihood(data, gaussian_linear(), [1.0]) == pytest.approx(-1.5)

    def test_matches_reverse_order_sum(self, rng):
        data = generate_glm(500, 6, rng.generator.uniform(-1, 1, 6), LOGISTIC, rng.child(1))
        beta = rng.child(2).generator.normal(size=6)
        terms = [math.log1p(math.exp(float(x @ beta))) - float(y * (x @ beta)) for x, y in zip(data.X, data.y)]
        reference = sum(reversed(terms)) / data.n
        assert neg_log_likelihood(data, LOGISTIC, beta) == pytest.approx(reference, abs=1e-12)

    def test_dimension_mismatch(self):
        data = GlmDataset(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(InvalidParameterError):
            neg_log_likelihood(data, LOGISTIC, np.zeros(3))


class TestGradient:
    def test_single_datum_at_zero(self):
        x = np.array([0.3, -0.4])
        for y, R in [(1.0, math.inf), (0.0, 1.0)]:
            g = glm_gradient(GlmDataset([x], [y]), LOGISTIC, np.zeros(2), R)
            assert np.allclose(g, (0.5 - y) * x)

    def test_truncation_clips_response(self):
        data = GlmDataset([[1.0]], [10.0])
        g = glm_gradient(data, gaussian_linear(), [0.0], R=1.0)
        assert g[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = SeededRng(seed)
        gen = rng.generator
        d = int(gen.integers(1, 9))
        family = FAMILIES[seed % len(FAMILIES)]
        data = generate_glm(60, d, gen.uniform(-1, 1, d), family, rng.child(0))
        beta = gen.normal(size=d)
        g = glm_gradient(data, family, beta)
        fd = np.array(
            [_central_diff(lambda t: neg_log_likelihood(data, family, beta + t * e), 0.0, 1e-6) for e in np.eye(d)]
        )
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_rejects_nonpositive_R(self):
        with pytest.raises(InvalidParameterError):
            glm_gradient(GlmDataset([[1.0]], [1.0]), LOGISTIC, [0.0], R=0.0)


class TestScore:
    def test_logistic_at_zero(self):
        x = np.array([1.0, -2.0, 0.5])
        assert np.allclose(glm_score(LOGISTIC, x, 1.0, np.zeros(3)), 0.5 * x)

    def test_linear_with_dispersion(self):
        fam = gaussian_linear(2.0)
        x, y, beta = np.array([1.0, 2.0]), 3.0, np.array([0.5, 0.5])
        assert np.allclose(glm_score(fam, x, y, beta), (y - x @ beta) * x / 4.0)

    def test_vectorized_matches_rows(self, rng):
        data = generate_glm(10, 3, [0.2, 0.1, -0.3], LOGISTIC, rng)
        beta = np.array([0.1, 0.2, 0.3])
        stacked = glm_score(LOGISTIC, data.X, data.y, beta)
        rows = np.array([glm_score(LOGISTIC, x, y, beta) for x, y in zip(data.X, data.y)])
        assert np.allclose(stacked, rows)

    @pytest.mark.parametrize("family", FAMILIES[:2], ids=["logistic", "gaussian"])
    def test_mean_zero_at_truth(self, family):
        beta = np.array([0.5, -0.5, 1.0])
        data = generate_glm(100_000, 3, beta, family, SeededRng(9))
        scores = glm_score(family, data.X, data.y, beta)
        for j in range(3):
            m, se = mean_se(scores[:, j])
            assert abs(m) <= 4 * se

    def test_fisher_sandwich(self):
        beta = np.array([0.5, 0.5, 0.5, 0.5])
        data = generate_glm(50_000, 4, beta, LOGISTIC, SeededRng(10))
        S = glm_score(LOGISTIC, data.X, data.y, beta)
        cov = S.T @ S / data.n
        second = data.X.T @ data.X / data.n
        bound = LOGISTIC.psi_double_prime_bound / LOGISTIC.dispersion * np.linalg.eigvalsh(second)[-1]
        assert np.linalg.eigvalsh(cov)[-1] <= bound * 1.02


class TestGenerate:
    def test_logistic_null_mean(self):
        data = generate_glm(100_000, 2, np.zeros(2), LOGISTIC, SeededRng(3))
        assert data.y.mean() == pytest.approx(0.5, abs=0.005)

    @given(d=st.integers(1, 12), sigma_x=st.floats(0.1, 10), seed=st.integers(0, 2**32))
    @settings(max_examples=30, deadline=None)
    def test_l2_design_bound_holds(self, d, sigma_x, seed):
        data = generate_glm(200, d, np.zeros(d), LOGISTIC, SeededRng(seed), "l2_scaled", sigma_x)
        assert np.all(np.linalg.norm(data.X, axis=1) <= sigma_x * math.sqrt(d))

    def test_linf_design_bound_holds(self, rng):
        data = generate_glm(1000, 7, np.zeros(7), LOGISTIC, rng, "linf", 2.0)
        assert np.abs(data.X).max() <= 2.0

    def test_linear_noise_variance(self):
        beta = np.array([1.0, -1.0])
        data = generate_glm(100_000, 2, beta, gaussian_linear(1.0), SeededRng(4))
        assert np.var(data.y - data.X @ beta) == pytest.approx(1.0, rel=0.05)

    @pytest.mark.parametrize("kind,expected", [("l2_scaled", 4.0), ("linf", 4.0 / 3)])
    def test_second_moment(self, kind, expected):
        data = generate_glm(200_000, 3, np.zeros(3), LOGISTIC, SeededRng(5), kind, 2.0)
        emp = np.diag(data.X.T @ data.X / data.n)
        assert design_second_moment(kind, 2.0) == pytest.approx(expected)
        assert np.allclose(emp, expected, rtol=0.02)

    def test_reproducible(self):
        a = generate_glm(100, 3, np.ones(3) * 0.3, LOGISTIC, SeededRng(1, 2))
        b = generate_glm(100, 3, np.ones(3) * 0.3, LOGISTIC, SeededRng(1, 2))
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_mle_is_stationary(rng):
    data = generate_glm(3000, 4, np.full(4, 0.5), LOGISTIC, rng)
    beta = fit_glm_mle(data, LOGISTIC)
    assert np.linalg.norm(glm_gradient(data, LOGISTIC, beta)) < 1e-10
