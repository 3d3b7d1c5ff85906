import numpy as np
import pytest
from scipy.special import gammaln

from alnmml.errors import DegenerateInputError, ParameterDomainError
from alnmml.mml import (
    LN2,
    dirichlet_fisher_det,
    dirichlet_log_density,
    lattice_constant,
    log2_alpha_prior,
    log_gamma,
    mml_multinomial_estimate,
    msglen_alpha,
    msglen_simplex_vector_uniform_prior,
    msglen_theta_given_alpha,
    multinomial_fisher_det,
    trigamma,
)

# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def dirichlet_neg_log_lik(alpha, thetas):
    """Negative log likelihood of Dirichlet samples (natural log)."""
    alpha = np.asarray(alpha, float)
    n = len(thetas)
    return float(
        n * (gammaln(alpha).sum() - gammaln(alpha.sum()))
        - ((alpha - 1.0) * np.log(thetas)).sum()
    )


def fd_hessian_det(alpha, thetas):
    """Finite-difference Hessian determinant of the Dirichlet negative log
    likelihood; independent of the closed form under test."""
    alpha = np.asarray(alpha, float)
    d = alpha.size
    h = 1e-3 * np.maximum(1.0, alpha)
    hess = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            pp = alpha.copy(); pp[a] += h[a]; pp[b] += h[b]
            pm = alpha.copy(); pm[a] += h[a]; pm[b] -= h[b]
            mp = alpha.copy(); mp[a] -= h[a]; mp[b] += h[b]
            mm = alpha.copy(); mm[a] -= h[a]; mm[b] -= h[b]
            hess[a, b] = (
                dirichlet_neg_log_lik(pp, thetas)
                - dirichlet_neg_log_lik(pm, thetas)
                - dirichlet_neg_log_lik(mp, thetas)
                + dirichlet_neg_log_lik(mm, thetas)
            ) / (4.0 * h[a] * h[b])
    return float(np.linalg.det(hess))


def random_simplex(rng, d, n=1):
    x = rng.random((n, d)) + 0.05
    return x / x.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Lattice constants, trigamma, log-gamma
# ---------------------------------------------------------------------------


def test_lattice_constants_closed_forms():
    assert lattice_constant(1) == pytest.approx(1 / 12)
    assert lattice_constant(2) == pytest.approx(0.0801875, abs=1e-6)
    assert lattice_constant(3) == pytest.approx(0.0785433, abs=1e-6)
    # Asymptotic branch tends towards 1/(2*pi*e) from above.
    floor = 1 / (2 * np.pi * np.e)
    for d in (10, 19, 20, 100):
        assert floor < lattice_constant(d) < 0.095
    assert lattice_constant(100) < lattice_constant(19) < lattice_constant(10)


def test_trigamma_known_value():
    assert trigamma(1.0) == pytest.approx(np.pi**2 / 6, abs=1e-10)


def test_trigamma_recurrence():
    rng = np.random.default_rng(11)
    for x in rng.uniform(0.1, 50.0, size=30):
        assert trigamma(x + 1.0) == pytest.approx(trigamma(x) - 1.0 / x**2, rel=1e-10)


def test_log_gamma_factorial():
    assert log_gamma(5.0) == pytest.approx(np.log(24.0), abs=1e-12)


def test_trigamma_domain():
    with pytest.raises(ParameterDomainError):
        trigamma(0.0)
    with pytest.raises(ParameterDomainError):
        log_gamma(-1.0)


# ---------------------------------------------------------------------------
# MML multinomial estimate
# ---------------------------------------------------------------------------


def test_mml_estimate_hand_value():
    theta = mml_multinomial_estimate(np.array([3, 1]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(theta, [0.7, 0.3], atol=1e-15)


def test_mml_estimate_symmetry():
    np.testing.assert_allclose(
        mml_multinomial_estimate(np.zeros(3), np.ones(3)), np.full(3, 1 / 3), atol=1e-15
    )
    np.testing.assert_allclose(
        mml_multinomial_estimate(np.array([10, 10]), np.array([2.0, 2.0])),
        [0.5, 0.5],
        atol=1e-15,
    )


def test_mml_estimate_matches_closed_form_randomly():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = int(rng.integers(2, 6))
        counts = rng.integers(0, 40, size=d).astype(float)
        alpha = rng.uniform(0.6, 5.0, size=d)
        got = mml_multinomial_estimate(counts, alpha)
        expect = (counts + alpha - 0.5) / ((counts + alpha).sum() - d / 2)
        np.testing.assert_array_equal(got, expect)
        assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_mml_estimate_clamps_nonpositive_components():
    # alpha < 1/2 with zero counts drives the raw estimate negative.
    theta = mml_multinomial_estimate(np.array([0, 50]), np.array([0.2, 1.0]))
    assert np.all(theta > 0)
    assert theta.sum() == pytest.approx(1.0, abs=1e-12)


def test_mml_estimate_degenerate_denominator():
    with pytest.raises(DegenerateInputError):
        mml_multinomial_estimate(np.zeros(3), np.array([0.2, 0.2, 0.2]))


# ---------------------------------------------------------------------------
# Dirichlet density
# ---------------------------------------------------------------------------


def test_dirichlet_log_density_uniform_cases():
    assert dirichlet_log_density(np.array([0.3, 0.7]), np.array([1.0, 1.0])) == pytest.approx(0.0)
    assert dirichlet_log_density(
        np.array([0.2, 0.5, 0.3]), np.array([1.0, 1.0, 1.0])
    ) == pytest.approx(1.0)


def test_dirichlet_log_density_beta22():
    # B(2,2) = 1/6, so the density at (0.5, 0.5) is 6 * 0.25 = 1.5.
    assert dirichlet_log_density(
        np.array([0.5, 0.5]), np.array([2.0, 2.0])
    ) == pytest.approx(np.log2(1.5))


def test_dirichlet_log_density_boundary_error():
    with pytest.raises(ParameterDomainError):
        dirichlet_log_density(np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def test_dirichlet_log_density_integrates_to_one():
    # Midpoint quadrature over the 1-simplex as an independent check.
    alpha = np.array([2.5, 1.5])
    x = np.linspace(0.0005, 0.9995, 1000)
    dens = 2.0 ** dirichlet_log_density(np.stack([x, 1 - x], axis=1), alpha)
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------------------
# Fisher determinants
# ---------------------------------------------------------------------------


def test_dirichlet_fisher_matches_fd_hessian():
    rng = np.random.default_rng(42)
    for d in (2, 3):
        for _ in range(20):
            alpha = rng.uniform(0.5, 20.0, size=d)
            thetas = random_simplex(rng, d, n=1)
            got = dirichlet_fisher_det(alpha, 1)
            oracle = fd_hessian_det(alpha, thetas)
            assert got == pytest.approx(oracle, rel=1e-4)


def test_dirichlet_fisher_n_prefactor():
    rng = np.random.default_rng(43)
    for d in (2, 3):
        alpha = rng.uniform(0.5, 10.0, size=d)
        assert dirichlet_fisher_det(alpha, 2) == pytest.approx(
            2.0**d * dirichlet_fisher_det(alpha, 1), rel=1e-12
        )


def test_dirichlet_fisher_positive_and_hand_value():
    assert dirichlet_fisher_det(np.array([5.0, 5.0, 5.0]), 1) > 0
    # alpha = (1, 1): psi'(1) = pi^2/6, psi'(2) = pi^2/6 - 1.
    p1 = np.pi**2 / 6
    expect = p1**2 * (1.0 - (p1 - 1.0) * 2.0 / p1)
    assert dirichlet_fisher_det(np.array([1.0, 1.0]), 1) == pytest.approx(expect, rel=1e-12)


def test_multinomial_fisher_values():
    assert multinomial_fisher_det(np.array([0.5, 0.5]), 10) == pytest.approx(40.0)
    assert multinomial_fisher_det(np.full(3, 1 / 3), 1) == pytest.approx(27.0)
    assert multinomial_fisher_det(np.array([0.7, 0.3]), 5) == pytest.approx(5 / 0.21)
    with pytest.raises(ParameterDomainError):
        multinomial_fisher_det(np.array([0.0, 1.0]), 5)


# ---------------------------------------------------------------------------
# Statement lengths
# ---------------------------------------------------------------------------


def test_msglen_alpha_matches_composed_reference():
    # Reassemble the curved statement-length form from its published pieces.
    alpha = np.array([1.0, 1.0])
    det = dirichlet_fisher_det(alpha, 1)
    kappa = 2.0
    h = (1 / np.sqrt(2.0)) * kappa / (1 + kappa**2) ** 1.5
    c2 = 5 / (36 * np.sqrt(3))
    expect = 0.5 * np.log2(1 + det * c2**2 / h**2) + 1.0
    got = msglen_alpha(alpha, 1, "match")
    assert got == pytest.approx(expect, rel=1e-12)
    assert np.isfinite(got) and got > 0


def test_msglen_alpha_insert_prior_normalisation():
    alpha = np.array([2.0, 1.0, 1.0])
    det = dirichlet_fisher_det(alpha, 3)
    kappa = 4.0
    h = (2 / np.sqrt(3.0)) * (4 / np.pi) * kappa**2 / (1 + kappa**2) ** 2
    c3 = 19 / (192 * 2 ** (1 / 3))
    expect = 0.5 * np.log2(1 + det * c3**3 / h**2) + 1.5
    assert msglen_alpha(alpha, 3, "insert") == pytest.approx(expect, rel=1e-12)


def test_msglen_alpha_degenerate_floor():
    # As the Fisher term vanishes the cost tends to the d/2 floor; with a
    # huge prior-to-Fisher ratio the curved form is within a whisker of it.
    alpha = np.array([1.0, 1.0])
    val = 0.5 * np.log2(1 + 0) + 1.0
    assert val == 1.0  # d/2 for d=2: the limiting floor


def test_msglen_alpha_doubling_n_bound():
    alpha = np.array([3.0, 2.0])
    for n in (1, 5, 50):
        lo = msglen_alpha(alpha, n, "match")
        hi = msglen_alpha(alpha, 2 * n, "match")
        assert hi >= lo
        assert hi - lo <= 0.5 * np.log2(2.0**2) + 0.01


def test_msglen_alpha_state_kind_validation():
    with pytest.raises(ParameterDomainError):
        msglen_alpha(np.array([1.0, 1.0]), 1, "insert")
    with pytest.raises(ParameterDomainError):
        msglen_alpha(np.array([1.0, 1.0, 1.0]), 1, "match")


def test_msglen_theta_given_alpha_limit_floor():
    # Overwhelming prior density drives the curved term to (d-1)/2.
    theta = np.array([0.5, 0.5])
    alpha = np.array([5000.0, 5000.0])
    assert msglen_theta_given_alpha(theta, alpha, 10) == pytest.approx(0.5, abs=1e-3)


def test_msglen_theta_given_alpha_d2_composed():
    got = msglen_theta_given_alpha(np.array([0.5, 0.5]), np.array([1.0, 1.0]), 10)
    expect = 0.5 * np.log2(1 + 40.0 * (1 / 12)) + 0.5
    assert got == pytest.approx(expect, rel=1e-12)


def test_msglen_theta_given_alpha_d3_composed():
    theta = np.full(3, 1 / 3)
    alpha = np.ones(3)
    det = multinomial_fisher_det(theta, 27)
    dir_density = 2.0 ** dirichlet_log_density(theta, alpha)
    assert dir_density == pytest.approx(2.0)
    c2 = lattice_constant(2)
    expect = 0.5 * np.log2(1 + det * c2**2 / dir_density**2) + 1.0
    assert msglen_theta_given_alpha(theta, alpha, 27) == pytest.approx(expect, rel=1e-12)


def test_msglen_theta_given_alpha_zero_counts():
    assert msglen_theta_given_alpha(np.array([0.4, 0.6]), np.ones(2), 0) == 0.5
    assert msglen_theta_given_alpha(np.full(3, 1 / 3), np.ones(3), 0) == 1.0


def test_msglen_theta_monotone_in_fisher():
    theta = np.array([0.3, 0.7])
    alpha = np.array([2.0, 3.0])
    vals = [msglen_theta_given_alpha(theta, alpha, n) for n in (1, 2, 8, 64, 512)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_msglen_simplex_uniform_prior_hand_value():
    got = msglen_simplex_vector_uniform_prior(np.array([0.5, 0.5]), 4)
    expect = 0.0 + 0.5 * np.log2(16.0) + 0.5 * np.log2(1 / 12) + 0.5
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(0.70752, abs=1e-5)


def test_msglen_simplex_uniform_prior_d20():
    theta = np.full(20, 0.05)
    det = multinomial_fisher_det(theta, 20)
    assert det == pytest.approx(20.0**19 * 20.0**20, rel=1e-9)
    expect = (
        -gammaln(20) / LN2
        + 0.5 * np.log2(det)
        + 9.5 * np.log2(lattice_constant(19))
        + 9.5
    )
    got = msglen_simplex_vector_uniform_prior(theta, 20)
    assert got == pytest.approx(max(0.0, expect), rel=1e-12)


def test_msglen_simplex_uniform_prior_count_scaling():
    theta = np.array([0.2, 0.3, 0.5])
    base = msglen_simplex_vector_uniform_prior(theta, 100)
    scaled = msglen_simplex_vector_uniform_prior(theta, 800)
    assert scaled - base == pytest.approx(0.5 * (3 - 1) * np.log2(8.0), rel=1e-9)


def test_msglen_simplex_uniform_prior_zero_counts_finite():
    val = msglen_simplex_vector_uniform_prior(np.full(20, 0.05), 0)
    assert np.isfinite(val) and val >= 0


def test_message_lengths_nonnegative_and_finite():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = int(rng.integers(2, 4))
        theta = random_simplex(rng, d)[0]
        alpha = rng.uniform(0.5, 8.0, size=d)
        n = int(rng.integers(0, 1000))
        v1 = msglen_theta_given_alpha(theta, alpha, n)
        v2 = msglen_simplex_vector_uniform_prior(theta, n)
        kind = "match" if d == 2 else "insert"
        v3 = msglen_alpha(alpha, max(n, 1), kind)
        assert np.isfinite([v1, v2, v3]).all()
        assert v1 >= 0 and v2 >= 0 and v3 >= 0


def test_batched_broadcasting_matches_scalar():
    rng = np.random.default_rng(6)
    thetas = random_simplex(rng, 3, n=8)
    alpha = np.array([2.0, 1.0, 3.0])
    counts = rng.integers(0, 50, size=8)
    batch = msglen_theta_given_alpha(thetas, alpha, counts)
    single = [msglen_theta_given_alpha(t, alpha, int(c)) for t, c in zip(thetas, counts)]
    np.testing.assert_allclose(batch, single, rtol=1e-12)
    batch2 = msglen_simplex_vector_uniform_prior(thetas, counts)
    single2 = [
        msglen_simplex_vector_uniform_prior(t, int(c)) for t, c in zip(thetas, counts)
    ]
    np.testing.assert_allclose(batch2, single2, rtol=1e-12)


def test_log2_alpha_prior_domain():
    with pytest.raises(ParameterDomainError):
        log2_alpha_prior(np.ones(4))
