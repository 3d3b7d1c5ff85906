"""MML87 encoding-length primitives.

Message lengths are plain non-negative floats, always measured in bits
(log base 2); independent message parts add.  Fisher information
determinants follow the natural-log likelihood convention (they involve
trigamma values), which is the convention the bit-valued statement-length
formulas expect.

Functions broadcast over a leading batch axis where it makes sense:
`theta` arguments may be shaped (d,) or (batch, d) with matching
`counts_total` shaped () or (batch,).
"""

import numpy as np
from scipy.special import gammaln, polygamma

from .errors import DegenerateInputError, ParameterDomainError, PrecisionError
from .types import PROB_FLOOR, DirichletParams

LN2 = np.log(2.0)

# Optimal quantisation lattice constants for low dimensions; above d = 3
# the standard asymptotic approximation is used.  Any fixed convention
# cancels out of model comparisons made at a fixed dimension.
_LATTICE = {
    1: 1.0 / 12.0,
    2: 5.0 / (36.0 * np.sqrt(3.0)),
    3: 19.0 / (192.0 * 2.0 ** (1.0 / 3.0)),
}


def lattice_constant(d):
    """Quantisation constant c_d for d free parameters."""
    if d < 1:
        raise ParameterDomainError(f"lattice constant undefined for d={d}")
    if d in _LATTICE:
        return _LATTICE[d]
    return (np.pi * d) ** (1.0 / d) / (2.0 * np.pi * np.e)


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterDomainError("log_gamma requires x > 0")
    out = gammaln(x)
    return float(out) if out.ndim == 0 else out


def trigamma(x):
    """psi'(x), the first polygamma function, for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterDomainError("trigamma requires x > 0")
    out = polygamma(1, x)
    return float(out) if out.ndim == 0 else out


def _alpha_vector(alpha):
    if isinstance(alpha, DirichletParams):
        return alpha.alpha
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ParameterDomainError("all Dirichlet parameters must be > 0")
    return alpha


def _log2_softplus(x):
    """log2(1 + 2**x), stable for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 50.0, x, np.log1p(np.exp2(np.minimum(x, 50.0))) / LN2)
    return float(out) if out.ndim == 0 else out


def mml_multinomial_estimate(counts, alpha):
    """MML87 point estimate of multinomial probabilities under a Dirichlet
    prior: theta_i = (n_i + a_i - 1/2) / (sum_j (n_j + a_j) - d/2).

    Components that fall at or below the probability floor are clamped and
    the vector renormalised, keeping downstream log terms finite.
    """
    alpha = _alpha_vector(alpha)
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ParameterDomainError("counts must be non-negative")
    d = alpha.size
    denom = (counts + alpha).sum(axis=-1) - 0.5 * d
    if np.any(denom <= 0):
        raise DegenerateInputError(
            "sum(counts) + sum(alpha) - d/2 must be > 0 for the MML estimate"
        )
    theta = (counts + alpha - 0.5) / np.expand_dims(denom, -1)
    if np.any(theta < PROB_FLOOR):
        theta = np.maximum(theta, PROB_FLOOR)
        theta = theta / theta.sum(axis=-1, keepdims=True)
    return theta


def dirichlet_log_density(theta, alpha):
    """log2 of the Dirichlet density Dir(theta; alpha).

    theta must be strictly interior to the simplex.
    """
    alpha = _alpha_vector(alpha)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta >= 1):
        raise ParameterDomainError("theta must be strictly interior to the simplex")
    log_beta = gammaln(alpha).sum() - gammaln(alpha.sum())
    out = (-log_beta + ((alpha - 1.0) * np.log(theta)).sum(axis=-1)) / LN2
    return float(out) if np.ndim(out) == 0 else out


def dirichlet_fisher_det(alpha, n):
    """Determinant of the expected Fisher information of Dirichlet
    parameters over n samples:

        n^d * prod_i psi'(a_i) * (1 - psi'(kappa) * sum_i 1/psi'(a_i))

    Positive for any valid alpha; a non-positive value indicates loss of
    precision in the bracketed cancellation and is reported as an error.
    """
    alpha = _alpha_vector(alpha)
    if n < 1:
        raise ParameterDomainError(f"sample count must be >= 1, got {n}")
    tg = polygamma(1, alpha)
    bracket = 1.0 - polygamma(1, alpha.sum()) * (1.0 / tg).sum()
    det = float(n) ** alpha.size * np.prod(tg) * bracket
    if not np.isfinite(det) or det <= 0:
        raise PrecisionError(
            f"non-positive Dirichlet Fisher determinant {det!r} for alpha={alpha}, n={n}"
        )
    return float(det)


def multinomial_fisher_det(theta, total_count):
    """Expected Fisher determinant of a d-state multinomial with d-1 free
    parameters: total_count^(d-1) / (theta_1 * ... * theta_d)."""
    theta = np.asarray(theta, dtype=float)
    total_count = np.asarray(total_count, dtype=float)
    if np.any(theta <= 0):
        raise ParameterDomainError("theta components must be > 0")
    if np.any(total_count < 1):
        raise ParameterDomainError("total_count must be >= 1")
    d = theta.shape[-1]
    out = total_count ** (d - 1) / theta.prod(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def log2_alpha_prior(alpha):
    """log2 of the prior density on Dirichlet parameters, decomposed as
    h(kappa) * h(mean): the mean is uniform on the simplex and kappa has
    the heavy-tailed density g(y) = y^(d-1) / (1+y^2)^((d+1)/2)
    (normalised by 4/pi for d = 3)."""
    alpha = _alpha_vector(alpha)
    kappa = alpha.sum()
    if alpha.size == 2:
        return -0.5 + np.log2(kappa) - 1.5 * np.log2(1.0 + kappa**2)
    if alpha.size == 3:
        return (
            np.log2(2.0 / np.sqrt(3.0))
            + np.log2(4.0 / np.pi)
            + 2.0 * np.log2(kappa)
            - 2.0 * np.log2(1.0 + kappa**2)
        )
    raise ParameterDomainError(f"alpha prior defined for d in {{2, 3}}, got d={alpha.size}")


def msglen_alpha(alpha, n, state_kind):
    """Statement length (bits) of one state's Dirichlet parameters:

        1/2 * log2(1 + detFisher(alpha) * c_d^d / h(alpha)^2) + d/2

    with d = 2 for the match state and d = 3 for the insert state.
    """
    alpha = _alpha_vector(alpha)
    d = alpha.size
    expected = {"match": 2, "insert": 3}
    if state_kind not in expected:
        raise ParameterDomainError(f"state_kind must be 'match' or 'insert', got {state_kind!r}")
    if d != expected[state_kind]:
        raise ParameterDomainError(
            f"{state_kind}-state Dirichlet must have d={expected[state_kind]}, got d={d}"
        )
    det = dirichlet_fisher_det(alpha, n)
    x = np.log2(det) + d * np.log2(lattice_constant(d)) - 2.0 * log2_alpha_prior(alpha)
    return 0.5 * _log2_softplus(x) + 0.5 * d


def msglen_theta_given_alpha(theta, alpha, counts_total):
    """Statement length (bits) of a simplex vector under a Dirichlet prior,
    in the curved one-parameter-region form:

        1/2 * log2(1 + detFisher(theta) * c_(d-1)^(d-1) / Dir(theta; alpha)^2)
        + (d-1)/2

    With zero observations the Fisher term carries no precision cost and
    the constant floor (d-1)/2 is returned.
    """
    alpha = _alpha_vector(alpha)
    theta = np.asarray(theta, dtype=float)
    counts_total = np.asarray(counts_total, dtype=float)
    if np.any(counts_total < 0):
        raise ParameterDomainError("counts_total must be >= 0")
    d = theta.shape[-1]
    const = 0.5 * (d - 1)
    safe_n = np.maximum(counts_total, 1.0)
    log2_det = (d - 1) * np.log2(safe_n) - np.log2(theta).sum(axis=-1)
    log2_dir = dirichlet_log_density(theta, alpha)
    x = log2_det + (d - 1) * np.log2(lattice_constant(d - 1)) - 2.0 * log2_dir
    val = 0.5 * _log2_softplus(x) + const
    out = np.where(counts_total == 0, const, val)
    return float(out) if np.ndim(out) == 0 else out


def msglen_simplex_vector_uniform_prior(theta, counts_total):
    """Statement length (bits) of a simplex vector under the uniform
    Dirichlet prior (alpha = 1), in the additive form:

        -log2 Dir(theta; 1) + 1/2 log2 detFisher(theta)
        + (d-1)/2 * log2 c_(d-1) + (d-1)/2

    Used for the substitution-matrix columns and the indel multinomial.
    With zero observations the Fisher term is dropped; the result is
    floored at 0 bits (message lengths are non-negative).
    """
    theta = np.asarray(theta, dtype=float)
    counts_total = np.asarray(counts_total, dtype=float)
    if np.any(theta <= 0):
        raise ParameterDomainError("theta components must be > 0")
    if np.any(counts_total < 0):
        raise ParameterDomainError("counts_total must be >= 0")
    d = theta.shape[-1]
    # Dir(theta; 1) = Gamma(d) independent of theta.
    neg_log2_dir = -gammaln(d) / LN2
    safe_n = np.maximum(counts_total, 1.0)
    log2_det = (d - 1) * np.log2(safe_n) - np.log2(theta).sum(axis=-1)
    consts = 0.5 * (d - 1) * (np.log2(lattice_constant(d - 1)) + 1.0)
    val = neg_log2_dir + 0.5 * log2_det + consts
    val = np.where(counts_total == 0, neg_log2_dir + consts, val)
    out = np.maximum(val, 0.0)
    return float(out) if np.ndim(out) == 0 else out
