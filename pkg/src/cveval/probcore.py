"""Numerical kernel: stable log-space reductions, log-densities, samplers,
small-matrix linear algebra, and the special functions the evaluators need.

All functions are pure; samplers take an explicit RngStream. Array arguments
broadcast in the usual numpy way, so the same code serves scalar calls in
tests and (draws,) or (chains, units) batches in the samplers/evaluators.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sp
from scipy.linalg import solve_triangular

from .errors import DecompositionError, NumericalError
from .rng import RngStream

__all__ = [
    "log_sum_exp",
    "sample_variance",
    "SymMatrix",
    "normal_logpdf",
    "poisson_logpmf",
    "binomial_logpmf",
    "invgamma_logpdf",
    "dirichlet_logpdf",
    "mvn_logpdf",
    "normal_draw",
    "invgamma_draw",
    "dirichlet_draw",
    "categorical_draw",
    "categorical_from_logits",
    "truncnorm_draw",
    "cholesky",
    "sym_eigenvalues",
    "student_t_cdf",
    "binomial_midp_tail",
]

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# log-space reductions


def log_sum_exp(xs, axis=None):
    """log(sum(exp(xs))), computed in the shifted representation.

    Entries may be finite or -inf; an all--inf reduction returns -inf.
    Empty input is an error rather than -inf so that silent zero-length
    reductions cannot masquerade as impossible events.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("log_sum_exp of empty input")
    with np.errstate(divide="ignore"):
        out = sp.logsumexp(xs, axis=axis)
    return out


def sample_variance(xs, axis=None):
    """Variance with the S-1 denominator (the convention used by every
    variance-penalty term in this package)."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size if axis is None else xs.shape[axis]
    if n < 2:
        raise ValueError("sample_variance needs at least 2 values")
    return np.var(xs, axis=axis, ddof=1)


# ---------------------------------------------------------------------------
# symmetric matrices


class SymMatrix:
    """A symmetric real matrix; the canonical store is the lower triangle."""

    def __init__(self, full):
        a = np.asarray(full, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("SymMatrix requires a square matrix")
        if a.shape[0] < 1:
            raise ValueError("SymMatrix dimension must be >= 1")
        scale = np.max(np.abs(a)) or 1.0
        if np.max(np.abs(a - a.T)) > 1e-8 * scale:
            raise ValueError("matrix is not symmetric")
        self.full = (a + a.T) / 2.0
        self.n = a.shape[0]

    @classmethod
    def from_lower(cls, n: int, entries) -> "SymMatrix":
        """Build from the row-major lower triangle (diagonal included)."""
        entries = np.asarray(entries, dtype=float)
        if entries.size != n * (n + 1) // 2:
            raise ValueError("lower triangle of an n x n matrix needs n(n+1)/2 entries")
        a = np.zeros((n, n))
        a[np.tril_indices(n)] = entries
        a = a + np.tril(a, -1).T
        return cls(a)

    @property
    def lower(self) -> np.ndarray:
        return self.full[np.tril_indices(self.n)]

    def __repr__(self) -> str:  # pragma: no cover
        return f"SymMatrix(n={self.n})"


def _sym_full(a) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.full
    return SymMatrix(a).full


# ---------------------------------------------------------------------------
# log densities


def normal_logpdf(x, mean, var):
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0):
        raise ValueError("normal variance must be positive")
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def poisson_logpmf(y, rate):
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("Poisson rate must be positive")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("Poisson outcome must be a nonnegative integer")
    return sp.xlogy(y, rate) - rate - sp.gammaln(y + 1.0)


def binomial_logpmf(r, n, p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("binomial probability must lie in [0, 1]")
    r = np.asarray(r, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(r < 0) or np.any(r > n) or np.any(r != np.floor(r)):
        raise ValueError("binomial count must be an integer in [0, n]")
    comb = sp.gammaln(n + 1.0) - sp.gammaln(r + 1.0) - sp.gammaln(n - r + 1.0)
    return comb + sp.xlogy(r, p) + sp.xlog1py(n - r, -p)


def invgamma_logpdf(x, shape, scale):
    # Density proportional to x^-(shape+1) * exp(-scale/x).
    if np.any(np.asarray(shape, dtype=float) <= 0) or np.any(np.asarray(scale, dtype=float) <= 0):
        raise ValueError("inverse-gamma shape and scale must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("inverse-gamma support is x > 0")
    return shape * np.log(scale) - sp.gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


def dirichlet_logpdf(p, alpha):
    p = np.asarray(p, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("Dirichlet concentration must be positive")
    if np.any(p <= 0) or abs(p.sum(-1) - 1.0).max() > 1e-8:
        raise ValueError("Dirichlet argument must lie in the open simplex")
    lognorm = sp.gammaln(alpha).sum(-1) - sp.gammaln(alpha.sum(-1))
    return np.sum((alpha - 1.0) * np.log(p), axis=-1) - lognorm


def mvn_logpdf(x, mean, cov=None, prec=None):
    """Multivariate normal log density via Cholesky of the covariance or,
    alternatively, of the precision matrix."""
    if (cov is None) == (prec is None):
        raise ValueError("give exactly one of cov or prec")
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    d = x - mean
    n = d.shape[-1]
    if cov is not None:
        low = cholesky(cov)
        z = solve_triangular(low, d, lower=True)
        logdet_cov = 2.0 * np.sum(np.log(np.diag(low)))
        return -0.5 * (n * _LOG_2PI + logdet_cov + z @ z)
    low = cholesky(prec)
    logdet_prec = 2.0 * np.sum(np.log(np.diag(low)))
    quad = d @ (_sym_full(prec) @ d)
    return -0.5 * (n * _LOG_2PI - logdet_prec + quad)


# ---------------------------------------------------------------------------
# samplers


def normal_draw(rng: RngStream, mean, sd, size=None):
    sd = np.asarray(sd, dtype=float)
    if np.any(sd <= 0):
        raise ValueError("normal sd must be positive")
    return mean + sd * rng.gen.standard_normal(size if size is not None else np.broadcast(mean, sd).shape)


def invgamma_draw(rng: RngStream, shape, scale, size=None):
    if np.any(np.asarray(shape, dtype=float) <= 0) or np.any(np.asarray(scale, dtype=float) <= 0):
        raise ValueError("inverse-gamma shape and scale must be positive")
    if size is None:
        # one draw per element of the broadcast parameters, not one shared
        # variate rescaled across them
        size = np.broadcast(np.asarray(shape), np.asarray(scale)).shape
    g = rng.gen.standard_gamma(shape, size=size)
    return scale / g


def dirichlet_draw(rng: RngStream, alpha):
    """One Dirichlet draw per row of alpha (batched along leading axes)."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("Dirichlet concentration must be positive")
    g = rng.gen.standard_gamma(alpha)
    return g / g.sum(-1, keepdims=True)


def categorical_from_logits(rng: RngStream, logits):
    """Argmax-of-Gumbel categorical draws; last axis indexes categories.

    Categories with logit -inf are never drawn.
    """
    logits = np.asarray(logits, dtype=float)
    gum = rng.gen.gumbel(size=logits.shape)
    with np.errstate(invalid="ignore"):
        return np.argmax(logits + gum, axis=-1)


def categorical_draw(rng: RngStream, p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("categorical probabilities must be nonnegative")
    tot = p.sum(-1)
    if np.any(np.abs(tot - 1.0) > 1e-8):
        raise ValueError("categorical probabilities must sum to 1")
    with np.errstate(divide="ignore"):
        return categorical_from_logits(rng, np.log(p))


def truncnorm_draw(rng: RngStream, mean, sd, lo, hi, size=None):
    """Normal(mean, sd^2) conditioned on [lo, hi], by inverse CDF."""
    sd = np.asarray(sd, dtype=float)
    if np.any(sd <= 0):
        raise ValueError("normal sd must be positive")
    a = sp.ndtr((np.asarray(lo, dtype=float) - mean) / sd)
    b = sp.ndtr((np.asarray(hi, dtype=float) - mean) / sd)
    if np.any(b <= a):
        raise ValueError("empty truncation interval")
    u = rng.gen.uniform(size=size if size is not None else np.broadcast(mean, sd).shape)
    return mean + sd * sp.ndtri(a + u * (b - a))


# ---------------------------------------------------------------------------
# linear algebra (dense, n up to a few hundred)


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with L L' = A; raises naming the failing pivot."""
    A = _sym_full(a)
    n = A.shape[0]
    low = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - low[j, :j] @ low[j, :j]
        if not np.isfinite(d) or d <= 0.0:
            raise DecompositionError(
                f"matrix is not positive definite (pivot {j} is {d:.6g})", pivot=j
            )
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (A[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def sym_eigenvalues(a) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending."""
    A = _sym_full(a)
    try:
        return np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK rarely fails
        raise NumericalError(f"symmetric eigensolve did not converge: {e}") from e


# ---------------------------------------------------------------------------
# special functions


def student_t_cdf(t, df):
    """CDF of Student's t via the regularized incomplete beta function."""
    df = np.asarray(df, dtype=float)
    if np.any(df <= 0):
        raise ValueError("degrees of freedom must be positive")
    t = np.asarray(t, dtype=float)
    x = df / (df + t**2)
    tail = 0.5 * sp.betainc(df / 2.0, 0.5, x)
    return np.where(t > 0, 1.0 - tail, tail)[()]


def binomial_midp_tail(r_obs, n, p, lower=False):
    """Mid-p tail probability Pr(y > r) + 0.5 Pr(y = r) for y ~ Binomial(n, p).

    With lower=True returns the complementary convention
    Pr(y < r) + 0.5 Pr(y = r); the two sum to 1.
    """
    r = np.asarray(r_obs)
    nn = np.asarray(n)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("binomial probability must lie in [0, 1]")
    if np.any(r < 0) or np.any(r > nn):
        raise ValueError("observed count must lie in [0, n]")
    r = np.asarray(r, dtype=float)
    nn = np.asarray(nn, dtype=float)
    half_pmf = 0.5 * np.exp(binomial_logpmf(r, nn, p))
    if not lower:
        # Pr(y >= r+1) as a regularized incomplete beta; 0 when r = n.
        strict = np.where(r < nn, sp.betainc(r + 1.0, np.maximum(nn - r, 1.0), p), 0.0)
    else:
        # Pr(y <= r-1); 0 when r = 0.
        strict = np.where(r > 0, 1.0 - sp.betainc(np.maximum(r, 1.0), nn - r + 1.0, p), 0.0)
    return (strict + half_pmf)[()]
