"""Binomial logistic regression with a per-plate random intercept.

Germination counts r_i out of n_i seeds on plate i, with a 2x2 factorial
design (seed type x1, root extract x2):

  r_i ~ Binomial(n_i, p_i)
  logit(p_i) = a0 + a1 x1_i + a2 x2_i + a12 x1_i x2_i + b_i
  b_i ~ Normal(0, sigma2)

The b_i are the per-unit latents. Coefficients get diffuse normal priors,
sigma2 an inverse-gamma prior; sigma2 | b is conjugate, everything else is
random-walk Metropolis (the four coefficients one at a time, the 21 random
effects as one vectorized block since they are conditionally independent).
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
from scipy.special import expit

from .. import probcore as pc
from ..errors import ConfigError
from .base import LatentModel, align_draws, robbins_monro_update

__all__ = ["SeedsPriors", "SeedsModel", "seeds_simulate"]


def seeds_simulate(rng, x1, x2, n, coef=(-0.55, 0.1, 1.3, -0.8), sigma2=0.1):
    """Draw germination counts from the model at fixed parameters.
    Returns (r, b)."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    n = np.asarray(n, dtype=np.int64)
    b = np.sqrt(sigma2) * rng.gen.standard_normal(x1.shape[0])
    eta = coef[0] + coef[1] * x1 + coef[2] * x2 + coef[3] * x1 * x2 + b
    r = rng.gen.binomial(n, expit(eta))
    return r, b


@dataclass(frozen=True)
class SeedsPriors:
    coef_var: float = 1.0e6
    sigma2_shape: float = 0.001
    sigma2_scale: float = 0.001


class SeedsModel(LatentModel):
    has_midp = True

    def __init__(self, data, priors=None, r_draws=30):
        r = np.asarray(data.r, dtype=np.float64)
        n = np.asarray(data.n, dtype=np.float64)
        x1 = np.asarray(data.x1, dtype=np.float64)
        x2 = np.asarray(data.x2, dtype=np.float64)
        if not (r.shape == n.shape and r.shape[-1] == x1.shape[0] == x2.shape[0]):
            raise ConfigError("seeds columns must have matching lengths")
        self.r = r
        self.n = n
        self.design = np.column_stack([np.ones_like(x1), x1, x2, x1 * x2])  # (n, 4)
        self.priors = priors if priors is not None else SeedsPriors()
        self.r_draws = int(r_draws)
        self.n_units = r.shape[-1]
        self.theta_names = ["a0", "a1", "a2", "a12", "sigma2"]
        self.latent_names = [f"b{i}" for i in range(1, self.n_units + 1)]

    # -- state ------------------------------------------------------------

    def init_state(self, n_chains, rng):
        B, n = n_chains, self.n_units
        return {
            "a": 0.1 * rng.gen.standard_normal((B, 4)),
            "b": 0.1 * rng.gen.standard_normal((B, n)),
            "sigma2": np.full(B, 0.5),
            "log_scale_a": np.full((B, 4), np.log(0.2)),
            "log_scale_b": np.full((B, n), np.log(0.8)),
            "adapt_t": 0,
            "counters": {
                "a_accept": np.zeros((B, 4)),
                "a_try": 0,
                "b_accept": np.zeros((B, n)),
                "b_try": 0,
            },
        }

    def _loglik_terms(self, eta, r, n):
        # binomial log likelihood without the constant binomial coefficient
        return r * eta - n * np.logaddexp(0.0, eta)

    def sweep(self, state, rng, holdout=None, adapt=False):
        if adapt:
            state["adapt_t"] += 1
        B, n = state["b"].shape
        r = np.broadcast_to(self.r, (B, n))
        nn = np.broadcast_to(self.n, (B, n))
        pri = self.priors
        scalar_h = holdout is None or np.isscalar(holdout)
        rows = None if scalar_h else np.arange(B)
        counters = state["counters"]

        def masked_ll(eta_mat):
            # summed likelihood terms with the held-out plate (shared or
            # per-chain) removed
            terms = self._loglik_terms(eta_mat, r, nn)
            if holdout is not None:
                if scalar_h:
                    terms[:, holdout] = 0.0
                else:
                    terms[rows, holdout] = 0.0
            return terms.sum(axis=1)

        # Random effects: conditionally independent given the coefficients,
        # one vectorized Metropolis step over all plates.
        a, b, sigma2 = state["a"], state["b"], state["sigma2"]
        lin = a @ self.design.T  # (B, n)
        step = np.exp(state["log_scale_b"])
        prop = b + step * rng.gen.standard_normal((B, n))
        dlik = self._loglik_terms(lin + prop, r, nn) - self._loglik_terms(lin + b, r, nn)
        if holdout is not None:
            if scalar_h:
                dlik[:, holdout] = 0.0
            else:
                dlik[rows, holdout] = 0.0
        dpri = (b**2 - prop**2) / (2.0 * sigma2[:, None])
        accept = np.log(rng.gen.uniform(size=(B, n))) < dlik + dpri
        state["b"] = b = np.where(accept, prop, b)
        counters["b_accept"] += accept
        counters["b_try"] += 1
        if adapt:
            robbins_monro_update(state["log_scale_b"], accept, state["adapt_t"])
        if holdout is not None:
            # exact conditional-prior draw for the held-out plate
            fresh = np.sqrt(sigma2) * rng.gen.standard_normal(B)
            if scalar_h:
                b[:, holdout] = fresh
            else:
                b[rows, holdout] = fresh

        # Coefficients one at a time (they are strongly coupled through the
        # likelihood, but scalar random walks mix acceptably here).
        eta = a @ self.design.T + b
        ll_cur = masked_ll(eta)
        for j in range(4):
            col = self.design[:, j]
            step_j = np.exp(state["log_scale_a"][:, j])
            prop_j = a[:, j] + step_j * rng.gen.standard_normal(B)
            eta_prop = eta + (prop_j - a[:, j])[:, None] * col
            ll_prop = masked_ll(eta_prop)
            dpri = (a[:, j] ** 2 - prop_j**2) / (2.0 * pri.coef_var)
            accept = np.log(rng.gen.uniform(size=B)) < ll_prop - ll_cur + dpri
            a[:, j] = np.where(accept, prop_j, a[:, j])
            eta = np.where(accept[:, None], eta_prop, eta)
            ll_cur = np.where(accept, ll_prop, ll_cur)
            counters["a_accept"][:, j] += accept
            if adapt:
                state["log_scale_a"][:, j] = robbins_monro_update(
                    state["log_scale_a"][:, j], accept, state["adapt_t"]
                )
        counters["a_try"] += 1

        # Variance of the random effects: conjugate inverse-gamma. All
        # plates contribute; the held-out b_i is still part of the prior.
        state["sigma2"] = pc.invgamma_draw(
            rng,
            pri.sigma2_shape + 0.5 * n,
            pri.sigma2_scale + 0.5 * (b**2).sum(axis=1),
        )

    def state_rows(self, state):
        theta = np.concatenate([state["a"], state["sigma2"][:, None]], axis=1)
        return theta, state["b"].copy()

    # -- evaluation -------------------------------------------------------

    def theta_view(self, theta):
        return SimpleNamespace(a=theta[:, :4], sigma2=theta[:, 4])

    def _linpred(self, i, theta):
        return self.theta_view(theta).a @ self.design[i]

    def nonint_logpred(self, i, theta, b_i, y=None):
        b_i = np.asarray(b_i, dtype=np.float64)
        eta = align_draws(self._linpred(i, theta), b_i) + b_i
        r_i = self.r[..., i] if y is None else y
        return pc.binomial_logpmf(r_i, self.n[..., i], expit(eta))

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        R = self.r_draws if r_draws is None else int(r_draws)
        sd = np.sqrt(self.theta_view(theta).sigma2)
        draws = sd[:, None] * rng.gen.standard_normal((theta.shape[0], R))
        ld = self.nonint_logpred(i, theta, draws)
        return pc.log_sum_exp(ld, axis=-1) - np.log(R)

    def regen_latent(self, i, theta, latent, rng, size=None):
        sd = np.sqrt(self.theta_view(theta).sigma2)
        if size is None:
            return sd * rng.gen.standard_normal(sd.shape)
        return sd[:, None] * rng.gen.standard_normal((sd.shape[0], size))

    def eval_midp(self, i, theta, b_i):
        b_i = np.asarray(b_i, dtype=np.float64)
        eta = align_draws(self._linpred(i, theta), b_i) + b_i
        return pc.binomial_midp_tail(self.r[..., i], self.n[..., i], expit(eta))
