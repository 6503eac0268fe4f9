"""Finite normal mixture with conjugate component updates.

Observation model: y_i | z_i = k ~ Normal(mu_k, var_k) with mixing weights
p = (p_1..p_K) and component labels z_i as the per-unit latent variables.
Priors: mu_k ~ Normal(prior mean, large variance), var_k inverse-gamma,
p ~ Dirichlet(alpha, ..., alpha). Every conditional is available in closed
form, so the sweep is pure Gibbs.

Label switching is left alone: all evaluation targets here (predictive
densities, information criteria, predictive checks) are invariant under
component relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .. import probcore as pc
from ..errors import ConfigError
from .base import LatentModel

__all__ = ["MixturePriors", "MixtureModel", "mixture_simulate"]


@dataclass(frozen=True)
class MixturePriors:
    mu_mean: float = 20.0
    mu_var: float = 1.0e4
    var_shape: float = 0.01
    var_scale: float = 0.2
    dir_alpha: float = 1.0


class MixtureModel(LatentModel):
    r_draws = None  # integrated predictive density is analytic
    has_midp = False

    def __init__(self, y, n_components, priors=None, max_occupancy_tries=100):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim < 1:
            raise ConfigError("y must be at least one-dimensional")
        n = y.shape[-1]
        if not 1 <= n_components <= n:
            raise ConfigError(
                f"n_components must be in [1, {n}], got {n_components}"
            )
        self.y = y
        self.K = int(n_components)
        self.priors = priors if priors is not None else MixturePriors()
        self.max_occupancy_tries = int(max_occupancy_tries)
        self.n_units = n
        ks = range(1, self.K + 1)
        self.theta_names = (
            [f"mu{k}" for k in ks] + [f"var{k}" for k in ks] + [f"p{k}" for k in ks]
        )
        self.latent_names = [f"z{i}" for i in range(1, n + 1)]

    # -- state ------------------------------------------------------------

    def init_state(self, n_chains, rng):
        B, n, K = n_chains, self.n_units, self.K
        # Random labels, redrawn until every component is occupied.
        z = rng.gen.integers(0, K, size=(B, n))
        for _ in range(self.max_occupancy_tries):
            counts = self._counts(z)
            bad = (counts == 0).any(axis=-1)
            if not bad.any():
                break
            z[bad] = rng.gen.integers(0, K, size=(int(bad.sum()), n))
        else:
            # Guaranteed occupancy: deal the first K units one label each.
            z[:, :K] = np.arange(K)
        y = np.broadcast_to(self.y, (B,) + self.y.shape[-1:])
        one_hot = z[..., None] == np.arange(K)
        counts = one_hot.sum(axis=1)
        sums = (one_hot * y[..., None]).sum(axis=1)
        mu = sums / counts
        var = ((one_hot * (y[..., None] - mu[:, None, :]) ** 2).sum(axis=1) + 1.0) / counts
        p = counts / n
        return {"mu": mu, "var": var, "p": p, "z": z}

    def _counts(self, z, skip=None):
        """Label counts per chain; skip masks one unit out, either the same
        for every chain (scalar) or one unit per chain (vector)."""
        one_hot = z[..., None] == np.arange(self.K)
        if skip is not None:
            one_hot = one_hot.copy()
            if np.isscalar(skip):
                one_hot[..., skip, :] = False
            else:
                one_hot[np.arange(one_hot.shape[0]), skip, :] = False
        return one_hot.sum(axis=-2)

    def sweep(self, state, rng, holdout=None, adapt=False):
        mu, var, p, z = state["mu"], state["var"], state["p"], state["z"]
        B, K = mu.shape
        n = self.n_units
        y = np.broadcast_to(self.y, (B, n))
        pri = self.priors
        scalar_h = holdout is None or np.isscalar(holdout)
        rows = None if scalar_h else np.arange(B)

        # Labels jointly, subject to every component keeping at least one
        # in-likelihood unit; chains violating the constraint redraw the
        # whole label vector, and keep the previous one after max tries.
        logw = np.log(p)[:, None, :] + pc.normal_logpdf(
            y[..., None], mu[:, None, :], var[:, None, :]
        )
        if holdout is not None:
            # Held-out unit: conditional prior only, no likelihood factor.
            if scalar_h:
                logw[:, holdout, :] = np.log(p)
            else:
                logw[rows, holdout, :] = np.log(p)
        z_new = pc.categorical_from_logits(rng, logw)
        todo = np.arange(B)

        def chunk_skip(idx):
            if scalar_h:
                return holdout
            return np.asarray(holdout)[idx]

        for _ in range(self.max_occupancy_tries):
            counts = self._counts(z_new[todo], skip=chunk_skip(todo))
            bad = todo[(counts == 0).any(axis=-1)]
            if bad.size == 0:
                break
            z_new[bad] = pc.categorical_from_logits(rng, logw[bad])
            todo = bad
        else:
            counts = self._counts(z_new[todo], skip=chunk_skip(todo))
            stuck = todo[(counts == 0).any(axis=-1)]
            z_new[stuck] = z[stuck]
        state["z"] = z = z_new

        one_hot = (z[..., None] == np.arange(K)).astype(np.float64)
        counts_all = one_hot.sum(axis=1)
        if holdout is not None:
            one_hot_lik = one_hot.copy()
            if scalar_h:
                one_hot_lik[:, holdout, :] = 0.0
            else:
                one_hot_lik[rows, holdout, :] = 0.0
        else:
            one_hot_lik = one_hot
        counts = one_hot_lik.sum(axis=1)
        sums = (one_hot_lik * y[..., None]).sum(axis=1)

        # Weights: the held-out label still enters the Dirichlet counts
        # (it is part of the latent structure, not of the likelihood).
        state["p"] = pc.dirichlet_draw(rng, pri.dir_alpha + counts_all)

        post_var = 1.0 / (1.0 / pri.mu_var + counts / var)
        post_mean = post_var * (pri.mu_mean / pri.mu_var + sums / var)
        state["mu"] = mu = post_mean + np.sqrt(post_var) * rng.gen.standard_normal((B, K))

        ss = (one_hot_lik * (y[..., None] - mu[:, None, :]) ** 2).sum(axis=1)
        state["var"] = pc.invgamma_draw(
            rng, pri.var_shape + counts / 2.0, pri.var_scale + ss / 2.0
        )

    def state_rows(self, state):
        theta = np.concatenate([state["mu"], state["var"], state["p"]], axis=1)
        latent = state["z"].astype(np.float64)
        return theta, latent

    # -- evaluation -------------------------------------------------------

    def theta_view(self, theta):
        K = self.K
        return SimpleNamespace(
            mu=theta[:, :K], var=theta[:, K : 2 * K], p=theta[:, 2 * K : 3 * K]
        )

    def nonint_logpred(self, i, theta, b_i, y=None):
        v = self.theta_view(theta)
        z = np.asarray(b_i).astype(np.int64)
        rows = np.arange(theta.shape[0])
        rows = rows.reshape(rows.shape + (1,) * (z.ndim - 1))
        y_i = self.y[..., i] if y is None else y
        return pc.normal_logpdf(y_i, v.mu[rows, z], v.var[rows, z])

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        v = self.theta_view(theta)
        y_i = self.y[..., i]
        comp = np.log(v.p) + pc.normal_logpdf(y_i, v.mu, v.var)
        return pc.log_sum_exp(comp, axis=-1)

    def regen_latent(self, i, theta, latent, rng, size=None):
        v = self.theta_view(theta)
        logits = np.log(v.p)
        if size is not None:
            logits = np.broadcast_to(logits[:, None, :], (theta.shape[0], size, self.K))
        return pc.categorical_from_logits(rng, logits).astype(np.float64)


def mixture_simulate(n, rng, means=(-7.0, -2.0, 1.0, 7.0), sds=None, weights=None):
    """Draw n observations from a normal mixture; defaults reproduce the
    four-component, unit-variance, equal-weight generator used by the
    simulation study. Returns (y, z)."""
    means = np.asarray(means, dtype=np.float64)
    K = means.shape[0]
    sds = np.ones(K) if sds is None else np.asarray(sds, dtype=np.float64)
    if weights is None:
        weights = np.full(K, 1.0 / K)
    weights = np.asarray(weights, dtype=np.float64)
    if sds.shape != means.shape or weights.shape != means.shape:
        raise ConfigError("means, sds and weights must have matching lengths")
    z = pc.categorical_draw(rng, np.broadcast_to(weights, (n, K)))
    y = means[z] + sds[z] * rng.gen.standard_normal(n)
    return y, z
