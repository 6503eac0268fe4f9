"""Poisson disease mapping with a proper conditional autoregression prior.

Counts y_i ~ Poisson(E_i exp(s_i)) for n areal units with expected counts
E_i. The log relative risks s are the per-unit latent variables with joint
prior s ~ Normal(mu, tau2 * (I - phi C)^{-1} M), where mu is an intercept
plus optionally a covariate term, c_ij = sqrt(E_j / E_i) on edges of the
neighbourhood graph, and m_ii = 1 / E_i. Four nested variants share this
implementation:

  full          mu = alpha + beta x, spatial covariance
  spatial       mu = alpha,          spatial covariance
  linear        mu = alpha + beta x, independent Normal(mu_i, tau2)
  exchangeable  mu = alpha,          independent Normal(alpha, tau2)

The precision is tau2^{-1} Q with Q = diag(E) - phi * Asym, where Asym has
sqrt(E_i E_j) on edges. Q is congruent to I - phi * A01 (A01 the 0/1
adjacency) under diag(sqrt(E)), so log det Q = sum log E_i + sum
log(1 - phi lambda_k) with lambda_k the adjacency eigenvalues, and Q is
positive definite exactly for phi in (1/lambda_min, 1/lambda_max).

Site updates are Metropolis steps run color-by-color over a proper coloring
of the neighbourhood graph, so each vectorized block touches a conditionally
independent set. alpha, beta and tau2 are conjugate; phi is a random-walk
Metropolis step inside its support interval.

Priors: alpha, beta ~ Normal(0, 1000^2), tau2 ~ InverseGamma(0.5, 0.0005),
phi ~ Uniform over its support.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from scipy.special import pdtrc

from .. import probcore as pc
from ..errors import ConfigError
from .base import LatentModel, robbins_monro_update

__all__ = [
    "CarPriors",
    "CarStructure",
    "CarModel",
    "car_conditional",
    "car_log_joint_prior",
    "car_simulate",
    "CAR_VARIANTS",
]

CAR_VARIANTS = ("full", "spatial", "linear", "exchangeable")


@dataclass(frozen=True)
class CarPriors:
    coef_sd: float = 1000.0
    tau2_shape: float = 0.5
    tau2_scale: float = 0.0005


def _greedy_coloring(neighbors):
    """Proper coloring, largest-degree-first greedy; returns a list of
    disjoint index arrays covering 0..n-1, no edge inside any array."""
    n = len(neighbors)
    order = sorted(range(n), key=lambda i: -len(neighbors[i]))
    color = np.full(n, -1, dtype=np.int64)
    for i in order:
        used = {color[j] for j in neighbors[i] if color[j] >= 0}
        c = 0
        while c in used:
            c += 1
        color[i] = c
    return [np.flatnonzero(color == c) for c in range(color.max() + 1)]


class CarStructure:
    """Neighbourhood graph plus the derived quantities every variant needs."""

    def __init__(self, expected, x, neighbors):
        E = np.asarray(expected, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        n = E.shape[0]
        if x.shape[0] != n or len(neighbors) != n:
            raise ConfigError("expected counts, covariate and adjacency sizes differ")
        if np.any(E <= 0):
            raise ConfigError("expected counts must be positive")
        self.n = n
        self.expected = E
        self.x = x
        self.neighbors = [sorted(int(j) for j in nb) for nb in neighbors]
        adj = np.zeros((n, n), dtype=np.float64)
        for i, nb in enumerate(self.neighbors):
            for j in nb:
                if j == i or not 0 <= j < n:
                    raise ConfigError(f"bad neighbour {j} for unit {i}")
                adj[i, j] = 1.0
        if not np.array_equal(adj, adj.T):
            raise ConfigError("adjacency must be symmetric")
        self.adjacency = adj
        root_e = np.sqrt(E)
        self.asym = adj * np.outer(root_e, root_e)  # sqrt(E_i E_j) on edges
        self.c_matrix = adj * np.sqrt(E[None, :] / E[:, None])
        self.adj_eigenvalues = pc.sym_eigenvalues(adj)
        self.colors = _greedy_coloring(self.neighbors)
        self.n_edges = int(adj.sum()) // 2

    @property
    def phi_support(self):
        lam = self.adj_eigenvalues
        lam_min, lam_max = lam[0], lam[-1]
        if lam_min >= 0 or lam_max <= 0:
            raise ConfigError("phi support needs a graph with at least one edge")
        return (1.0 / lam_min, 1.0 / lam_max)

    @classmethod
    def from_data(cls, data):
        return cls(data.expected, data.x, data.neighbors)


def _mu(alpha, beta, structure, spatial_axis=True):
    # alpha, beta: (...,) batched scalars; returns (..., n)
    a = np.asarray(alpha, dtype=np.float64)[..., None]
    if beta is None:
        return np.broadcast_to(a, a.shape[:-1] + (structure.n,)).copy()
    return a + np.asarray(beta, dtype=np.float64)[..., None] * structure.x


def car_simulate(rng, structure, variant="full", alpha=0.0, beta=0.0, tau2=0.3, phi=0.05):
    """Draw counts from the model at fixed parameters. The latent field is
    sampled through the Cholesky factor of the joint precision. Returns
    (y, s)."""
    if variant not in CAR_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    has_beta = variant in ("full", "linear")
    spatial = variant in ("full", "spatial")
    mu = _mu(alpha, beta if has_beta else None, structure)
    z = rng.gen.standard_normal(structure.n)
    if spatial:
        lo, hi = structure.phi_support
        if not lo < phi < hi:
            raise ConfigError(f"phi {phi} outside the support ({lo:.4f}, {hi:.4f})")
        q = np.diag(structure.expected) - phi * structure.asym
        upper = pc.cholesky(q).T
        s = mu + np.sqrt(tau2) * np.linalg.solve(upper, z)
    else:
        s = mu + np.sqrt(tau2) * z
    y = rng.gen.poisson(structure.expected * np.exp(s))
    return y.astype(np.int64), s


def car_conditional(i, s, theta, structure, variant="full"):
    """Mean and variance of s_i given s_{-i} and the parameters.

    theta: mapping with keys alpha, tau2 and, per variant, beta and phi.
    s: (..., n); entry i is ignored. Returns (mean, var) with shape (...,).
    """
    _check_variant(variant)
    has_beta = variant in ("full", "linear")
    spatial = variant in ("full", "spatial")
    alpha = np.asarray(theta["alpha"], dtype=np.float64)
    beta = np.asarray(theta["beta"], dtype=np.float64) if has_beta else None
    tau2 = np.asarray(theta["tau2"], dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    mu = _mu(alpha, beta, structure)
    if not spatial:
        return np.broadcast_to(mu[..., i], tau2.shape).copy(), tau2.copy()
    phi = np.asarray(theta["phi"], dtype=np.float64)
    E = structure.expected
    nb = structure.neighbors[i]
    c_row = structure.c_matrix[i, nb]
    mean = mu[..., i] + phi * ((s[..., nb] - mu[..., nb]) @ c_row)
    var = tau2 / E[i]
    return mean, var


def car_log_joint_prior(s, theta, structure, variant="full"):
    """Joint log density of s given the parameters, per variant."""
    _check_variant(variant)
    has_beta = variant in ("full", "linear")
    spatial = variant in ("full", "spatial")
    alpha = np.asarray(theta["alpha"], dtype=np.float64)
    beta = np.asarray(theta["beta"], dtype=np.float64) if has_beta else None
    tau2 = np.asarray(theta["tau2"], dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    n = structure.n
    d = s - _mu(alpha, beta, structure)
    if spatial:
        phi = np.asarray(theta["phi"], dtype=np.float64)
        lo, hi = structure.phi_support
        if np.any(phi <= lo) or np.any(phi >= hi):
            raise ValueError("phi outside its support interval")
        E = structure.expected
        quad = (d * d * E).sum(-1) - phi * np.einsum("...i,ij,...j->...", d, structure.asym, d)
        logdet_q = np.log(E).sum() + np.log1p(
            -phi[..., None] * structure.adj_eigenvalues
        ).sum(-1)
    else:
        quad = (d * d).sum(-1)
        logdet_q = 0.0
    return 0.5 * (logdet_q - n * (np.log(2.0 * np.pi) + np.log(tau2))) - quad / (
        2.0 * tau2
    )


def _check_variant(variant):
    if variant not in CAR_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {CAR_VARIANTS}")


class CarModel(LatentModel):
    has_midp = True

    def __init__(self, y, structure, variant="full", priors=None, r_draws=200):
        _check_variant(variant)
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != structure.n:
            raise ConfigError("y length does not match the structure")
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise ConfigError("counts must be nonnegative integers")
        self.y = y
        self.structure = structure
        self.variant = variant
        self.priors = priors if priors is not None else CarPriors()
        self.r_draws = int(r_draws)
        self.has_beta = variant in ("full", "linear")
        self.spatial = variant in ("full", "spatial")
        self.n_units = structure.n
        names = ["alpha"]
        if self.has_beta:
            names.append("beta")
        names.append("tau2")
        if self.spatial:
            names.append("phi")
        self.theta_names = names
        self.latent_names = [f"s{i}" for i in range(1, structure.n + 1)]

    # -- state ------------------------------------------------------------

    def init_state(self, n_chains, rng):
        B, n = n_chains, self.n_units
        st = self.structure
        y = np.broadcast_to(self.y, (B, n))
        s0 = np.log((y + 0.5) / st.expected)
        state = {
            "alpha": 0.1 * rng.gen.standard_normal(B),
            "tau2": np.full(B, 0.2),
            "s": s0 + 0.1 * rng.gen.standard_normal((B, n)),
            "log_scale_s": np.full((B, n), np.log(0.7)),
            "adapt_t": 0,
            "counters": {"s_accept": np.zeros((B, n)), "s_try": 0},
        }
        if self.has_beta:
            state["beta"] = 0.1 * rng.gen.standard_normal(B)
        if self.spatial:
            lo, hi = st.phi_support
            state["phi"] = np.full(B, 0.5 * (lo + hi))
            state["log_scale_phi"] = np.full(B, np.log(0.1 * (hi - lo)))
            state["counters"]["phi_accept"] = np.zeros(B)
            state["counters"]["phi_try"] = 0
        return state

    def _mu_state(self, state):
        return _mu(state["alpha"], state.get("beta") if self.has_beta else None, self.structure)

    def _q_mul(self, w, phi):
        # Q w with Q = diag(E) - phi * Asym, batched over leading axes.
        st = self.structure
        if not self.spatial:
            return w
        return st.expected * w - phi[..., None] * (w @ st.asym)

    def sweep(self, state, rng, holdout=None, adapt=False):
        if adapt:
            state["adapt_t"] += 1
        self._update_s(state, rng, holdout=holdout, adapt=adapt)
        if holdout is not None:
            self._gibbs_holdout_site(state, rng, holdout)
        self._update_alpha(state, rng)
        if self.has_beta:
            self._update_beta(state, rng)
        self._update_tau2(state, rng)
        if self.spatial:
            self._update_phi(state, rng, adapt=adapt)

    def _update_s(self, state, rng, holdout=None, adapt=False):
        st = self.structure
        B, n = state["s"].shape
        y = np.broadcast_to(self.y, (B, n))
        E = st.expected
        mu = self._mu_state(state)
        tau2 = state["tau2"]
        phi = state.get("phi")
        counters = state["counters"]
        h_col = None
        if holdout is not None and not np.isscalar(holdout):
            h_col = np.asarray(holdout)[:, None]
        for group in st.colors:
            idx = group
            if holdout is not None and np.isscalar(holdout):
                idx = group[group != holdout]
                if idx.size == 0:
                    continue
            s = state["s"]
            cur = s[:, idx]
            if self.spatial:
                d = s - mu
                cond_mean = mu[:, idx] + phi[:, None] * (d @ st.asym[:, idx]) / E[idx]
                cond_var = tau2[:, None] / E[idx]
            else:
                cond_mean = mu[:, idx]
                cond_var = tau2[:, None]
            step = np.exp(state["log_scale_s"][:, idx])
            prop = cur + step * rng.gen.standard_normal((B, idx.size))
            dlik = y[:, idx] * (prop - cur) - E[idx] * (np.exp(prop) - np.exp(cur))
            if h_col is not None:
                # per-chain held-out site: drop its likelihood term (the
                # site is then exactly redrawn after the color passes)
                dlik = np.where(idx[None, :] == h_col, 0.0, dlik)
            dpri = ((cur - cond_mean) ** 2 - (prop - cond_mean) ** 2) / (2.0 * cond_var)
            accept = np.log(rng.gen.uniform(size=(B, idx.size))) < dlik + dpri
            s[:, idx] = np.where(accept, prop, cur)
            counters["s_accept"][:, idx] += accept
            if adapt:
                state["log_scale_s"][:, idx] = robbins_monro_update(
                    state["log_scale_s"][:, idx], accept, state["adapt_t"]
                )
        counters["s_try"] += 1

    def _gibbs_holdout_site(self, state, rng, holdout):
        """Exact draw of the held-out site from its conditional prior;
        holdout is one unit index or one per chain."""
        s = state["s"]
        if np.isscalar(holdout):
            theta = {k: state[k] for k in ("alpha", "beta", "tau2", "phi") if k in state}
            mean, var = car_conditional(
                holdout, s, theta, self.structure, self.variant
            )
            s[:, holdout] = mean + np.sqrt(var) * rng.gen.standard_normal(mean.shape)
            return
        st = self.structure
        B = s.shape[0]
        rows = np.arange(B)
        h = np.asarray(holdout)
        mu = self._mu_state(state)
        if self.spatial:
            d = s - mu
            mean_all = mu + state["phi"][:, None] * (d @ st.asym) / st.expected
            var = state["tau2"] / st.expected[h]
        else:
            mean_all = mu
            var = state["tau2"]
        mean = mean_all[rows, h]
        s[rows, h] = mean + np.sqrt(var) * rng.gen.standard_normal(B)

    def _update_alpha(self, state, rng):
        st = self.structure
        pri = self.priors
        s = state["s"]
        tau2 = state["tau2"]
        phi = state.get("phi")
        resid = s - state["beta"][:, None] * st.x if self.has_beta else s
        q_one = self._q_mul(np.ones_like(s), phi)
        prec = q_one.sum(-1) / tau2 + 1.0 / pri.coef_sd**2
        mean = (q_one * resid).sum(-1) / tau2 / prec
        state["alpha"] = mean + rng.gen.standard_normal(mean.shape) / np.sqrt(prec)

    def _update_beta(self, state, rng):
        st = self.structure
        pri = self.priors
        s = state["s"]
        tau2 = state["tau2"]
        phi = state.get("phi")
        resid = s - state["alpha"][:, None]
        q_x = self._q_mul(np.broadcast_to(st.x, s.shape), phi)
        prec = (q_x * st.x).sum(-1) / tau2 + 1.0 / pri.coef_sd**2
        mean = (q_x * resid).sum(-1) / tau2 / prec
        state["beta"] = mean + rng.gen.standard_normal(mean.shape) / np.sqrt(prec)

    def _update_tau2(self, state, rng):
        pri = self.priors
        d = state["s"] - self._mu_state(state)
        quad = (d * self._q_mul(d, state.get("phi"))).sum(-1)
        state["tau2"] = pc.invgamma_draw(
            rng, pri.tau2_shape + 0.5 * self.n_units, pri.tau2_scale + 0.5 * quad
        )

    def _update_phi(self, state, rng, adapt=False):
        st = self.structure
        lo, hi = st.phi_support
        phi = state["phi"]
        tau2 = state["tau2"]
        d = state["s"] - self._mu_state(state)
        cross = np.einsum("bi,ij,bj->b", d, st.asym, d)
        prop = phi + np.exp(state["log_scale_phi"]) * rng.gen.standard_normal(phi.shape)
        inside = (prop > lo) & (prop < hi)
        safe = np.where(inside, prop, 0.5 * (lo + hi))
        lam = st.adj_eigenvalues
        dlogdet = 0.5 * (
            np.log1p(-safe[:, None] * lam).sum(-1) - np.log1p(-phi[:, None] * lam).sum(-1)
        )
        dquad = (safe - phi) * cross / (2.0 * tau2)
        accept = inside & (np.log(rng.gen.uniform(size=phi.shape)) < dlogdet + dquad)
        state["phi"] = np.where(accept, safe, phi)
        counters = state["counters"]
        counters["phi_accept"] += accept
        counters["phi_try"] += 1
        if adapt:
            robbins_monro_update(state["log_scale_phi"], accept, state["adapt_t"])

    def state_rows(self, state):
        cols = [state["alpha"]]
        if self.has_beta:
            cols.append(state["beta"])
        cols.append(state["tau2"])
        if self.spatial:
            cols.append(state["phi"])
        return np.stack(cols, axis=1), state["s"].copy()

    # -- evaluation -------------------------------------------------------

    def theta_view(self, theta):
        k = 0
        view = {"alpha": theta[:, 0]}
        k = 1
        if self.has_beta:
            view["beta"] = theta[:, k]
            k += 1
        view["tau2"] = theta[:, k]
        k += 1
        if self.spatial:
            view["phi"] = theta[:, k]
        return SimpleNamespace(**view)

    def _theta_mapping(self, theta):
        v = self.theta_view(theta)
        out = {"alpha": v.alpha, "tau2": v.tau2}
        if self.has_beta:
            out["beta"] = v.beta
        if self.spatial:
            out["phi"] = v.phi
        return out

    def nonint_logpred(self, i, theta, b_i, y=None):
        y_i = self.y[..., i] if y is None else y
        rate = self.structure.expected[i] * np.exp(np.asarray(b_i, dtype=np.float64))
        return pc.poisson_logpmf(y_i, rate)

    def _conditional_rows(self, i, theta, latent):
        mean, var = car_conditional(
            i, latent, self._theta_mapping(theta), self.structure, self.variant
        )
        return np.broadcast_to(mean, (theta.shape[0],)), np.broadcast_to(
            var, (theta.shape[0],)
        )

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        R = self.r_draws if r_draws is None else int(r_draws)
        mean, var = self._conditional_rows(i, theta, latent)
        sd = np.sqrt(var)
        y_i = self.y[..., i]
        S = mean.shape[0]
        out = np.empty(S)
        # chunk the (S, R) draw block to bound the working set
        chunk = max(1, 2_000_000 // R)
        for a in range(0, S, chunk):
            b = min(a + chunk, S)
            draws = mean[a:b, None] + sd[a:b, None] * rng.gen.standard_normal(
                (b - a, R)
            )
            ld = pc.poisson_logpmf(y_i, self.structure.expected[i] * np.exp(draws))
            out[a:b] = pc.log_sum_exp(ld, axis=-1) - np.log(R)
        return out

    def regen_latent(self, i, theta, latent, rng, size=None):
        mean, var = self._conditional_rows(i, theta, latent)
        sd = np.sqrt(var)
        if size is None:
            return mean + sd * rng.gen.standard_normal(mean.shape)
        return mean[:, None] + sd[:, None] * rng.gen.standard_normal(
            (mean.shape[0], size)
        )

    def eval_midp(self, i, theta, b_i):
        y_i = float(self.y[..., i])
        rate = self.structure.expected[i] * np.exp(np.asarray(b_i, dtype=np.float64))
        upper = pdtrc(y_i, rate)  # P(Y > y_i) for integer y_i
        return upper + 0.5 * np.exp(pc.poisson_logpmf(y_i, rate))
