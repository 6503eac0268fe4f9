"""Small models used to pin estimator behaviour down exactly.

NormalMeanToy has no latent variables and a fully conjugate posterior, so
chain output and predictive quantities can be checked against closed forms.

EnumToy is a deliberately tiny discrete model (three parameter atoms, one
binary latent per unit, four Bernoulli observations) whose posterior is
exactly enumerable with rational arithmetic. Feeding the full enumeration
to an estimator as if it were MCMC output must reproduce exact expectations
to floating-point accuracy; the tests exploit that. Its regen_latent is
stratified: asked for a block of draws per retained row, it returns each
latent value with exactly its conditional-prior frequency (the block size
must make those frequencies integral), so block averages are exact
conditional expectations rather than Monte Carlo estimates.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm
from types import SimpleNamespace

import numpy as np

from .. import probcore as pc
from ..errors import ConfigError
from .base import LatentModel, align_draws

__all__ = ["NormalMeanToy", "EnumToy"]


class NormalMeanToy(LatentModel):
    """Normal observations with known variance and a normal prior mean."""

    r_draws = None
    has_midp = False

    def __init__(self, y, obs_var=1.0, prior_mean=0.0, prior_var=100.0):
        self.y = np.asarray(y, dtype=np.float64)
        if self.y.ndim != 1:
            raise ConfigError("y must be one-dimensional")
        if obs_var <= 0 or prior_var <= 0:
            raise ConfigError("variances must be positive")
        self.obs_var = float(obs_var)
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)
        self.n_units = self.y.shape[0]
        self.theta_names = ["mu"]
        self.latent_names = []

    def posterior_moments(self, exclude=None):
        """Closed-form posterior mean and variance of mu, optionally with
        one unit left out."""
        mask = np.ones(self.n_units, dtype=bool)
        if exclude is not None:
            mask[exclude] = False
        m = int(mask.sum())
        prec = 1.0 / self.prior_var + m / self.obs_var
        mean = (self.prior_mean / self.prior_var + self.y[mask].sum() / self.obs_var) / prec
        return mean, 1.0 / prec

    def init_state(self, n_chains, rng):
        return {"mu": self.prior_mean + 0.1 * rng.gen.standard_normal(n_chains)}

    def sweep(self, state, rng, holdout=None, adapt=False):
        if holdout is None or np.isscalar(holdout):
            mean, var = self.posterior_moments(exclude=holdout)
        else:
            h = np.asarray(holdout)
            prec = 1.0 / self.prior_var + (self.n_units - 1) / self.obs_var
            mean = (
                self.prior_mean / self.prior_var
                + (self.y.sum() - self.y[h]) / self.obs_var
            ) / prec
            var = 1.0 / prec
        state["mu"] = mean + np.sqrt(var) * rng.gen.standard_normal(state["mu"].shape)

    def state_rows(self, state):
        B = state["mu"].shape[0]
        return state["mu"][:, None].copy(), np.empty((B, 0))

    def theta_view(self, theta):
        return SimpleNamespace(mu=theta[:, 0])

    def nonint_logpred(self, i, theta, b_i, y=None):
        y_i = self.y[i] if y is None else y
        mu = self.theta_view(theta).mu
        b_i = np.asarray(b_i, dtype=np.float64)
        out = pc.normal_logpdf(y_i, align_draws(mu, b_i), self.obs_var)
        # latent-free: the value ignores b_i but follows its draw shape
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, b_i.shape)).copy()

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        mu = self.theta_view(theta).mu
        return pc.normal_logpdf(self.y[i], mu, self.obs_var)

    def regen_latent(self, i, theta, latent, rng, size=None):
        S = theta.shape[0]
        return np.zeros(S if size is None else (S, size))


class EnumToy(LatentModel):
    """Three parameter atoms, binary latents, four Bernoulli outcomes."""

    r_draws = None
    has_midp = True

    #: prior over the parameter atoms
    PRIOR = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))
    #: P(z_i = 1 | theta atom)
    Q = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
    #: P(y_i = 1 | z_i, theta atom), indexed [atom][z]
    RATE = (
        (Fraction(1, 4), Fraction(1, 2)),
        (Fraction(1, 2), Fraction(3, 4)),
        (Fraction(1, 4), Fraction(3, 4)),
    )
    Y_OBS = (1, 0, 1, 1)

    def __init__(self):
        self.y = np.asarray(self.Y_OBS, dtype=np.float64)
        self.n_units = len(self.Y_OBS)
        self.theta_names = ["t"]
        self.latent_names = [f"z{i}" for i in range(1, self.n_units + 1)]
        self._rate = np.array([[float(r) for r in row] for row in self.RATE])
        self._q = np.array([float(q) for q in self.Q])
        # integrated P(y_i | atom), exact then floated: sum_z P(z|t) P(y_i|z,t)
        tbl = []
        for t in range(3):
            row = []
            for i in range(self.n_units):
                row.append(self._exact_int_pred(t, self.Y_OBS[i]))
            tbl.append(row)
        self._int_frac = tbl
        self._int = np.array([[float(v) for v in row] for row in tbl])

    @classmethod
    def _exact_int_pred(cls, t, y):
        q = cls.Q[t]
        out = Fraction(0)
        for z in (0, 1):
            pz = q if z == 1 else 1 - q
            r = cls.RATE[t][z]
            out += pz * (r if y == 1 else 1 - r)
        return out

    # -- exact enumeration ------------------------------------------------

    def enumerate_posterior(self, holdout=None):
        """Exact posterior atoms as (t, z_tuple, Fraction probability),
        normalized; with holdout, unit i's likelihood factor is dropped
        while its latent keeps its conditional prior."""
        atoms = []
        n = self.n_units
        for t in range(3):
            for code in range(2**n):
                z = tuple((code >> i) & 1 for i in range(n))
                w = self.PRIOR[t]
                for i in range(n):
                    q = self.Q[t]
                    w *= q if z[i] == 1 else 1 - q
                    if holdout is not None and i == holdout:
                        continue
                    r = self.RATE[t][z[i]]
                    w *= r if self.Y_OBS[i] == 1 else 1 - r
                atoms.append((t, z, w))
        total = sum(w for _, _, w in atoms)
        return [(t, z, w / total) for t, z, w in atoms]

    def draw_rows(self, holdout=None):
        """The full enumeration expanded to integer multiplicities, shaped
        like retained MCMC output: (theta (S, 1), latent (S, n))."""
        atoms = self.enumerate_posterior(holdout=holdout)
        denom = lcm(*[w.denominator for _, _, w in atoms if w != 0])
        theta_rows = []
        latent_rows = []
        for t, z, w in atoms:
            m = int(w * denom)
            if m == 0:
                continue
            theta_rows.append(np.full((m, 1), float(t)))
            latent_rows.append(np.tile(np.asarray(z, dtype=np.float64), (m, 1)))
        return np.concatenate(theta_rows), np.concatenate(latent_rows)

    # -- model contract ---------------------------------------------------

    def theta_view(self, theta):
        return SimpleNamespace(t=theta[:, 0].astype(np.int64))

    def nonint_logpred(self, i, theta, b_i, y=None):
        t = self.theta_view(theta).t
        z = np.asarray(b_i).astype(np.int64)
        t = align_draws(t, z)
        p = self._rate[t, z]
        y_i = int(self.Y_OBS[i]) if y is None else int(y)
        with np.errstate(divide="ignore"):
            return np.log(p) if y_i == 1 else np.log1p(-p)

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        t = self.theta_view(theta).t
        return np.log(self._int[t, i])

    def regen_latent(self, i, theta, latent, rng, size=None):
        t = self.theta_view(theta).t
        if size is None:
            u = rng.gen.uniform(size=t.shape)
            return (u < self._q[t]).astype(np.float64)
        counts = self._q[t] * size
        rounded = np.rint(counts)
        if not np.allclose(counts, rounded, atol=1e-9):
            raise ConfigError(
                f"block size {size} does not make the latent frequencies integral"
            )
        return (np.arange(size) < rounded[:, None]).astype(np.float64)

    def eval_midp(self, i, theta, b_i):
        t = self.theta_view(theta).t
        z = np.asarray(b_i).astype(np.int64)
        p = self._rate[align_draws(t, z), z]
        if self.Y_OBS[i] == 1:
            return 0.5 * p
        return p + 0.5 * (1.0 - p)
