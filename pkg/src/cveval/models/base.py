"""The latent-variable model contract.

A model family couples a dataset with: per-unit likelihood factors, one full
MCMC sweep over all conditionals, regeneration of a held-out unit's latent
variable from its conditional prior, and non-integrated / integrated
predictive log-densities. Everything downstream (the chain driver and every
evaluator) is written against this contract.

Sweeps operate on a state dict of arrays whose leading axis indexes parallel
chains, so one sweep call advances the whole chain batch. Evaluation-side
methods are vectorized over retained draws: `theta` is an (S, theta_dim)
matrix of flattened parameter rows and `latent` an (S, n_units) matrix, as
stored by the chain driver.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError

__all__ = ["LatentModel", "robbins_monro_update", "align_draws"]


def align_draws(col, like):
    """Reshape a per-draw column (S,) so it broadcasts against `like`, an
    array of shape (S,) or (S, K) carrying extra trailing draw axes."""
    col = np.asarray(col)
    like = np.asarray(like)
    if like.ndim <= col.ndim:
        return col
    return col.reshape(col.shape + (1,) * (like.ndim - col.ndim))

# Per-coordinate random-walk acceptance target for adapted proposals.
MH_TARGET_RATE = 0.44


def robbins_monro_update(log_scales, accepted, sweep_number):
    """One stochastic-approximation step of proposal log-scales toward the
    per-coordinate target acceptance rate. `accepted` holds 0/1 indicators
    broadcastable to log_scales; mutates and returns log_scales."""
    gamma = sweep_number ** -0.6
    log_scales += gamma * (accepted - MH_TARGET_RATE)
    return log_scales


class LatentModel:
    """Abstract base; concrete families fill in the attributes and methods.

    Attributes set by subclasses:
      n_units       number of validation units
      theta_names   names of the flattened parameter vector components
      latent_names  names of the per-unit latent variables (may be empty)
      r_draws       default Monte Carlo draw count for int_logpred, or None
                    when the integrated density is analytic
      has_midp      whether eval_midp is defined (discrete outcomes)
    """

    n_units: int
    theta_names: list[str]
    latent_names: list[str]
    r_draws: int | None = None
    has_midp: bool = False

    @property
    def theta_dim(self) -> int:
        return len(self.theta_names)

    @property
    def latent_dim(self) -> int:
        return len(self.latent_names)

    # -- state management -------------------------------------------------

    def init_state(self, n_chains, rng) -> dict:
        raise NotImplementedError

    def sweep(self, state, rng, holdout=None, adapt=False) -> None:
        """One full sweep of every conditional, in place.

        holdout: unit index whose likelihood factor is removed; its latent
        variable is then updated from the conditional prior (the exact
        held-out posterior kernel). adapt: tune proposal scales this sweep.
        """
        raise NotImplementedError

    def state_rows(self, state) -> tuple[np.ndarray, np.ndarray]:
        """Copy the current state into ((B, theta_dim), (B, latent_dim))."""
        raise NotImplementedError

    def check_finite(self, state, context="") -> None:
        for name, arr in state.items():
            if isinstance(arr, np.ndarray) and arr.dtype.kind == "f" and not np.all(
                np.isfinite(arr)
            ):
                raise NumericalError(f"non-finite state in '{name}' {context}".strip())

    # -- evaluation-side contract -----------------------------------------

    def theta_view(self, theta):
        """Unpack (S, theta_dim) rows into named arrays (a SimpleNamespace)."""
        raise NotImplementedError

    def loglik_unit(self, i, theta, b_i, y=None):
        """Log likelihood factor of unit i at each draw; y overrides the
        observed outcome (used by normalization checks)."""
        return self.nonint_logpred(i, theta, b_i, y=y)

    def nonint_logpred(self, i, theta, b_i, y=None):
        raise NotImplementedError

    def int_logpred(self, i, theta, latent, rng, r_draws=None):
        """log P(y_i | theta, b_{-i}) with unit i's latent averaged out under
        its conditional prior; Monte Carlo with r_draws unless analytic."""
        raise NotImplementedError

    def regen_latent(self, i, theta, latent, rng, size=None):
        """Draws of b_i from P(b_i | b_{-i}, theta) at each retained draw;
        returns (S,) or (S, size). Never reads y_i."""
        raise NotImplementedError

    def eval_midp(self, i, theta, b_i):
        raise NotImplementedError(f"mid-p evaluation is not defined for {type(self).__name__}")

    # -- evaluation functions ---------------------------------------------

    def pred_density_evalfn(self):
        from ..evaluators import EvalFunction

        def fn(i, theta, b):
            return np.exp(self.nonint_logpred(i, theta, b))

        return EvalFunction(fn=fn, tag="pred-density", name="pred_density")

    def midp_evalfn(self):
        from ..evaluators import EvalFunction

        if not self.has_midp:
            raise NotImplementedError(f"mid-p evaluation is not defined for {type(self).__name__}")
        return EvalFunction(fn=self.eval_midp_rows, tag="mid-p", name="midp")

    def eval_midp_rows(self, i, theta, b):
        """eval_midp vectorized over an extra trailing draw axis of b."""
        return self.eval_midp(i, theta, b)
