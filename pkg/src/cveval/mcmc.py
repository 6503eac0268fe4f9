"""Chain driver: schedules, retained-draw stores, held-out refits.

All chains of a run advance together as one batched state, one sweep call
per iteration. A run passes through three phases: adaptation (proposal
scales tuned), burn-in, and sampling, with every `thin`-th sampling sweep
retained. Retained draws are stored chain-major: all of chain 0's rows,
then chain 1's, and so on.

Held-out refits come in two flavours with identical stationary
distributions: `run_holdout` refits one unit on its own deterministic
substream (the reference path), and `run_cv_batched` refits many units at
once by giving every chain in the batch its own held-out unit, trading
per-unit reproducibility for a large constant-factor speedup. Either way a
held-out unit's store only keeps that unit's latent column; evaluations of
the held-out unit never read the others.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericalError
from .rng import RngStream

__all__ = [
    "ChainConfig",
    "SampleStore",
    "CvUnitResult",
    "run_chains",
    "run_holdout",
    "run_cv_batched",
    "actual_cv_run",
    "split_rhat",
    "effective_sample_size",
]

_FINITE_CHECK_EVERY = 500


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 1
    n_adapt: int = 1000
    n_burn: int = 2000
    n_sample: int = 40000
    thin: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if min(self.n_adapt, self.n_burn) < 0 or self.n_sample < 1:
            raise ConfigError("phase lengths must be nonnegative, n_sample positive")
        if self.thin < 1 or self.n_sample % self.thin != 0:
            raise ConfigError("thin must be positive and divide n_sample")

    @property
    def per_chain(self) -> int:
        return self.n_sample // self.thin

    def replace(self, **kw):
        return replace(self, **kw)


class SampleStore:
    """Retained draws of one run: theta (S, P) and latent (S, L) matrices,
    chain-major, plus run metadata. `cache` is scratch space for evaluators
    (per-unit density matrices and regeneration draws)."""

    def __init__(self, theta, latent, theta_names, latent_names, n_chains, meta=None):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        latent = np.ascontiguousarray(latent, dtype=np.float64)
        if theta.shape[0] != latent.shape[0]:
            raise ConfigError("theta and latent row counts differ")
        if theta.shape[0] % n_chains != 0:
            raise ConfigError("row count must be a multiple of n_chains")
        if theta.shape[1] != len(theta_names) or latent.shape[1] != len(latent_names):
            raise ConfigError("column names do not match matrix shapes")
        self.theta = theta
        self.latent = latent
        self.theta_names = list(theta_names)
        self.latent_names = list(latent_names)
        self.n_chains = int(n_chains)
        self.meta = dict(meta) if meta else {}
        self.cache: dict = {}

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]

    @property
    def per_chain(self) -> int:
        return self.n_draws // self.n_chains

    @property
    def holdout(self):
        return self.meta.get("holdout")

    def unit_latent(self, i):
        """The latent column of unit i, or a zero column for latent-free
        models. A held-out store holds only its own unit's column."""
        if self.latent.shape[1] == 0:
            return np.zeros(self.n_draws)
        if self.holdout is not None and self.latent.shape[1] == 1:
            if i != self.holdout:
                raise ConfigError(
                    f"store holds only held-out unit {self.holdout}, not {i}"
                )
            return self.latent[:, 0]
        return self.latent[:, i]

    def by_chain(self, column):
        """Reshape a (S,) vector to (n_chains, per_chain)."""
        return np.asarray(column).reshape(self.n_chains, self.per_chain)

    # -- binary spill ------------------------------------------------------

    _MAGIC = b"CVSS"
    _VERSION = 1

    def save(self, path):
        header = json.dumps(
            {
                "theta_names": self.theta_names,
                "latent_names": self.latent_names,
                "n_chains": self.n_chains,
                "n_draws": self.n_draws,
                "meta": _jsonable(self.meta),
            }
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<II", self._VERSION, len(header)))
            fh.write(header)
            fh.write(self.theta.astype("<f8").tobytes(order="C"))
            fh.write(self.latent.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != cls._MAGIC:
                raise ConfigError(f"not a sample store file: bad magic {magic!r}")
            version, hlen = struct.unpack("<II", fh.read(8))
            if version != cls._VERSION:
                raise ConfigError(f"unsupported sample store version {version}")
            header = json.loads(fh.read(hlen).decode("utf-8"))
            s = header["n_draws"]
            p = len(header["theta_names"])
            fl = len(header["latent_names"])
            theta = np.frombuffer(fh.read(8 * s * p), dtype="<f8").reshape(s, p)
            latent = np.frombuffer(fh.read(8 * s * fl), dtype="<f8").reshape(s, fl)
        return cls(
            theta,
            latent,
            header["theta_names"],
            header["latent_names"],
            header["n_chains"],
            meta=header.get("meta"),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _snapshot_counters(state):
    out = {}
    for name, val in state.get("counters", {}).items():
        out[name] = val.copy() if isinstance(val, np.ndarray) else val
    return out


def _acceptance_rates(before, after):
    rates = {}
    for name in after:
        if not name.endswith("_accept"):
            continue
        family = name[: -len("_accept")]
        tries = after.get(f"{family}_try", 0) - before.get(f"{family}_try", 0)
        if tries <= 0:
            continue
        diff = after[name] - before.get(name, 0)
        rates[family] = float(np.mean(diff) / tries)
    return rates


def _drive(model, config, rng, holdout=None, collect="all", diagnostics=True):
    """Run the three phases; returns (theta (S,P), latent rows, extras)."""
    B_units = 1 if np.isscalar(holdout) or holdout is None else len(holdout)
    B = config.n_chains * B_units
    state = model.init_state(B, rng)
    h = holdout
    if h is not None and not np.isscalar(h):
        h = np.repeat(np.asarray(h, dtype=np.int64), config.n_chains)

    for t in range(config.n_adapt):
        model.sweep(state, rng, holdout=h, adapt=True)
        if (t + 1) % _FINITE_CHECK_EVERY == 0:
            model.check_finite(state, context="during adaptation")
    for t in range(config.n_burn):
        model.sweep(state, rng, holdout=h)
        if (t + 1) % _FINITE_CHECK_EVERY == 0:
            model.check_finite(state, context="during burn-in")

    counters_before = _snapshot_counters(state)
    n_ret = config.per_chain
    theta_saved = None
    latent_saved = None
    r = 0
    for t in range(config.n_sample):
        model.sweep(state, rng, holdout=h)
        if (t + 1) % _FINITE_CHECK_EVERY == 0:
            model.check_finite(state, context="during sampling")
        if (t + 1) % config.thin == 0:
            theta_row, latent_row = model.state_rows(state)
            if theta_saved is None:
                theta_saved = np.empty((n_ret, B, theta_row.shape[1]))
                if collect == "all":
                    lcols = latent_row.shape[1]
                elif collect == "holdout" and latent_row.shape[1] > 0:
                    lcols = 1
                else:
                    lcols = 0
                latent_saved = np.empty((n_ret, B, lcols))
            theta_saved[r] = theta_row
            if collect == "all":
                latent_saved[r] = latent_row
            elif lcols == 1:
                if np.isscalar(h):
                    latent_saved[r, :, 0] = latent_row[:, h]
                else:
                    latent_saved[r, :, 0] = latent_row[np.arange(B), h]
            r += 1
    model.check_finite(state, context="at end of sampling")

    extras = {"acceptance": _acceptance_rates(counters_before, _snapshot_counters(state))}
    # to chain-major (B, n_ret, cols) -> (B * n_ret, cols)
    p_cols = theta_saved.shape[2]
    l_cols = latent_saved.shape[2]
    theta = np.ascontiguousarray(theta_saved.transpose(1, 0, 2)).reshape(B * n_ret, p_cols)
    latent = np.ascontiguousarray(latent_saved.transpose(1, 0, 2)).reshape(B * n_ret, l_cols)
    return theta, latent, extras


def _base_meta(model, config, stream, holdout=None):
    return {
        "model": type(model).__name__,
        "variant": getattr(model, "variant", None),
        "seed": config.seed,
        "stream_id": stream.stream_id,
        "schedule": {
            "n_chains": config.n_chains,
            "n_adapt": config.n_adapt,
            "n_burn": config.n_burn,
            "n_sample": config.n_sample,
            "thin": config.thin,
        },
        "holdout": holdout,
    }


def run_chains(model, config, rng=None, collect="all", diagnostics=True):
    """Full-data run; returns a SampleStore with convergence diagnostics
    (split R-hat, effective sample size, acceptance rates) in meta. The
    diagnostics are reported for inspection, they never gate anything."""
    stream = rng if rng is not None else RngStream(config.seed, 1).substream("fit")
    theta, latent, extras = _drive(model, config, stream, collect=collect)
    names = model.latent_names if collect == "all" else []
    store = SampleStore(
        theta,
        latent,
        model.theta_names,
        names,
        config.n_chains,
        meta=_base_meta(model, config, stream),
    )
    store.meta["acceptance"] = extras["acceptance"]
    if diagnostics:
        store.meta["diagnostics"] = chain_diagnostics(store)
    return store


def run_holdout(model, config, unit, rng=None, collect="holdout"):
    """Refit with unit's likelihood factor removed, on the unit's own
    deterministic substream; sweep kernels are otherwise identical and the
    held-out latent is refreshed from its conditional prior."""
    if not 0 <= unit < model.n_units:
        raise ConfigError(f"holdout unit {unit} out of range")
    stream = rng if rng is not None else RngStream(config.seed, 1).substream("cv", unit)
    theta, latent, extras = _drive(model, config, stream, holdout=int(unit), collect=collect)
    if collect == "all":
        names = model.latent_names
    elif collect == "holdout":
        names = [model.latent_names[unit]] if model.latent_names else []
    else:
        names = []
    store = SampleStore(
        theta,
        latent,
        model.theta_names,
        names,
        config.n_chains,
        meta=_base_meta(model, config, stream, holdout=int(unit)),
    )
    store.meta["acceptance"] = extras["acceptance"]
    return store


@dataclass
class CvUnitResult:
    unit: int
    store: SampleStore | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.store is None


def actual_cv_run(model, config, units=None, collect="holdout"):
    """Generator over held-out refits, one unit at a time so stores can be
    consumed and dropped; a unit whose refit dies numerically is reported
    as a failure record instead of aborting the whole pass."""
    if units is None:
        units = range(model.n_units)
    for unit in units:
        try:
            store = run_holdout(model, config, int(unit), collect=collect)
        except NumericalError as exc:
            yield CvUnitResult(unit=int(unit), store=None, error=str(exc))
            continue
        yield CvUnitResult(unit=int(unit), store=store)


def run_cv_batched(model, config, units=None, chunk_size=64):
    """Held-out refits for many units in one batched run per chunk: every
    chain carries its own held-out unit. Statistically identical to
    run_holdout; draws differ (one shared stream per chunk). Yields
    CvUnitResult in the given unit order."""
    if units is None:
        units = list(range(model.n_units))
    units = [int(u) for u in units]
    for u in units:
        if not 0 <= u < model.n_units:
            raise ConfigError(f"holdout unit {u} out of range")
    for start in range(0, len(units), chunk_size):
        chunk = units[start : start + chunk_size]
        stream = RngStream(config.seed, 1).substream("cvbatch", start, len(chunk))
        try:
            theta, latent, extras = _drive(
                model, config, stream, holdout=np.asarray(chunk), collect="holdout"
            )
        except NumericalError as exc:
            for u in chunk:
                yield CvUnitResult(unit=u, store=None, error=str(exc))
            continue
        nc = config.n_chains
        per = config.per_chain
        for j, u in enumerate(chunk):
            rows = slice(j * nc * per, (j + 1) * nc * per)
            names = [model.latent_names[u]] if model.latent_names else []
            lat = latent[rows] if names else latent[rows, :0]
            store = SampleStore(
                theta[rows],
                lat,
                model.theta_names,
                names,
                nc,
                meta=_base_meta(model, config, stream, holdout=u),
            )
            store.meta["acceptance"] = extras["acceptance"]
            yield CvUnitResult(unit=u, store=store)


# ---------------------------------------------------------------------------
# convergence diagnostics (reported, never gating)


def split_rhat(chains):
    """Split R-hat of one scalar quantity; chains is (m, n)."""
    chains = np.asarray(chains, dtype=np.float64)
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    x = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    w = x.var(axis=1, ddof=1).mean()
    b = half * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def effective_sample_size(chains):
    """Effective sample size with Geyer initial-positive-pair truncation."""
    chains = np.asarray(chains, dtype=np.float64)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    centered = chains - chains.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real / n
    w = chains.var(axis=1, ddof=1).mean()
    b = n * chains.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + (b / n if m > 1 else 0.0)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    # Geyer: sum consecutive pairs while positive
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
        t += 2
    return float(m * n / tau)


def chain_diagnostics(store):
    out = {"rhat": {}, "ess": {}}
    for k, name in enumerate(store.theta_names):
        col = store.by_chain(store.theta[:, k])
        out["rhat"][name] = split_rhat(col)
        out["ess"][name] = effective_sample_size(col)
    return out
