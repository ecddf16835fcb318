"""Monte Carlo simulation of the true stochastic feedback loop.

Each trial steps the loop of the original block diagram: the controller
output u(k) is sent over the channel, a delay is drawn per send instant,
and the receiver recombines time-stamped arrivals with the configured
weights.  Trials use independent counter-based RNG streams derived from
(seed, trial index), so results are bit-reproducible for a fixed
(seed, trials, horizon) regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay_channel import ChannelSpec
from .lti_core import StateSpace
from .ms_analysis import VarianceTrace

# Trials are processed in fixed-size batches in trial order; the batch
# size only bounds memory, never the results.
_BATCH = 8192

DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one Monte Carlo experiment.

    ``input_mode`` is "white" (zero state, white noise v with variance
    sigma_v_sq) or "zero_input" (v = 0, initial P/K state drawn from
    ``initial_cov``).
    """

    P: StateSpace
    K: StateSpace
    spec: ChannelSpec
    horizon: int
    trials: int
    seed: int
    input_mode: str = "white"
    sigma_v_sq: float = 1.0
    initial_cov: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon < 1 or self.trials < 1:
            raise ValueError("horizon and trials must be >= 1")
        if np.any(self.P.D != 0.0):
            raise ValueError("P must be strictly proper")
        if self.input_mode not in ("white", "zero_input"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")
        if self.input_mode == "white":
            if self.sigma_v_sq < 0.0:
                raise ValueError("sigma_v_sq must be >= 0")
        else:
            n = self.P.n_states + self.K.n_states
            cov = np.atleast_2d(np.asarray(self.initial_cov, dtype=float))
            if cov.shape != (n, n):
                raise ValueError(f"initial_cov must be {n}x{n}")
            if not np.allclose(cov, cov.T):
                raise ValueError("initial_cov must be symmetric")
            object.__setattr__(self, "initial_cov", cov)


@dataclass(frozen=True)
class SimResult:
    """Across-trial moments of the control signal per time step."""

    mean_u: np.ndarray
    var_u: VarianceTrace
    stderr_u: np.ndarray
    cov_norm: np.ndarray | None = None

    def to_csv(self) -> str:
        cols = "k,mean_u,var_u,stderr_u"
        if self.cov_norm is not None:
            cols += ",cov_norm"
        lines = [cols]
        for k in range(len(self.mean_u)):
            row = (f"{k},{float(self.mean_u[k])!r},"
                   f"{float(self.var_u.sigma_sq[k])!r},{float(self.stderr_u[k])!r}")
            if self.cov_norm is not None:
                row += f",{float(self.cov_norm[k])!r}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def _trial_rngs(seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent Philox streams for delay draws and noise draws."""
    key = np.array([np.uint64(seed), np.uint64(2 * trial)], dtype=np.uint64)
    delays = np.random.Generator(np.random.Philox(key=key))
    key2 = np.array([np.uint64(seed), np.uint64(2 * trial + 1)], dtype=np.uint64)
    noise = np.random.Generator(np.random.Philox(key=key2))
    return delays, noise


def _draw_batch(cfg: SimConfig, trials: range):
    """Per-trial random inputs for a batch: delays, v, and x(0)."""
    T = cfg.horizon
    n0 = cfg.P.n_states + cfg.K.n_states
    cum = np.cumsum(cfg.spec.pmf)
    delays = np.empty((len(trials), T), dtype=np.int64)
    v = np.zeros((len(trials), T))
    x0 = np.zeros((len(trials), n0))
    chol = None
    if cfg.input_mode == "zero_input":
        # PSD factor; eigh handles semidefinite covariances
        w, V = np.linalg.eigh(cfg.initial_cov)
        chol = V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    for row, t in enumerate(trials):
        rd, rn = _trial_rngs(cfg.seed, t)
        delays[row] = np.minimum(
            np.searchsorted(cum, rd.random(T), side="right"), cfg.spec.tau
        )
        if cfg.input_mode == "white":
            v[row] = rn.normal(0.0, np.sqrt(cfg.sigma_v_sq), T)
        else:
            x0[row] = chol @ rn.standard_normal(n0)
    return delays, v, x0


def _step_batch(cfg: SimConfig, delays: np.ndarray, v: np.ndarray,
                x0: np.ndarray):
    """Run one batch of trials through the loop; yields (k, u, x) per step."""
    B, T = delays.shape
    P, K = cfg.P, cfg.K
    nP, nK = P.n_states, K.n_states
    tau = cfg.spec.tau
    alpha = np.asarray(cfg.spec.weights)
    xP = x0[:, :nP].copy()
    xK = x0[:, nP:].copy()
    ubuf = np.zeros((B, tau + 1))  # ring of the last tau+1 sent values
    bP = P.B[:, 0]
    bK = K.B[:, 0] if nK else np.zeros(0)
    dK = float(K.D[0, 0])
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            y = xP @ P.C[0]
            u = (xK @ K.C[0] if nK else 0.0) + dK * y
            ubuf[:, k % (tau + 1)] = u
            u_d = np.zeros(B)
            for i in range(min(tau, k) + 1):
                # packet sent at k-i arrives now iff its sampled delay is i
                u_d += alpha[i] * (delays[:, k - i] == i) * ubuf[:, (k - i) % (tau + 1)]
            e = v[:, k] - u_d
            yield k, u, xP, xK
            xP = xP @ P.A.T + e[:, None] * bP
            if nK:
                xK = xK @ K.A.T + y[:, None] * bK


def simulate_path(cfg: SimConfig, trial_index: int) -> np.ndarray:
    """u-trajectory of a single trial (same draws as the batched estimator)."""
    delays, v, x0 = _draw_batch(cfg, range(trial_index, trial_index + 1))
    out = np.empty(cfg.horizon)
    for k, u, _, _ in _step_batch(cfg, delays, v, x0):
        out[k] = u[0]
    return out


def estimate_variance(cfg: SimConfig, track_state_cov: bool = False) -> SimResult:
    """Across-trial sample mean / variance / stderr of u(k) for each k.

    Accumulation is in fixed trial order, so the result does not depend on
    batching or scheduling.  ``track_state_cov`` additionally records the
    Frobenius norm of the empirical (P, K)-state second moment.
    """
    T = cfg.horizon
    s1 = np.zeros(T)
    s2 = np.zeros(T)
    s4 = np.zeros(T)
    n = cfg.P.n_states + cfg.K.n_states
    sxx = np.zeros((T, n, n)) if track_state_cov else None
    for start in range(0, cfg.trials, _BATCH):
        trials = range(start, min(start + _BATCH, cfg.trials))
        delays, v, x0 = _draw_batch(cfg, trials)
        for k, u, xP, xK in _step_batch(cfg, delays, v, x0):
            s1[k] += np.sum(u)
            u2 = u * u
            s2[k] += np.sum(u2)
            s4[k] += np.sum(u2 * u2)
            if track_state_cov:
                x = np.hstack([xP, xK])
                sxx[k] += x.T @ x
    N = cfg.trials
    mean = s1 / N
    var = np.maximum(s2 / N - mean ** 2, 0.0)
    var_of_u2 = np.maximum(s4 / N - (s2 / N) ** 2, 0.0)
    stderr = np.sqrt(var_of_u2 / N)
    cov_norm = None
    if track_state_cov:
        cov_norm = np.linalg.norm(sxx / N, axis=(1, 2))
    var = np.nan_to_num(var, nan=np.inf, posinf=np.inf)
    return SimResult(mean_u=mean, var_u=VarianceTrace(var, "empirical"),
                     stderr_u=stderr, cov_norm=cov_norm)


def covariance_decay(cfg: SimConfig) -> tuple[str, np.ndarray]:
    """Empirical state-covariance norm trace and a decay verdict.

    "decaying" when the trace falls below 1e-4 * ||initial_cov|| and stays
    there over the final 10% of the horizon; "diverging" otherwise.
    """
    if cfg.input_mode != "zero_input":
        raise ValueError("covariance_decay requires input_mode='zero_input'")
    res = estimate_variance(cfg, track_state_cov=True)
    trace = np.nan_to_num(res.cov_norm, nan=np.inf, posinf=np.inf)
    threshold = 1e-4 * np.linalg.norm(cfg.initial_cov)
    tail = trace[int(np.floor(0.9 * len(trace))):]
    verdict = "decaying" if np.all(tail < threshold) else "diverging"
    return verdict, trace
