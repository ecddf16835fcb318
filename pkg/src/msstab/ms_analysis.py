"""Mean-square stability analysis.

Builds the nominal closed loop G = PK(1+PKH)^-1, evaluates the small-gain
quantity J = ||Phi(z) G(z)||_2^2, and propagates second moments through
the loop with the exact variance recursion

    sigma_u^2(k) = sum_n Ghat(n) sigma_v^2(k-n) + sum_n That(n) sigma_u^2(k-n)

where Ghat(n) = g^2(n) and That is the quadratic kernel induced by the
channel statistics.  J < 1 together with nominal stability is necessary
and sufficient for mean-square stability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .delay_channel import ChannelSpec, mean_channel, spectral_factor
from .lti_core import (
    Polynomial,
    StateSpace,
    UnstableSystemError,
    certified_horizon,
    feedback_interconnect,
    fir_ss,
    impulse_response,
    is_schur,
    h2_norm_sq,
    series,
)

# Past this value a variance trace is declared divergent (unambiguous at
# double precision).
DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class RecursionKernels:
    """Convolution kernels of the variance recursion up to a horizon.

    g_hat[n] = g(n)^2; t_hat[n] is the channel-statistics kernel.  Both
    start at zero because G is strictly proper, and partial sums of t_hat
    increase monotonically to ||Phi G||_2^2.
    """

    g_hat: np.ndarray
    t_hat: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.g_hat) - 1


@dataclass(frozen=True)
class VarianceTrace:
    """Time-indexed signal variances with provenance."""

    sigma_sq: np.ndarray
    label: str  # "recursion" | "formula" | "empirical"

    def __init__(self, sigma_sq, label: str):
        sigma_sq = np.asarray(sigma_sq, dtype=float)
        if np.any(sigma_sq < 0.0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "sigma_sq", sigma_sq)
        object.__setattr__(self, "label", label)

    def to_csv(self) -> str:
        lines = ["k,sigma_sq"]
        lines += [f"{k},{float(v)!r}" for k, v in enumerate(self.sigma_sq)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AnalysisReport:
    """Verdict of the mean-square stability analysis of one loop."""

    H: Polynomial
    Phi: Polynomial
    G: StateSpace
    nominal_stable: bool
    J: float | None
    ms_stable: bool
    sigma_u_inf: float | None

    def to_dict(self) -> dict:
        d = {
            "H": list(self.H.coeffs),
            "Phi": list(self.Phi.coeffs),
            "nominal_stable": self.nominal_stable,
            "J": self.J,
            "ms_stable": self.ms_stable,
            "sigma_u_inf": self.sigma_u_inf,
        }
        if self.J is not None:
            d["J_rounded"] = round(self.J, 4)
        if self.sigma_u_inf is not None:
            d["sigma_u_inf_rounded"] = round(self.sigma_u_inf, 4)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def small_gain(G: StateSpace, Phi: Polynomial) -> tuple[float, bool]:
    """J = ||Phi(z) G(z)||_2^2 and the verdict J < 1.

    Phi enters through its FIR state-space realization cascaded with G so
    the Lyapunov H2 path is reused.  G must be stable; an unstable G means
    "not mean-square stable" with no meaningful J, reported by raising.
    """
    stable, rho = is_schur(G.A)
    if not stable:
        raise UnstableSystemError(
            f"nominal loop unstable (spectral radius {rho:.6g}); J undefined"
        )
    if Phi.is_zero():
        return 0.0, True
    J = h2_norm_sq(series(G, fir_ss(Phi)))
    return J, J < 1.0


def recursion_kernels(G: StateSpace, spec: ChannelSpec,
                      horizon: int) -> RecursionKernels:
    """Kernels Ghat(n) = g^2(n) and the channel quadratic kernel That(n).

    That(m) = 1/2 sum_{i1,i2} [g(m-i1) a_i1 - g(m-i2) a_i2]^2 p_i1 p_i2
    with g(k) = 0 for k < 0.  G must be strictly proper (g(0) = 0).
    """
    if horizon < spec.tau:
        raise ValueError("horizon must be at least the largest delay")
    g = impulse_response(G, horizon).g
    if g[0] != 0.0:
        raise ValueError("G must be strictly proper (g(0) = 0)")
    p = np.asarray(spec.pmf)
    a = np.asarray(spec.weights)
    tau = spec.tau
    # gpad[m - i + tau] == g(m - i), zero for negative arguments
    gpad = np.concatenate([np.zeros(tau), g])
    m = np.arange(horizon + 1)
    # shifted[i, m] = g(m - i) * a_i
    shifted = np.stack([gpad[m + tau - i] * a[i] for i in range(tau + 1)])
    diff = shifted[:, None, :] - shifted[None, :, :]
    t_hat = 0.5 * np.einsum("i,j,ijm->m", p, p, diff ** 2)
    return RecursionKernels(g_hat=g ** 2, t_hat=t_hat)


def variance_recursion(kernels: RecursionKernels,
                       sigma_v: VarianceTrace) -> VarianceTrace:
    """Forward evaluation of the variance convolution recursion.

    Well-posed because That(0) = 0: sigma_u^2(k) depends only on earlier
    values.  The output has the same length as the input trace.
    """
    n = len(sigma_v.sigma_sq)
    if n - 1 > kernels.horizon:
        raise ValueError("kernels shorter than the requested horizon")
    gh = kernels.g_hat
    th = kernels.t_hat
    sv = sigma_v.sigma_sq
    su = np.zeros(n)
    for k in range(n):
        acc = float(gh[1 : k + 1] @ sv[k - 1 :: -1]) if k else 0.0
        acc += float(th[1 : k + 1] @ su[k - 1 :: -1]) if k else 0.0
        su[k] = acc
    return VarianceTrace(su, "recursion")


def s_hat_sequence(kernels: RecursionKernels) -> np.ndarray:
    """Resolvent coefficients: Shat(0) = 1, Shat(k) = sum_j Shat(j) That(k-j).

    A scalar convolution recursion; the Toeplitz matrix behind it is never
    materialized.
    """
    th = kernels.t_hat
    n = len(th)
    s = np.zeros(n)
    s[0] = 1.0
    for k in range(1, n):
        s[k] = float(s[:k] @ th[k:0:-1])
    return s


def asymptotic_variance(G: StateSpace, Phi: Polynomial,
                        sigma_v_sq: float) -> float:
    """Closed-form limit ||G||_2^2 sigma_v^2 / (1 - ||Phi G||_2^2)."""
    J, stable = small_gain(G, Phi)
    if not stable:
        raise ValueError(f"J = {J:.6g} >= 1: no finite asymptotic variance")
    return h2_norm_sq(G) * sigma_v_sq / (1.0 - J)


def analysis_horizon(G: StateSpace, Phi: Polynomial, J: float,
                     tail_tol: float = 1e-8, cap: int = 10 ** 6) -> int:
    """Horizon at which both kernel tails are certified below ``tail_tol``.

    The That tail decays with the spectral radius of the cascaded Phi*G
    realization (squared, since the kernel is quadratic in g); the Shat
    tail is geometric with ratio J.
    """
    _, rho = is_schur(series(G, fir_ss(Phi)).A if not Phi.is_zero() else G.A)
    n1 = certified_horizon(rho ** 2, tail_tol, cap)
    if 0.0 < J < 1.0:
        n2 = certified_horizon(J, tail_tol, cap)
    else:
        n2 = 1
    return max(n1, n2, 8)


def assemble_nominal_loop(P: StateSpace, K: StateSpace,
                          spec: ChannelSpec) -> tuple[Polynomial, StateSpace]:
    """Mean channel H and the nominal closed loop G = PK(1+PKH)^-1."""
    H = mean_channel(spec)
    G = feedback_interconnect(P, K, fir_ss(H))
    return H, G


def analyze(P: StateSpace, K: StateSpace, spec: ChannelSpec,
            sigma_v_sq: float = 1.0) -> AnalysisReport:
    """Full mean-square stability analysis of the loop (P, K, channel)."""
    H, G = assemble_nominal_loop(P, K, spec)
    Phi = spectral_factor(spec).phi
    nominal_stable, _ = is_schur(G.A)
    if not nominal_stable:
        return AnalysisReport(H=H, Phi=Phi, G=G, nominal_stable=False,
                              J=None, ms_stable=False, sigma_u_inf=None)
    J, ms_stable = small_gain(G, Phi)
    sigma_u_inf = None
    if ms_stable:
        sigma_u_inf = h2_norm_sq(G) * sigma_v_sq / (1.0 - J)
    return AnalysisReport(H=H, Phi=Phi, G=G, nominal_stable=True,
                          J=J, ms_stable=ms_stable, sigma_u_inf=sigma_u_inf)
