"""Random-delay channel model.

A channel is described by a delay PMF {p_i} and per-delay weights {alpha_i}
on the delay set {0, ..., tau}.  This module provides the mean channel
polynomial, the second-order statistics of the zero-mean channel
uncertainty, its spectral density and minimum-phase spectral factor, and
delay sampling for simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti_core import Polynomial

# PMF must sum to 1 within this tolerance; renormalization is refused.
PMF_SUM_TOL = 1e-12

# Below this distance from the unit circle, minimum-phase root selection is
# numerically meaningless.
UNIT_CIRCLE_TOL = 1e-8


class MarginalFactorizationError(ValueError):
    """Spectral zeros on the unit circle: no strictly minimum-phase factor."""


@dataclass(frozen=True)
class ChannelSpec:
    """Delay PMF and recombination weights over delays 0..tau."""

    pmf: tuple[float, ...]
    weights: tuple[float, ...]

    def __init__(self, pmf, weights):
        pmf = tuple(float(p) for p in pmf)
        weights = tuple(float(a) for a in weights)
        if len(pmf) == 0 or len(pmf) != len(weights):
            raise ValueError("pmf and weights must be nonempty and equal length")
        if any(p < 0.0 for p in pmf):
            raise ValueError("pmf entries must be nonnegative")
        s = sum(pmf)
        if abs(s - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"pmf sums to {s!r}, not 1 (renormalization refused)")
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "weights", weights)

    @property
    def tau(self) -> int:
        """Largest possible delay step."""
        return len(self.pmf) - 1

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        return cls(d["pmf"], d["weights"])

    def to_dict(self) -> dict:
        return {"pmf": list(self.pmf), "weights": list(self.weights)}


@dataclass(frozen=True)
class AutoCorr:
    """Autocorrelation r(0..tau) of the channel-uncertainty impulse response.

    Implied extension: r(-l) = r(l) and r(l) = 0 for |l| > tau.
    """

    r: tuple[float, ...]

    def __init__(self, r):
        r = tuple(float(x) for x in r)
        if r[0] < 0.0:
            raise ValueError("r(0) must be nonnegative")
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class SpectralFactor:
    """Minimum-phase factor phi with phi(z^-1) phi(z) = S_Omega(z).

    ``degenerate`` is set when the uncertainty vanishes (deterministic
    channel) and phi is the zero polynomial.
    """

    phi: Polynomial
    degenerate: bool = False


def mean_channel(spec: ChannelSpec) -> Polynomial:
    """Mean channel H(z): coefficient i is alpha_i * p_i."""
    return Polynomial([a * p for a, p in zip(spec.weights, spec.pmf)])


def autocorrelation(spec: ChannelSpec) -> AutoCorr:
    """r(0) = sum alpha_i^2 p_i (1-p_i); r(l) = -sum alpha_i alpha_{i+l} p_i p_{i+l}."""
    p = np.asarray(spec.pmf)
    a = np.asarray(spec.weights)
    tau = spec.tau
    r = np.empty(tau + 1)
    r[0] = float(np.sum(a ** 2 * p * (1.0 - p)))
    for l in range(1, tau + 1):
        r[l] = -float(np.sum(a[: tau - l + 1] * a[l:] * p[: tau - l + 1] * p[l:]))
    return AutoCorr(r)


def spectral_density(spec: ChannelSpec, grid_points: int = 1024) -> dict[int, float]:
    """Laurent coefficient table {l: r(l)} for -tau <= l <= tau.

    Also checks S_Omega(e^{j theta}) >= -1e-12 on a frequency grid; a
    violation indicates an internal bug, not bad input.
    """
    ac = autocorrelation(spec)
    table = {0: ac.r[0]}
    for l in range(1, spec.tau + 1):
        table[l] = ac.r[l]
        table[-l] = ac.r[l]
    theta = np.linspace(0.0, 2.0 * np.pi, grid_points, endpoint=False)
    s = np.full_like(theta, ac.r[0])
    for l in range(1, spec.tau + 1):
        s += 2.0 * ac.r[l] * np.cos(l * theta)
    if np.min(s) < -1e-12:
        raise AssertionError(
            f"spectral density negative on the grid (min {np.min(s):.3e}); "
            "internal inconsistency"
        )
    return table


def spectral_factor(spec: ChannelSpec) -> SpectralFactor:
    """Minimum-phase spectral factor of the channel-uncertainty density.

    Forms the degree-2*tau polynomial z^tau S_Omega(z), takes the roots
    strictly inside the unit circle and rescales so that the factor
    reproduces r(0) exactly.  The leading coefficient is positive.
    """
    ac = autocorrelation(spec)
    r = np.asarray(ac.r)
    if np.all(r == 0.0):
        return SpectralFactor(Polynomial([0.0]), degenerate=True)
    # strip vanishing outer lags (e.g. zero weights at the largest delays)
    tau_eff = int(np.max(np.nonzero(r)[0]))
    r = r[: tau_eff + 1]
    if tau_eff == 0:
        return SpectralFactor(Polynomial([float(np.sqrt(r[0]))]))
    # z^tau S(z): descending z-coefficients [r(tau), ..., r(1), r(0), r(1), ..., r(tau)]
    coeffs = np.concatenate([r[::-1], r[1:]])
    roots = np.roots(coeffs)
    if np.any(np.abs(np.abs(roots) - 1.0) <= UNIT_CIRCLE_TOL):
        raise MarginalFactorizationError(
            "spectral zeros on the unit circle: factor is not strictly minimum phase"
        )
    inside = roots[np.abs(roots) < 1.0]
    if len(inside) != tau_eff:
        raise AssertionError(
            f"expected {tau_eff} roots inside the unit circle, found {len(inside)}"
        )
    monic = np.array([1.0 + 0j])
    for rt in inside:
        monic = np.convolve(monic, [1.0, -rt])
    monic = np.real(monic)
    # scale so that the factor's zero-lag autocorrelation equals r(0)
    c = float(np.sqrt(r[0] / np.sum(monic ** 2)))
    return SpectralFactor(Polynomial(c * monic))


def sample_delay(spec: ChannelSpec, rng: np.random.Generator) -> int:
    """Draw one delay from the PMF, consuming exactly one uniform."""
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(spec.pmf):
        acc += p
        if u < acc:
            return i
    return spec.tau
