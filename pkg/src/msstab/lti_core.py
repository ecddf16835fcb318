"""Discrete-time LTI building blocks.

Polynomials in the delay operator z^-1, SISO rational transfer functions,
state-space models, interconnections, Schur stability tests, discrete
Lyapunov equations and H2 norms.  Everything here is a pure function of
its inputs; the value types are frozen dataclasses and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Margin subtracted from 1 in the open-unit-disk test; guards eigenvalue
# round-off without rejecting legitimate systems.
SCHUR_MARGIN = 1e-9

# Tolerance for declaring two polynomial roots equal during reduction.
ROOT_MATCH_TOL = 1e-8


class ImproperTransferFunctionError(ValueError):
    """Raised when a transfer function has den[0] == 0 (improper in z^-1)."""


class UnstableSystemError(ValueError):
    """Raised when an operation requires a Schur A-matrix and does not get one."""


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in z^-1: coeffs[i] multiplies z^-i."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in coeffs))

    def normalize(self, tol: float = 0.0) -> "Polynomial":
        """Strip trailing coefficients with |c| <= tol (zero polynomial -> (0.0,))."""
        c = list(self.coeffs)
        while len(c) > 1 and abs(c[-1]) <= tol:
            c.pop()
        if not c:
            c = [0.0]
        return Polynomial(c)

    @property
    def degree(self) -> int:
        return len(self.normalize().coeffs) - 1

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs)

    def __call__(self, zinv: complex) -> complex:
        """Evaluate at a value of z^-1 (Horner)."""
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * zinv + c
        return acc

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return Polynomial(a)

    def scale(self, s: float) -> "Polynomial":
        return Polynomial(np.asarray(self.coeffs) * s)

    def roots(self) -> np.ndarray:
        """Roots in the z-plane of z^deg * p(z^-1) (companion-matrix eigenvalues)."""
        c = self.normalize().coeffs
        if len(c) == 1:
            return np.array([])
        # p(z^-1) = c0 + c1 z^-1 + ... ; multiply by z^deg -> c0 z^deg + ... + c_deg
        return np.roots(c)


@dataclass(frozen=True)
class RationalTF:
    """SISO rational transfer function num/den, both polynomials in z^-1."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if abs(self.den.coeffs[0]) == 0.0:
            raise ImproperTransferFunctionError(
                "den[0] == 0: transfer function is improper in the z^-1 convention"
            )

    def normalized(self) -> "RationalTF":
        """Monic-in-den form: den[0] == 1, trailing zeros stripped."""
        d0 = self.den.coeffs[0]
        num = Polynomial(np.asarray(self.num.coeffs) / d0).normalize(0.0)
        den = Polynomial(np.asarray(self.den.coeffs) / d0).normalize(0.0)
        return RationalTF(num, den)

    def reduce(self, tol: float = ROOT_MATCH_TOL) -> "RationalTF":
        """Cancel common num/den roots within ``tol`` absolute distance."""
        tf = self.normalized()
        if tf.num.is_zero():
            return RationalTF(Polynomial([0.0]), Polynomial([1.0]))
        nr = list(tf.num.roots())
        dr = list(tf.den.roots())
        changed = True
        while changed:
            changed = False
            for i, r in enumerate(nr):
                j = _closest(dr, r, tol)
                if j is not None:
                    nr.pop(i)
                    dr.pop(j)
                    changed = True
                    break
        # rebuild with the original leading gains; strip trailing round-off
        num = _poly_from_roots(nr, tf.num.coeffs[_first_nonzero(tf.num.coeffs)],
                               lead_shift=_first_nonzero(tf.num.coeffs))
        den = _poly_from_roots(dr, 1.0, lead_shift=0)
        num = num.normalize(1e-9 * max(np.max(np.abs(num.coeffs)), 1e-300))
        den = den.normalize(1e-9 * np.max(np.abs(den.coeffs)))
        return RationalTF(num, den)

    def __call__(self, zinv: complex) -> complex:
        return self.num(zinv) / self.den(zinv)


def _first_nonzero(coeffs) -> int:
    for i, c in enumerate(coeffs):
        if c != 0.0:
            return i
    return 0


def _closest(pool: list, r: complex, tol: float):
    best, best_d = None, tol
    for j, q in enumerate(pool):
        d = abs(q - r)
        if d <= best_d:
            best, best_d = j, d
    return best


def _poly_from_roots(roots_z, gain: float, lead_shift: int) -> Polynomial:
    """Rebuild c * z^-lead_shift * prod(1 - r z^-1) from z-plane roots."""
    c = np.array([1.0 + 0j])
    for r in roots_z:
        c = np.convolve(c, [1.0, -r])
    c = np.real(c) * gain
    return Polynomial(np.concatenate([np.zeros(lead_shift), c]))


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time state-space model (A, B, C, D).

    Zero-dimensional A (a pure feedthrough) is allowed; B and C then have
    an empty state axis.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __init__(self, A, B, C, D):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        C = np.asarray(C, dtype=float)
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if A.size == 0:
            A = A.reshape(0, 0)
        n = A.shape[0]
        B = B.reshape(n, -1) if B.size else B.reshape(n, D.shape[1])
        C = C.reshape(-1, n) if C.size else C.reshape(D.shape[0], n)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("B/C dimensions inconsistent with A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError("D dimensions inconsistent with B, C")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class ImpulseResponse:
    """Samples g(0..horizon); g(k) for k < 0 is implicitly zero."""

    g: np.ndarray
    horizon: int = field(default=0)

    def __init__(self, g):
        g = np.asarray(g, dtype=float)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "horizon", len(g) - 1)


def ss_from_tf(tf: RationalTF) -> StateSpace:
    """Controllable-canonical realization of a proper SISO transfer function."""
    tf = tf.normalized()
    num = np.asarray(tf.num.coeffs)
    den = np.asarray(tf.den.coeffs)
    # in the z^-1 convention excess numerator delay is proper; the state
    # dimension is the larger of the two degrees
    n = max(len(num), len(den)) - 1
    b = np.zeros(n + 1)
    b[: len(num)] = num
    a = np.zeros(n + 1)
    a[: len(den)] = den  # a[0] == 1
    d = b[0]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)),
                          np.zeros((1, 0)), [[d]])
    # strictly proper part: (b - d*a) has leading zero; coefficients of
    # z^{n-1}..z^0 in the z-plane numerator
    beta = b[1:] - d * a[1:]
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[1:][::-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = beta[::-1].reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def tf_from_ss(ss: StateSpace) -> RationalTF:
    """Transfer function C(zI-A)^-1 B + D of a SISO model, reduced, in z^-1."""
    if ss.n_inputs != 1 or ss.n_outputs != 1:
        raise ValueError("tf_from_ss supports SISO models only")
    n = ss.n_states
    d = float(ss.D[0, 0])
    if n == 0:
        return RationalTF(Polynomial([d]), Polynomial([1.0]))
    den_z = np.poly(ss.A)  # monic, descending powers of z
    # det(zI - A + BC) = den(z) * (1 + C(zI-A)^-1 B)
    aug = np.poly(ss.A - ss.B @ ss.C)
    num_z = aug - den_z + d * den_z
    # divide by z^n: descending z-coefficients become ascending z^-1 coefficients
    return RationalTF(Polynomial(num_z), Polynomial(den_z)).reduce()


def impulse_response(ss: StateSpace, horizon: int) -> ImpulseResponse:
    """g(0)=D, g(k)=C A^(k-1) B for 1 <= k <= horizon (SISO)."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    g = np.zeros(horizon + 1)
    g[0] = ss.D[0, 0]
    x = ss.B[:, 0].copy()
    for k in range(1, horizon + 1):
        g[k] = float(ss.C[0] @ x)
        x = ss.A @ x
    return ImpulseResponse(g)


def is_schur(A: np.ndarray) -> tuple[bool, float]:
    """Return (spectral radius < 1 - SCHUR_MARGIN, spectral radius)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return True, 0.0
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    eigs = np.linalg.eigvals(A)  # raises LinAlgError on failure
    rho = float(np.max(np.abs(eigs)))
    return rho < 1.0 - SCHUR_MARGIN, rho


def solve_dlyap(A: np.ndarray, Q: np.ndarray,
                residual_tol: float = 1e-12, max_doublings: int = 200) -> np.ndarray:
    """Solve X = A X A^T + Q for Schur A by fixed-point doubling.

    X_{j+1} = X_j + M_j X_j M_j^T with M_{j+1} = M_j^2 converges
    quadratically to the series sum_{k>=0} A^k Q (A^T)^k.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    stable, rho = is_schur(A)
    if not stable:
        raise UnstableSystemError(f"A is not Schur (spectral radius {rho:.6g})")
    if A.size == 0:
        return Q.copy()
    X = Q.copy()
    M = A.copy()
    qn = max(np.linalg.norm(Q, "fro"), 1e-300)
    for _ in range(max_doublings):
        X = X + M @ X @ M.T
        M = M @ M
        if np.linalg.norm(X - A @ X @ A.T - Q, "fro") <= residual_tol * qn:
            break
    return 0.5 * (X + X.T)


def h2_norm_sq(ss: StateSpace) -> float:
    """Squared H2 norm: sum of squared impulse-response samples.

    Computed via the observability Lyapunov equation; D contributes D^2.
    """
    stable, rho = is_schur(ss.A)
    if not stable:
        raise UnstableSystemError(
            f"H2 norm undefined: A not Schur (spectral radius {rho:.6g})"
        )
    d2 = float(ss.D[0, 0]) ** 2 if ss.D.size == 1 else float(np.sum(ss.D ** 2))
    if ss.n_states == 0:
        return d2
    Wo = solve_dlyap(ss.A.T, ss.C.T @ ss.C)
    return float(np.trace(ss.B.T @ Wo @ ss.B)) + d2


def certified_horizon(rho: float, tail_tol: float = 1e-12,
                      cap: int = 10 ** 6) -> int:
    """Truncation length N with rho^N <= tail_tol (capped)."""
    if rho <= 0.0:
        return 1
    if rho >= 1.0:
        return cap
    n = int(np.ceil(np.log(tail_tol) / np.log(rho)))
    return max(1, min(n, cap))


def fir_ss(poly: Polynomial) -> StateSpace:
    """Shift-register realization of an FIR polynomial in z^-1.

    State x_i(k) = u(k-i-1); D is the z^0 tap, so a degree-0 polynomial
    yields a pure feedthrough with an empty state.
    """
    c = poly.normalize().coeffs
    n = len(c) - 1
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)),
                          np.zeros((1, 0)), [[c[0]]])
    A = np.zeros((n, n))
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.asarray(c[1:]).reshape(1, n)
    return StateSpace(A, B, C, [[c[0]]])


def series(first: StateSpace, second: StateSpace) -> StateSpace:
    """Cascade: output of ``first`` feeds the input of ``second``."""
    n1, n2 = first.n_states, second.n_states
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = first.A
    A[n1:, n1:] = second.A
    A[n1:, :n1] = second.B @ first.C
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A, B, C, D)


def feedback_interconnect(P: StateSpace, K: StateSpace, H: StateSpace) -> StateSpace:
    """Closed-loop map from the summing-junction input w = v - d to u.

    The loop is e = w - ubar, y = P e, u = K y, ubar = H u.  P must be
    strictly proper so the loop is well-posed for any proper K and H.
    Internal stability is a separate is_schur check on the returned A.
    """
    if np.any(P.D != 0.0):
        raise ValueError("P must be strictly proper (D_P = 0)")
    for sys, name in ((P, "P"), (K, "K"), (H, "H")):
        if sys.n_inputs != 1 or sys.n_outputs != 1:
            raise ValueError(f"{name} must be SISO")
    nP, nK, nH = P.n_states, K.n_states, H.n_states
    dK = float(K.D[0, 0])
    dH = float(H.D[0, 0])
    # y = C_P x_P;  u = C_K x_K + dK y;  ubar = C_H x_H + dH u;  e = w - ubar
    A = np.zeros((nP + nK + nH, nP + nK + nH))
    sP = slice(0, nP)
    sK = slice(nP, nP + nK)
    sH = slice(nP + nK, nP + nK + nH)
    A[sP, sP] = P.A - dH * dK * P.B @ P.C
    A[sP, sK] = -dH * P.B @ K.C
    A[sP, sH] = -P.B @ H.C
    A[sK, sP] = K.B @ P.C
    A[sK, sK] = K.A
    A[sH, sP] = dK * H.B @ P.C
    A[sH, sK] = H.B @ K.C
    A[sH, sH] = H.A
    B = np.zeros((nP + nK + nH, 1))
    B[sP] = P.B
    C = np.zeros((1, nP + nK + nH))
    C[0, sP] = dK * P.C[0]
    C[0, sK] = K.C[0]
    return StateSpace(A, B, C, [[0.0]])
