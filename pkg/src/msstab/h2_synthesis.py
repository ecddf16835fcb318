"""Optimal mean-square stabilizing output-feedback design.

Assembles the general plant from the nominal plant P, the mean channel H
and the spectral factor Phi (both realized as FIR shift registers), solves
the control and filter Riccati equations, and returns the optimal
controller together with the achieved small-gain cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .delay_channel import ChannelSpec, mean_channel, spectral_factor
from .lti_core import Polynomial, StateSpace, fir_ss, is_schur, tf_from_ss
from .ms_analysis import assemble_nominal_loop, small_gain

RICCATI_RESIDUAL_TOL = 1e-12
RICCATI_MAX_ITER = 10 ** 4
INNER_COND_LIMIT = 1e12


class RiccatiError(RuntimeError):
    """Riccati iteration failed: non-convergence, singular inner inverse,
    or a non-stabilizing fixed point."""


class SynthesisError(RuntimeError):
    """General-plant assembly violates stabilizability or detectability."""


@dataclass(frozen=True)
class GeneralPlant:
    """State-space aggregation of P, Phi and H with cost output z = Phi(u)
    and measurement y = y_P.  State ordering: [x_P, x_Phi, x_H]."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D12: np.ndarray
    degenerate_cost: bool = False  # Phi == 0: the cost channel vanishes


@dataclass(frozen=True)
class SynthesisResult:
    """Optimal controller with gains, Riccati solutions and achieved cost."""

    K: StateSpace
    F: np.ndarray
    L: np.ndarray
    L0: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    J_star: float
    ms_stabilizable: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        tf = tf_from_ss(self.K).normalized()
        return {
            "K_state_space": {
                "A": self.K.A.tolist(), "B": self.K.B.tolist(),
                "C": self.K.C.tolist(), "D": self.K.D.tolist(),
            },
            "K_tf": {"num": list(tf.num.coeffs), "den": list(tf.den.coeffs)},
            "F": self.F.tolist(),
            "L": self.L.tolist(),
            "L0": self.L0.tolist(),
            "J_star": self.J_star,
            "J_star_rounded": round(self.J_star, 4),
            "ms_stabilizable": self.ms_stabilizable,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ctrb_rank(A: np.ndarray, B: np.ndarray) -> int:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def _stabilizable(A: np.ndarray, B: np.ndarray) -> bool:
    """PBH test on eigenvalues with |lambda| >= 1."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - 1e-9:
            M = np.hstack([lam * np.eye(n) - A, B])
            if np.linalg.matrix_rank(M, tol=1e-9) < n:
                return False
    return True


def _detectable(C: np.ndarray, A: np.ndarray) -> bool:
    return _stabilizable(A.T, C.T)


def build_general_plant(P: StateSpace, H_poly: Polynomial,
                        Phi: Polynomial) -> GeneralPlant:
    """Block assembly of the general plant from P, H and Phi.

    H and Phi are realized as FIR shift registers so their z^0 taps appear
    as direct feedthrough (D_H, D_Phi); D12 equals D_Phi exactly.
    """
    if np.any(P.D != 0.0):
        raise ValueError("P must be strictly proper")
    Hss = fir_ss(H_poly)
    Pss = fir_ss(Phi)
    nP, nF, nH = P.n_states, Pss.n_states, Hss.n_states
    n = nP + nF + nH
    A = np.zeros((n, n))
    A[:nP, :nP] = P.A
    A[:nP, nP + nF:] = -P.B @ Hss.C
    A[nP:nP + nF, nP:nP + nF] = Pss.A
    A[nP + nF:, nP + nF:] = Hss.A
    B1 = np.zeros((n, 1))
    B1[:nP] = P.B
    B2 = np.zeros((n, 1))
    B2[:nP] = -P.B * float(Hss.D[0, 0])
    B2[nP:nP + nF] = Pss.B
    B2[nP + nF:] = Hss.B
    C1 = np.zeros((1, n))
    C1[0, nP:nP + nF] = Pss.C[0]
    C2 = np.zeros((1, n))
    C2[0, :nP] = P.C[0]
    D12 = np.array([[float(Pss.D[0, 0])]])
    return GeneralPlant(A=A, B1=B1, B2=B2, C1=C1, C2=C2, D12=D12,
                        degenerate_cost=Phi.is_zero())


def solve_control_dare(A: np.ndarray, B2: np.ndarray, C1: np.ndarray,
                       D12: np.ndarray) -> np.ndarray:
    """Stabilizing solution of the control Riccati equation

    X = A'XA + C1'C1 - (C1'D12 + A'XB2)(D12'D12 + B2'XB2)^-1 (D12'C1 + B2'XA)

    via the symplectic-pencil (QZ) route.  The cost structure here makes
    the transformed state weight C1'C1 - S R^-1 S' vanish identically, so
    iterative schemes started from it collapse onto the non-stabilizing
    zero solution; the pencil deflation targets the stabilizing one.
    """
    R = D12.T @ D12
    if np.linalg.cond(R) > INNER_COND_LIMIT:
        raise RiccatiError("D12'D12 is singular: cost has no control penalty")
    S = C1.T @ D12
    try:
        X = scipy.linalg.solve_discrete_are(A, B2, C1.T @ C1, R, s=S)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"control Riccati solve failed: {exc}") from exc
    X = 0.5 * (X + X.T)
    _check_control_residual(A, B2, C1, D12, X)
    return X


def _check_control_residual(A, B2, C1, D12, X,
                            tol: float = 1e-10) -> None:
    inner = D12.T @ D12 + B2.T @ X @ B2
    res = (A.T @ X @ A + C1.T @ C1
           - (C1.T @ D12 + A.T @ X @ B2) @ np.linalg.inv(inner)
           @ (D12.T @ C1 + B2.T @ X @ A) - X)
    scale = max(np.linalg.norm(X, "fro"), 1.0)
    if np.linalg.norm(res, "fro") > tol * scale:
        raise RiccatiError(
            f"control Riccati residual {np.linalg.norm(res, 'fro'):.3e} "
            f"exceeds tolerance"
        )


def solve_filter_dare(A: np.ndarray, B1: np.ndarray, C2: np.ndarray,
                      max_iter: int = RICCATI_MAX_ITER) -> np.ndarray:
    """Stabilizing solution of the filter Riccati equation

    Y = AYA' + B1B1' - AYC2'(C2YC2')^-1 C2YA'

    by the Riccati difference iteration from Y_0 = B1B1'.  There is no
    measurement-noise term, so C2YC2' may be singular for some plants;
    such plants are rejected rather than regularized.
    """
    Q = B1 @ B1.T
    Y = Q.copy()
    for _ in range(max_iter):
        inner = C2 @ Y @ C2.T
        if inner.size == 0 or np.linalg.cond(inner) > INNER_COND_LIMIT:
            raise RiccatiError(
                "C2 Y C2' is singular along the filter iteration"
            )
        gain = A @ Y @ C2.T @ np.linalg.inv(inner)
        Y_next = A @ Y @ A.T + Q - gain @ C2 @ Y @ A.T
        Y_next = 0.5 * (Y_next + Y_next.T)
        delta = np.linalg.norm(Y_next - Y, "fro")
        Y = Y_next
        if delta <= RICCATI_RESIDUAL_TOL * max(1.0, np.linalg.norm(Y, "fro")):
            break
    else:
        raise RiccatiError(
            f"filter Riccati iteration did not converge in {max_iter} steps"
        )
    inner = C2 @ Y @ C2.T
    res = A @ Y @ A.T + Q - A @ Y @ C2.T @ np.linalg.inv(inner) @ C2 @ Y @ A.T - Y
    scale = max(np.linalg.norm(Y, "fro"), 1.0)
    if np.linalg.norm(res, "fro") > 1e-10 * scale:
        raise RiccatiError(
            f"filter Riccati residual {np.linalg.norm(res, 'fro'):.3e} "
            f"exceeds tolerance"
        )
    return Y


def synthesize(P: StateSpace, spec: ChannelSpec) -> SynthesisResult:
    """Optimal mean-square stabilizing output-feedback controller.

    Returns the observer-form controller built from the Riccati pair, the
    gains (F, L, L0) and the achieved cost J_star, cross-checked against
    the small-gain quantity of the assembled closed loop.
    """
    H = mean_channel(spec)
    Phi = spectral_factor(spec).phi
    plant = build_general_plant(P, H, Phi)
    A, B1, B2, C1, C2, D12 = (plant.A, plant.B1, plant.B2,
                              plant.C1, plant.C2, plant.D12)
    if not _stabilizable(A, B2):
        raise SynthesisError("(A, B2) is not stabilizable")
    if not _detectable(C2, A):
        raise SynthesisError("(C2, A) is not detectable")
    if plant.degenerate_cost:
        return _degenerate_synthesis(P, spec, plant)

    X = solve_control_dare(A, B2, C1, D12)
    Y = solve_filter_dare(A, B1, C2)

    innerX = D12.T @ D12 + B2.T @ X @ B2
    F = -np.linalg.inv(innerX) @ (B2.T @ X @ A + D12.T @ C1)
    innerY = C2 @ Y @ C2.T
    L = -A @ Y @ C2.T @ np.linalg.inv(innerY)
    L0 = F @ Y @ C2.T @ np.linalg.inv(innerY)

    okF, rhoF = is_schur(A + B2 @ F)
    okL, rhoL = is_schur(A + L @ C2)
    if not okF or not okL:
        raise RiccatiError(
            f"non-stabilizing Riccati fixed point "
            f"(rho(A+B2F)={rhoF:.4g}, rho(A+LC2)={rhoL:.4g})"
        )

    Ak = A + B2 @ F + L @ C2 - B2 @ L0 @ C2
    Bk = L - B2 @ L0
    Ck = L0 @ C2 - F
    Dk = L0
    K = StateSpace(Ak, Bk, Ck, Dk)

    _, G = assemble_nominal_loop(P, K, spec)
    stable, rho = is_schur(G.A)
    if not stable:
        raise RiccatiError(f"closed loop not internally stable (rho={rho:.4g})")
    J_star, ms_stabilizable = small_gain(G, Phi)
    return SynthesisResult(K=K, F=F, L=L, L0=L0, X=X, Y=Y,
                           J_star=J_star, ms_stabilizable=ms_stabilizable)


def _degenerate_synthesis(P: StateSpace, spec: ChannelSpec,
                          plant: GeneralPlant) -> SynthesisResult:
    """Phi == 0 (deterministic channel): any stabilizing K gives J = 0.

    Uses the same observer structure with an LQR-style surrogate cost on
    the measurement so a concrete stabilizing controller is returned.
    """
    A, B1, B2, C2 = plant.A, plant.B1, plant.B2, plant.C2
    # surrogate cost: penalize the measurement and the control equally
    C1s = C2.copy()
    D12s = np.array([[1.0]])
    X = solve_control_dare(A, B2, C1s, D12s)
    Y = solve_filter_dare(A, B1, C2)
    innerX = D12s.T @ D12s + B2.T @ X @ B2
    F = -np.linalg.inv(innerX) @ (B2.T @ X @ A + D12s.T @ C1s)
    innerY = C2 @ Y @ C2.T
    L = -A @ Y @ C2.T @ np.linalg.inv(innerY)
    L0 = F @ Y @ C2.T @ np.linalg.inv(innerY)
    K = StateSpace(A + B2 @ F + L @ C2 - B2 @ L0 @ C2,
                   L - B2 @ L0, L0 @ C2 - F, L0)
    _, G = assemble_nominal_loop(P, K, spec)
    stable, rho = is_schur(G.A)
    if not stable:
        raise RiccatiError(f"degenerate design unstable (rho={rho:.4g})")
    return SynthesisResult(K=K, F=F, L=L, L0=L0, X=X, Y=Y,
                           J_star=0.0, ms_stabilizable=True, degenerate=True)
