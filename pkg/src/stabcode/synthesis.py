"""Numerical design of the coder filters (F, L_w, L_y).

The nominal loop is an observer-based controller whose state feedback gain
mirrors the unstable plant poles into the unit disc.  That gain is the
minimum-energy stabilizer, so ``||S - 1||^2`` equals its infimum
``prod |p|^2 - 1``.  The remaining freedom is an FIR Youla parameter ``Q``
acting on the observer innovation.  With ``F = 1`` both SNR and output
variance are quadratic in the taps of ``Q``; eliminating the noise variance
through the SNR constraint leaves one weighted least-squares problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .errors import InfeasibleDesign, MarginallyStable, SynthesisError
from .lti import (
    ONE,
    STABILITY_MARGIN,
    ClosedLoopMaps,
    LoopFilters,
    PlantModel,
    TransferFunction,
    _reachable_basis,
    _spectral_radius,
    closed_loop_maps,
    h2_norm_sq_ss,
    interconnect,
    min_snr_for_stability,
    unstable_paths,
)

GAMMA_TOLERANCE = 0.02


@dataclass(frozen=True)
class SynthesisConfig:
    gamma_target: float
    fir_order: int = 32
    truncation_horizon: int = 512
    observer_regularization: float = 1e-6

    def __post_init__(self):
        if not self.gamma_target > 0:
            raise ValueError("gamma_target must be positive (linear scale, not dB)")
        if self.fir_order < 1:
            raise ValueError("fir_order must be at least 1")
        if self.truncation_horizon < 4 * self.fir_order:
            raise ValueError("truncation_horizon must be at least 4 * fir_order")


@dataclass(frozen=True)
class SynthesisReport:
    filters: LoopFilters
    achieved_gamma: float
    achieved_sigma_e_sq: float
    sigma_q_sq: float
    internally_stable: bool
    iterations: int
    s_minus_one_norm_sq: float
    ly_p21_s_norm_sq: float
    p12_f_s_norm_sq: float
    nominal_norm_sq: float
    youla_taps: tuple[float, ...] = ()
    maps: ClosedLoopMaps | None = field(default=None, compare=False, repr=False)

    @property
    def sigma_v_sq(self) -> float:
        return self.achieved_gamma * self.sigma_q_sq

    def to_json(self) -> dict:
        return {
            "filters": self.filters.to_json(),
            "achieved_gamma": self.achieved_gamma,
            "achieved_sigma_e_sq": self.achieved_sigma_e_sq,
            "sigma_q_sq": self.sigma_q_sq,
            "internally_stable": self.internally_stable,
            "iterations": self.iterations,
            "s_minus_one_norm_sq": self.s_minus_one_norm_sq,
            "ly_p21_s_norm_sq": self.ly_p21_s_norm_sq,
            "p12_f_s_norm_sq": self.p12_f_s_norm_sq,
            "nominal_norm_sq": self.nominal_norm_sq,
            "youla_taps": list(self.youla_taps),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthesisReport":
        fields_ = dict(obj)
        fields_["filters"] = LoopFilters.from_json(obj["filters"])
        fields_["youla_taps"] = tuple(obj.get("youla_taps", ()))
        return cls(**fields_)


# ------------------------------------------------------------------ helpers
def mirror_feedback_gain(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """State feedback ``u = -K x`` that reflects unstable poles to ``1/conj(p)``.

    Stable controllable modes keep their location, so the closed loop is the
    minimum-energy stabilizer.  Unreachable modes must already be stable.
    """
    n = A.shape[0]
    V = _reachable_basis(A, b, tol)
    if V.shape[1] < n:
        U = linalg.null_space(V.T)
        rad = _spectral_radius(U.T @ A @ U)
        if rad >= 1.0:
            raise InfeasibleDesign("plant is not stabilizable: an unstable mode is unreachable from u")
    Ac, bc = V.T @ A @ V, V.T @ b
    m = Ac.shape[0]
    if m == 0:
        return np.zeros((1, n))
    eig = np.linalg.eigvals(Ac)
    if np.any(np.abs(np.abs(eig) - 1.0) < tol):
        raise MarginallyStable("marginally stable, infimum not attained: pole on the unit circle")
    target = np.where(np.abs(eig) > 1.0, 1.0 / np.conj(eig), eig)
    if np.allclose(target, eig):
        return np.zeros((1, n))
    phi = np.real(np.poly(target))
    ctrb = np.hstack([np.linalg.matrix_power(Ac, i) @ bc for i in range(m)])
    phi_a = sum(c * np.linalg.matrix_power(Ac, m - i) for i, c in enumerate(phi))
    e_last = np.zeros((1, m))
    e_last[0, -1] = 1.0
    kc = e_last @ np.linalg.solve(ctrb, phi_a)
    return kc @ V.T


def observer_gain(A, Cy, Bd, dyd, reg: float) -> np.ndarray:
    """Steady-state predictor gain; disturbance enters through ``Bd`` and ``dyd``."""
    n = A.shape[0]
    Wn = Bd @ Bd.T + reg * np.eye(n)
    Vn = np.atleast_2d(dyd**2 + reg)
    Sn = Bd * dyd
    P = linalg.solve_discrete_are(A.T, Cy.T, Wn, Vn, s=Sn)
    return (A @ P @ Cy.T + Sn) @ np.linalg.inv(Cy @ P @ Cy.T + Vn)


def _impulse(A, B, C, D, n: int) -> np.ndarray:
    h = np.empty(n)
    h[0] = float(np.squeeze(D))
    x = B.reshape(-1)
    for t in range(1, n):
        h[t] = float(C.reshape(-1) @ x)
        x = A @ x
    return h


def _shift_matrix(h: np.ndarray, taps: int) -> np.ndarray:
    H = np.zeros((h.size, taps))
    for j in range(taps):
        H[j:, j] = h[: h.size - j]
    return H


@dataclass(frozen=True)
class _Nominal:
    A: np.ndarray
    Bd: np.ndarray
    Bu: np.ndarray
    Ce: np.ndarray
    Cy: np.ndarray
    ded: float
    deu: float
    dyd: float
    K: np.ndarray
    Lo: np.ndarray


def _nominal(plant: PlantModel, reg: float) -> _Nominal:
    A, B, C, D = plant.realization
    if abs(D[1, 1]) > 0.0:
        raise ValueError("synthesis requires a strictly proper P22 (no direct u -> y feedthrough)")
    Bd, Bu = B[:, [0]], B[:, [1]]
    Ce, Cy = C[[0]], C[[1]]
    K = mirror_feedback_gain(A, Bu)
    Lo = observer_gain(A, Cy, Bd, D[1, 0], reg)
    return _Nominal(A, Bd, Bu, Ce, Cy, D[0, 0], D[0, 1], D[1, 0], K, Lo)


def youla_filters(nom: _Nominal, taps: np.ndarray) -> LoopFilters:
    """Realize ``v = -K xhat + Q (y - Cy xhat)`` as ``L_y`` (from y) and ``L_w`` (from past u)."""
    A_L = nom.A - nom.Lo @ nom.Cy
    den = np.real(np.poly(A_L))

    def num(B, C, D):
        # numerator over the shared observer denominator det(I - A_L z^-1)
        return np.real(signal.ss2tf(A_L, B, C, np.atleast_2d(D))[0][0])

    q = np.asarray(taps, dtype=float)
    l_y = TransferFunction(_add(num(nom.Lo, -nom.K, 0.0), np.convolve(q, num(nom.Lo, -nom.Cy, 1.0))), den)
    lw_num = _add(num(nom.Bu, -nom.K, 0.0), np.convolve(q, num(nom.Bu, -nom.Cy, 0.0)))
    if abs(lw_num[0]) > 1e-12 * max(np.abs(lw_num).max(), 1.0):
        raise SynthesisError("internal error: past-input filter is not strictly causal")
    l_w = TransferFunction(lw_num[1:] if lw_num.size > 1 else [0.0], den)
    return LoopFilters(ONE, l_w, l_y)


def _add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(a.size, b.size)
    return np.concatenate([a, np.zeros(n - a.size)]) + np.concatenate([b, np.zeros(n - b.size)])


# ----------------------------------------------------------------- public
def synthesize_filters(plant: PlantModel, config: SynthesisConfig) -> SynthesisReport:
    """Internally stabilizing filters meeting ``gamma_target`` with small output variance."""
    floor = min_snr_for_stability(plant)
    gamma = config.gamma_target
    if gamma <= floor:
        raise InfeasibleDesign(
            f"below stability SNR: gamma_target={gamma:g} must exceed ||S-1||^2 infimum {floor:g}"
        )
    nom = _nominal(plant, config.observer_regularization)
    n_h, taps = config.truncation_horizon, config.fir_order
    A_K = nom.A - nom.Bu @ nom.K
    A_L = nom.A - nom.Lo @ nom.Cy
    s_norm = h2_norm_sq_ss(A_K, nom.Bu, -nom.K, np.zeros((1, 1)))
    if gamma <= s_norm:
        raise InfeasibleDesign(
            f"below stability SNR: nominal design reaches ||S-1||^2={s_norm:.9g} >= gamma_target={gamma:g}"
        )
    ce_k = nom.Ce - nom.deu * nom.K
    c_norm = h2_norm_sq_ss(A_K, nom.Bu, ce_k, np.array([[nom.deu]]))

    n = nom.A.shape[0]
    A_big = np.block([[A_K, nom.Bu @ nom.K], [np.zeros((n, n)), A_L]])
    B_big = np.vstack([nom.Bd, nom.Bd - nom.Lo * nom.dyd])
    h_v0 = _impulse(A_big, B_big, np.hstack([-nom.K, nom.K]), np.zeros((1, 1)), n_h)
    h_e0 = _impulse(A_big, B_big, np.hstack([ce_k, nom.deu * nom.K]), np.array([[nom.ded]]), n_h)
    h_inn = _impulse(A_L, nom.Bd - nom.Lo * nom.dyd, nom.Cy, np.array([[nom.dyd]]), n_h)
    h_s = _impulse(A_K, nom.Bu, -nom.K, np.ones((1, 1)), n_h)
    h_p12s = _impulse(A_K, nom.Bu, ce_k, np.array([[nom.deu]]), n_h)
    H_v = _shift_matrix(np.convolve(h_s, h_inn)[:n_h], taps)
    H_e = _shift_matrix(np.convolve(h_p12s, h_inn)[:n_h], taps)

    weight = c_norm / (gamma - s_norm)
    lhs = np.vstack([H_e, math.sqrt(weight) * H_v])
    rhs = -np.concatenate([h_e0, math.sqrt(weight) * h_v0])
    x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)

    filters = youla_filters(nom, x)
    maps = closed_loop_maps(plant, filters)
    best = dict(filters=filters, youla_taps=tuple(x.tolist()))
    if not maps.internally_stable:
        raise SynthesisError("synthesized loop is not internally stable: " + ", ".join(maps.unstable_paths), best)
    s1 = maps.s_minus_one_norm_sq
    a_v = maps.ly_p21_s_norm_sq
    if a_v <= 1e-14:
        raise SynthesisError("degenerate design: no disturbance signal reaches the coder", best)
    sigma_q_sq = a_v / (gamma - s1)
    achieved = s1 + a_v / sigma_q_sq
    sigma_e_sq = maps.nominal_norm_sq + maps.p12_f_s_norm_sq * sigma_q_sq
    if abs(achieved - gamma) > GAMMA_TOLERANCE * gamma:
        raise SynthesisError(f"achieved gamma {achieved:g} misses target {gamma:g}", best)
    return SynthesisReport(
        filters=filters,
        achieved_gamma=achieved,
        achieved_sigma_e_sq=sigma_e_sq,
        sigma_q_sq=sigma_q_sq,
        internally_stable=True,
        iterations=1,
        s_minus_one_norm_sq=s1,
        ly_p21_s_norm_sq=a_v,
        p12_f_s_norm_sq=maps.p12_f_s_norm_sq,
        nominal_norm_sq=maps.nominal_norm_sq,
        youla_taps=tuple(x.tolist()),
        maps=maps,
    )


def verify_internal_stability(
    plant: PlantModel, filters: LoopFilters, margin: float = STABILITY_MARGIN
) -> tuple[bool, list[str]]:
    """True iff every closed-loop mode is stable; the list names unstable (d, q) paths."""
    ic = interconnect(plant, filters)
    if _spectral_radius(ic.A) <= 1.0 - margin:
        return True, []
    bad = unstable_paths(ic, margin)
    return False, bad or ["hidden unstable mode (not visible from d, q)"]
