"""Rational discrete-time transfer functions and the closed-loop maps of the coding loop.

Coefficients are stored in ascending powers of ``z**-1`` so that
``TransferFunction([0, 1], [1, -0.5])`` is ``z^-1 / (1 - 0.5 z^-1) = 1 / (z - 0.5)``.
Zero-padding both sequences to a common length gives the descending-``z``
coefficient arrays used by ``numpy.roots`` and ``scipy.signal``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, signal

from .errors import IllPosedLoop, MarginallyStable, StabcodeError, UnstableSystem

CANCEL_TOL = 1e-9
STABILITY_MARGIN = 1e-7
H2_TAIL_TOL = 1e-12
H2_AGREEMENT = 1e-8


def _as_coeffs(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError("transfer function coefficients must be finite")
    return arr


def _trim(arr: np.ndarray) -> np.ndarray:
    arr = np.trim_zeros(arr, "b")
    return arr if arr.size else np.zeros(1)


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([a, np.zeros(n - a.size)])


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """SISO rational transfer function in ascending powers of ``z^-1``.

    The denominator is normalized so its constant term is 1; a zero constant
    term would make the system non-causal and is rejected.
    """

    num: tuple[float, ...]
    den: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        num = _as_coeffs(self.num)
        den = _trim(_as_coeffs(self.den))
        if not np.any(den):
            raise ValueError("degenerate transfer function: denominator is identically zero")
        if den[0] == 0.0:
            raise ValueError("denominator constant term must be nonzero (improper or non-causal system)")
        num, den = num / den[0], den / den[0]
        object.__setattr__(self, "num", tuple(_trim(num).tolist()))
        object.__setattr__(self, "den", tuple(den.tolist()))

    # ----------------------------------------------------------------- basics
    @classmethod
    def constant(cls, gain: float) -> "TransferFunction":
        return cls([gain])

    @classmethod
    def delay(cls, n: int = 1) -> "TransferFunction":
        return cls([0.0] * n + [1.0])

    @classmethod
    def from_roots(cls, zeros: Iterable[complex], poles: Iterable[complex], gain: float = 1.0):
        """Build ``gain * prod(z - zi) / prod(z - pi)`` (z-domain roots)."""
        zeros, poles = list(zeros), list(poles)
        numz = np.real_if_close(np.poly(zeros)) * gain if zeros else np.array([gain])
        denz = np.real_if_close(np.poly(poles)) if poles else np.array([1.0])
        n = max(len(numz), len(denz))
        # descending z of degree n-1 -> ascending z^-1 after dividing by z^(n-1)
        num = np.concatenate([np.zeros(n - len(numz)), np.real(numz)])
        den = np.concatenate([np.zeros(n - len(denz)), np.real(denz)])
        return cls(num, den)

    @property
    def num_array(self) -> np.ndarray:
        return np.array(self.num)

    @property
    def den_array(self) -> np.ndarray:
        return np.array(self.den)

    @property
    def order(self) -> int:
        return max(len(self.num), len(self.den)) - 1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.order + 1
        return _pad(self.num_array, n), _pad(self.den_array, n)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num_array)

    def feedthrough(self) -> float:
        return self.num[0]

    def evaluate(self, z: complex) -> complex:
        zi = 1.0 / z
        return np.polyval(self.num[::-1], zi) / np.polyval(self.den[::-1], zi)

    # ------------------------------------------------------------- algebra
    def _coerce(self, other) -> "TransferFunction":
        if isinstance(other, TransferFunction):
            return other
        if np.isscalar(other):
            return TransferFunction([float(other)])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.den == other.den:
            n = max(len(self.num), len(other.num))
            return TransferFunction(_pad(self.num_array, n) + _pad(other.num_array, n), self.den)
        a = np.convolve(self.num_array, other.den_array)
        b = np.convolve(other.num_array, self.den_array)
        n = max(a.size, b.size)
        return TransferFunction(_pad(a, n) + _pad(b, n), np.convolve(self.den_array, other.den_array))

    __radd__ = __add__

    def __neg__(self):
        return TransferFunction(-self.num_array, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return TransferFunction(
            np.convolve(self.num_array, other.num_array), np.convolve(self.den_array, other.den_array)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        num = np.convolve(self.num_array, other.den_array)
        den = _trim(np.convolve(self.den_array, other.num_array))
        # strip common leading z^-1 factors so the quotient stays causal when it can be
        lead = 0
        while lead < min(num.size, den.size) - 1 and num[lead] == 0.0 and den[lead] == 0.0:
            lead += 1
        return TransferFunction(num[lead:], den[lead:])

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __eq__(self, other):
        if not isinstance(other, TransferFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return f"TransferFunction(num={list(self.num)}, den={list(self.den)})"

    def allclose(self, other: "TransferFunction", atol: float = 1e-9) -> bool:
        n = max(self.order, other.order) + 1
        a_num, a_den = _pad(self.num_array, n), _pad(self.den_array, n)
        b_num, b_den = _pad(other.num_array, n), _pad(other.den_array, n)
        # cross-multiplied comparison is insensitive to common stable factors
        lhs = np.convolve(a_num, b_den)
        rhs = np.convolve(b_num, a_den)
        scale = max(1.0, np.abs(lhs).max(), np.abs(rhs).max())
        return bool(np.allclose(lhs, rhs, atol=atol * scale, rtol=0.0))

    # ------------------------------------------------------ realizations
    def to_ss(self):
        """Controllable canonical realization ``(A, B, C, D)`` of dimension ``order``."""
        num, den = self.padded()
        n = num.size - 1
        d = num[0]
        if n == 0:
            return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[d]])
        A = np.zeros((n, n))
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
        B = np.zeros((n, 1))
        B[0, 0] = 1.0
        C = (num[1:] - d * den[1:]).reshape(1, n)
        return A, B, C, np.array([[d]])

    def minreal(self, tol: float = CANCEL_TOL) -> "TransferFunction":
        """Cancel pole/zero pairs by reducing a canonical realization to a minimal one."""
        A, B, C, D = self.to_ss()
        return ss_to_tf(*minimal_realization(A, B, C, D, tol))

    def impulse(self, n: int) -> np.ndarray:
        delta = np.zeros(n)
        delta[0] = 1.0
        return signal.lfilter(self.num_array, self.den_array, delta)

    # ----------------------------------------------------------- JSON
    def to_json(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}

    @classmethod
    def from_json(cls, obj: dict) -> "TransferFunction":
        return cls(obj["num"], obj.get("den", [1.0]))


ONE = TransferFunction([1.0])
ZERO = TransferFunction([0.0])
Z_INV = TransferFunction.delay(1)


# ---------------------------------------------------------------- state space
def _reachable_basis(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the reachable subspace via block Arnoldi."""
    n = A.shape[0]
    basis = np.zeros((n, 0))
    if n == 0:
        return basis
    scale_a = max(np.linalg.norm(A, 2), 1.0)
    block = np.array(B, dtype=float)
    scale = max(np.linalg.norm(block, 2), np.finfo(float).tiny)
    while basis.shape[1] < n:
        for _ in range(2):
            block = block - basis @ (basis.T @ block)
        if block.size == 0:
            break
        U, s, _ = np.linalg.svd(block, full_matrices=False)
        keep = s > tol * scale
        if not keep.any():
            break
        new = U[:, keep]
        basis = np.hstack([basis, new])
        block = A @ new
        scale = scale_a
    return basis[:, :n]


def minimal_realization(A, B, C, D, tol: float = CANCEL_TOL):
    """Remove unreachable then unobservable states (orthogonal projections)."""
    A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, C, D))
    if A.size == 0:
        return np.zeros((0, 0)), np.zeros((0, B.shape[1])), np.zeros((C.shape[0], 0)), D
    V = _reachable_basis(A, B, tol)
    A1, B1, C1 = V.T @ A @ V, V.T @ B, C @ V
    W = _reachable_basis(A1.T, C1.T, tol)
    return W.T @ A1 @ W, W.T @ B1, C1 @ W, D


def ss_to_tf(A, B, C, D) -> TransferFunction:
    A = np.atleast_2d(A)
    if A.size == 0:
        return TransferFunction([float(np.asarray(D).ravel()[0])])
    C, D = np.atleast_2d(np.asarray(C, dtype=float)), np.atleast_2d(np.asarray(D, dtype=float))
    # ss2tf forms poly(A - BC) + (D - 1) den, which cancels away tiny outputs; work at unit scale
    scale = max(np.abs(C).max(initial=0.0), np.abs(D).max(initial=0.0))
    if scale == 0.0:
        return TransferFunction([0.0])
    num, den = signal.ss2tf(A, B, C / scale, D / scale)
    num, den = np.real_if_close(num[0]) * scale, np.real_if_close(den)
    if np.iscomplexobj(num) or np.iscomplexobj(den):
        num, den = np.real(num), np.real(den)
    # poles/zeros at the origin come back as round-off; clear them relative to scale
    num[np.abs(num) < 1e-13 * max(np.abs(num).max(), 1e-300)] = 0.0
    den[np.abs(den) < 1e-13 * np.abs(den).max()] = 0.0
    return TransferFunction(num, den)


# -------------------------------------------------------------- basic ops
def poles(tf: TransferFunction) -> np.ndarray:
    """z-domain poles after pole/zero cancellation (multiplicity preserved)."""
    reduced = tf.minreal()
    _, den = reduced.padded()
    if den.size <= 1:
        return np.zeros(0, dtype=complex)
    return np.roots(den).astype(complex)


def zeros(tf: TransferFunction) -> np.ndarray:
    reduced = tf.minreal()
    num, _ = reduced.padded()
    if not np.any(num):
        return np.zeros(0, dtype=complex)
    return np.roots(num).astype(complex)


def is_stable(tf: TransferFunction, margin: float = STABILITY_MARGIN) -> bool:
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must lie in (0, 1)")
    p = poles(tf)
    return bool(np.all(np.abs(p) <= 1.0 - margin))


def _spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def h2_norm_sq_ss(A, B, C, D) -> float:
    """Squared H2 norm from a state-space realization (Lyapunov)."""
    A = np.atleast_2d(A)
    d2 = float(np.sum(np.asarray(D) ** 2))
    if A.size == 0:
        return d2
    method = "direct" if A.shape[0] <= 40 else "bilinear"
    P = linalg.solve_discrete_lyapunov(A, B @ B.T, method=method)
    return float(np.trace(C @ P @ C.T)) + d2


def impulse_energy(tf: TransferFunction, radius: float | None = None) -> float:
    """Truncated impulse-response energy with an adaptive geometric tail bound."""
    if radius is None:
        p = poles(tf)
        radius = float(np.max(np.abs(p))) if p.size else 0.0
    n = max(64, 2 * (tf.order + 1))
    while True:
        h = tf.impulse(2 * n)
        head = float(h[:n] @ h[:n])
        tail = float(h[n:] @ h[n:])
        total = head + tail
        if total == 0.0:
            return 0.0
        rn = radius ** (2 * n)
        bound = tail * rn / (1.0 - rn) if rn < 1.0 else math.inf
        if bound < H2_TAIL_TOL * total or (radius == 0.0 and 2 * n > tf.order + 1):
            return total
        if n > 1 << 24:
            raise StabcodeError("impulse response decays too slowly for the H2 tail bound")
        n *= 2


def h2_norm_sq(tf: TransferFunction, margin: float = STABILITY_MARGIN) -> float:
    """Squared H2 norm (impulse-response energy) of a stable transfer function.

    Computed from a Lyapunov solve and cross-checked against the truncated
    impulse sum; disagreement beyond relative 1e-8 raises.
    """
    reduced = tf.minreal()
    _, den = reduced.padded()
    p = np.roots(den) if den.size > 1 else np.zeros(0)
    radius = float(np.max(np.abs(p))) if p.size else 0.0
    if radius > 1.0 - margin:
        raise UnstableSystem(f"norm undefined: pole radius {radius:.6g} is outside the stability margin")
    lyap = h2_norm_sq_ss(*reduced.to_ss())
    summed = impulse_energy(reduced, radius)
    if abs(lyap - summed) > H2_AGREEMENT * max(abs(summed), 1e-300) and abs(lyap - summed) > 1e-15:
        raise StabcodeError(f"H2 cross-check failed: Lyapunov {lyap!r} vs impulse sum {summed!r}")
    return summed


# ---------------------------------------------------------------- the plant
@dataclass(frozen=True)
class PlantModel:
    """Two-input (d, u) two-output (e, y) LTI plant given entrywise."""

    p11: TransferFunction
    p12: TransferFunction
    p21: TransferFunction
    p22: TransferFunction

    @classmethod
    def from_output_disturbance(cls, g: TransferFunction) -> "PlantModel":
        """``y = g (u + d)``, ``e = y`` -- the structure of the worked example."""
        return cls(g, g, g, g)

    @functools.cached_property
    def realization(self):
        """Joint minimal realization; inputs ``[d, u]``, outputs ``[e, y]``."""
        blocks = [(self.p11, 0, 0), (self.p12, 1, 0), (self.p21, 0, 1), (self.p22, 1, 1)]
        mats = [tf.to_ss() for tf, _, _ in blocks]
        n = sum(m[0].shape[0] for m in mats)
        A = np.zeros((n, n))
        B = np.zeros((n, 2))
        C = np.zeros((2, n))
        D = np.zeros((2, 2))
        off = 0
        for (tf, i_in, i_out), (a, b, c, d) in zip(blocks, mats):
            k = a.shape[0]
            A[off:off + k, off:off + k] = a
            B[off:off + k, i_in] = b[:, 0]
            C[i_out, off:off + k] = c[0]
            D[i_out, i_in] = d[0, 0]
            off += k
        return minimal_realization(A, B, C, D)

    def to_json(self) -> dict:
        return {name: getattr(self, name).to_json() for name in ("p11", "p12", "p21", "p22")}

    @classmethod
    def from_json(cls, obj: dict) -> "PlantModel":
        if "g" in obj:
            return cls.from_output_disturbance(TransferFunction.from_json(obj["g"]))
        return cls(*(TransferFunction.from_json(obj[k]) for k in ("p11", "p12", "p21", "p22")))


@dataclass(frozen=True)
class LoopFilters:
    """The coder filters: ``u = F w`` and ``v = L_w z^-1 w + L_y y``."""

    f: TransferFunction
    l_w: TransferFunction
    l_y: TransferFunction

    @classmethod
    def zero(cls) -> "LoopFilters":
        return cls(ZERO, ZERO, ZERO)

    def to_json(self) -> dict:
        return {"f": self.f.to_json(), "l_w": self.l_w.to_json(), "l_y": self.l_y.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "LoopFilters":
        return cls(*(TransferFunction.from_json(obj[k]) for k in ("f", "l_w", "l_y")))


def loop_constant_term(plant: PlantModel, filters: LoopFilters) -> float:
    """Constant term of ``1 - L_w z^-1 - P22 F L_y``; zero means the loop is ill-posed."""
    return 1.0 - plant.p22.feedthrough() * filters.f.feedthrough() * filters.l_y.feedthrough()


# ------------------------------------------------------ closed-loop structure
INPUTS = ("d", "q")
OUTPUTS = ("e", "y", "v", "w", "u")


@dataclass(frozen=True)
class Interconnection:
    """State-space model of the loop; inputs ``(d, q)``, outputs ``(e, y, v, w, u)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    blocks: dict = field(default_factory=dict)

    def path(self, src: str, dst: str):
        j, i = INPUTS.index(src), OUTPUTS.index(dst)
        return self.A, self.B[:, [j]], self.C[[i], :], self.D[[i]][:, [j]]

    def path_tf(self, src: str, dst: str) -> TransferFunction:
        return ss_to_tf(*minimal_realization(*self.path(src, dst)))

    def path_h2(self, src: str, dst: str) -> float:
        return h2_norm_sq_ss(*minimal_realization(*self.path(src, dst)))


def interconnect(plant: PlantModel, filters: LoopFilters) -> Interconnection:
    Ap, Bp, Cp, Dp = plant.realization
    f = filters.f.minreal().to_ss()
    lwd = (filters.l_w * Z_INV).minreal().to_ss()
    ly = filters.l_y.minreal().to_ss()
    dims = [Ap.shape[0], f[0].shape[0], lwd[0].shape[0], ly[0].shape[0]]
    n = sum(dims)
    sl = np.cumsum([0] + dims)
    P, Fs, W, Ls = (slice(sl[i], sl[i + 1]) for i in range(4))

    def sig():
        return np.zeros(n), np.zeros(2)

    ded, deu, dyd, dyu = Dp[0, 0], Dp[0, 1], Dp[1, 0], Dp[1, 1]
    df_, dl = f[3][0, 0], ly[3][0, 0]
    alpha = 1.0 - dl * dyu * df_
    if abs(alpha) < 1e-12:
        raise IllPosedLoop("ill-posed loop: 1 - L_w z^-1 - P22 F L_y has zero constant term")

    w_x, w_dq = sig()
    w_x[P] = dl * Cp[1]
    w_x[Fs] = dl * dyu * f[2][0]
    w_x[W] = lwd[2][0]
    w_x[Ls] = ly[2][0]
    w_dq[:] = [dl * dyd, 1.0]
    w_x, w_dq = w_x / alpha, w_dq / alpha

    u_x, u_dq = df_ * w_x, df_ * w_dq
    u_x[Fs] += f[2][0]
    y_x, y_dq = dyu * u_x, dyu * u_dq
    y_x[P] += Cp[1]
    y_dq[0] += dyd
    e_x, e_dq = deu * u_x, deu * u_dq
    e_x[P] += Cp[0]
    e_dq[0] += ded
    v_x, v_dq = w_x.copy(), w_dq - np.array([0.0, 1.0])

    A = np.zeros((n, n))
    B = np.zeros((n, 2))
    A[P, P] = Ap
    A[P] += np.outer(Bp[:, 1], u_x)
    B[P] += np.outer(Bp[:, 1], u_dq)
    B[P, 0] += Bp[:, 0]
    A[Fs, Fs] = f[0]
    A[Fs] += np.outer(f[1][:, 0], w_x)
    B[Fs] += np.outer(f[1][:, 0], w_dq)
    A[W, W] = lwd[0]
    A[W] += np.outer(lwd[1][:, 0], w_x)
    B[W] += np.outer(lwd[1][:, 0], w_dq)
    A[Ls, Ls] = ly[0]
    A[Ls] += np.outer(ly[1][:, 0], y_x)
    B[Ls] += np.outer(ly[1][:, 0], y_dq)

    C = np.vstack([e_x, y_x, v_x, w_x, u_x])
    D = np.vstack([e_dq, y_dq, v_dq, w_dq, u_dq])
    return Interconnection(A, B, C, D, {"plant": P, "f": Fs, "l_w": W, "l_y": Ls})


@dataclass(frozen=True)
class ClosedLoopMaps:
    """The closed-loop maps entering the SNR and performance formulas."""

    s: TransferFunction
    k: TransferFunction
    l_y_p21_s: TransferFunction
    p12_f_s: TransferFunction
    nominal: TransferFunction
    internally_stable: bool
    unstable_paths: tuple[str, ...] = ()
    norms: dict = field(default_factory=dict, compare=False)

    def _norm(self, key: str) -> float:
        if not self.internally_stable:
            raise UnstableSystem("norm undefined: loop is not internally stable " f"({', '.join(self.unstable_paths)})")
        return self.norms[key]

    @property
    def s_minus_one_norm_sq(self) -> float:
        return self._norm("s_minus_one")

    @property
    def ly_p21_s_norm_sq(self) -> float:
        return self._norm("ly_p21_s")

    @property
    def p12_f_s_norm_sq(self) -> float:
        return self._norm("p12_f_s")

    @property
    def nominal_norm_sq(self) -> float:
        return self._norm("nominal")

    def to_json(self) -> dict:
        out = {
            "s": self.s.to_json(),
            "k": self.k.to_json(),
            "l_y_p21_s": self.l_y_p21_s.to_json(),
            "p12_f_s": self.p12_f_s.to_json(),
            "nominal": self.nominal.to_json(),
            "internally_stable": self.internally_stable,
            "unstable_paths": list(self.unstable_paths),
        }
        if self.internally_stable:
            out["norms"] = dict(self.norms)
        return out


def unstable_paths(ic: Interconnection, margin: float = STABILITY_MARGIN) -> list[str]:
    bad = []
    for src in INPUTS:
        for dst in OUTPUTS:
            a, _, _, _ = minimal_realization(*ic.path(src, dst))
            if _spectral_radius(a) > 1.0 - margin:
                bad.append(f"{src}->{dst}")
    return bad


def closed_loop_maps(plant: PlantModel, filters: LoopFilters, margin: float = STABILITY_MARGIN) -> ClosedLoopMaps:
    """S, K, L_y P21 S, P12 F S and the nominal disturbance map for the given filters."""
    ic = interconnect(plant, filters)
    stable = _spectral_radius(ic.A) <= 1.0 - margin
    bad = () if stable else tuple(unstable_paths(ic, margin) or ["hidden mode"])
    s = ic.path_tf("q", "w")
    k = filters.f * filters.l_y / (ONE - filters.l_w * Z_INV)
    maps = dict(
        s=s,
        k=k.minreal() if not k.is_zero else ZERO,
        l_y_p21_s=ic.path_tf("d", "v"),
        p12_f_s=ic.path_tf("q", "e"),
        nominal=ic.path_tf("d", "e"),
    )
    norms = {}
    if stable:
        norms = {
            "s_minus_one": ic.path_h2("q", "v"),
            "ly_p21_s": ic.path_h2("d", "v"),
            "p12_f_s": ic.path_h2("q", "e"),
            "nominal": ic.path_h2("d", "e"),
        }
    return ClosedLoopMaps(**maps, internally_stable=stable, unstable_paths=bad, norms=norms)


def min_snr_for_stability(plant: PlantModel, tol: float = 1e-9) -> float:
    """Infimum of ``||S - 1||^2`` over stabilizing loops: ``prod |p_i|^2 - 1`` over unstable poles of P22."""
    p = poles(plant.p22)
    mags = np.abs(p)
    if np.any(np.abs(mags - 1.0) <= tol):
        raise MarginallyStable("marginally stable, infimum not attained: P22 has a pole on the unit circle")
    unstable = mags[mags > 1.0]
    return float(np.prod(unstable**2) - 1.0) if unstable.size else 0.0


def as_tf(obj) -> TransferFunction:
    if isinstance(obj, TransferFunction):
        return obj
    if isinstance(obj, dict):
        return TransferFunction.from_json(obj)
    if isinstance(obj, (int, float)):
        return TransferFunction([float(obj)])
    if isinstance(obj, Sequence):
        return TransferFunction(obj)
    raise TypeError(f"cannot interpret {obj!r} as a transfer function")
