"""Closed-form mathematics of (k, k') stabilizing codes.

SNR values are linear unless a name ends in ``_db``; rates are in bits per
sample.  Norms are squared H2 norms.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass, field

from .errors import InfeasibleDesign, UnstableSystem
from .lti import ClosedLoopMaps, LoopFilters, PlantModel, closed_loop_maps

PLAN_EPSILON = 1e-6
SWEEP_COLUMNS = ("gamma_db", "ell", "snr_db", "eta", "family", "k", "k_prime", "feasible")


class Family(str, enum.Enum):
    INDEPENDENT = "independent"
    MULTIPLE_DESCRIPTIONS = "md"
    REPETITION = "repetition"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        aliases = {
            "independent": cls.INDEPENDENT,
            "independentencodings": cls.INDEPENDENT,
            "md": cls.MULTIPLE_DESCRIPTIONS,
            "multipledescriptions": cls.MULTIPLE_DESCRIPTIONS,
            "repetition": cls.REPETITION,
        }
        key = str(value).replace("_", "").replace("-", "").lower()
        if key not in aliases:
            raise ValueError(f"unknown code family {value!r}")
        return aliases[key]


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def from_db(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def gaussian_rate(snr: float) -> float:
    """Rate ``0.5 log2(1 + snr)`` of a Gaussian description at the given SNR."""
    return 0.5 * math.log2(1.0 + snr)


def _check_rho(rho: float, k: int):
    if rho > 0:
        raise ValueError(f"rho={rho} must be <= 0")
    if k >= 2 and not rho > -1.0 / (k - 1):
        raise ValueError(f"rho={rho} outside admissible range (-1/(k-1), 0] for k={k}")
    if k < 2 and rho != 0:
        raise ValueError("a single description has no pairwise correlation")


@dataclass(frozen=True)
class CodeSpec:
    k: int
    k_prime: int
    family: Family
    sigma_sq: float
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not 1 <= self.k_prime <= self.k:
            raise ValueError(f"need 1 <= k' <= k, got k={self.k}, k'={self.k_prime}")
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")
        if self.family is Family.INDEPENDENT and self.rho != 0:
            raise ValueError("independent encodings have rho = 0")
        if self.family is Family.MULTIPLE_DESCRIPTIONS:
            _check_rho(self.rho, self.k)

    def combined_variance(self, ell: int) -> float:
        if self.family is Family.REPETITION:
            return self.sigma_sq
        return combined_noise_variance(self.sigma_sq, ell, self.rho)

    def to_json(self) -> dict:
        return {"k": self.k, "k_prime": self.k_prime, "family": self.family.value,
                "sigma_sq": self.sigma_sq, "rho": self.rho}

    @classmethod
    def from_json(cls, obj: dict) -> "CodeSpec":
        return cls(int(obj["k"]), int(obj["k_prime"]), Family.parse(obj["family"]),
                   float(obj["sigma_sq"]), float(obj.get("rho", 0.0)))


@dataclass(frozen=True)
class DesignPoint:
    gamma: float
    s_minus_one_norm_sq: float
    ly_p21_s_norm_sq: float
    p12_f_s_norm_sq: float
    nominal_norm_sq: float
    sigma_v_sq: float
    sigma_q_sq: float

    def __post_init__(self):
        if not self.gamma > self.s_minus_one_norm_sq:
            raise InfeasibleDesign(
                f"gamma={self.gamma:g} must exceed ||S-1||^2={self.s_minus_one_norm_sq:g}"
            )
        if not math.isclose(self.sigma_v_sq, self.gamma * self.sigma_q_sq, rel_tol=1e-9):
            raise ValueError("sigma_v_sq must equal gamma * sigma_q_sq")

    @classmethod
    def from_norms(cls, gamma, s_minus_one_norm_sq, ly_p21_s_norm_sq, p12_f_s_norm_sq, nominal_norm_sq):
        """Back out the coding-noise variance that yields ``gamma`` with these norms."""
        gap = gamma - s_minus_one_norm_sq
        if not gap > 0:
            raise InfeasibleDesign(f"gamma={gamma:g} must exceed ||S-1||^2={s_minus_one_norm_sq:g}")
        sq = ly_p21_s_norm_sq / gap
        return cls(gamma, s_minus_one_norm_sq, ly_p21_s_norm_sq, p12_f_s_norm_sq,
                   nominal_norm_sq, gamma * sq, sq)

    @classmethod
    def from_maps(cls, maps: ClosedLoopMaps, gamma: float) -> "DesignPoint":
        return cls.from_norms(gamma, maps.s_minus_one_norm_sq, maps.ly_p21_s_norm_sq,
                              maps.p12_f_s_norm_sq, maps.nominal_norm_sq)

    def to_json(self) -> dict:
        return dict(self.__dict__)


# ------------------------------------------------------------------ SNR, variance
def gamma_of(maps: ClosedLoopMaps, sigma_q_sq: float) -> float:
    if not sigma_q_sq > 0:
        raise ValueError("sigma_q_sq must be positive")
    if not maps.internally_stable:
        raise UnstableSystem("closed loop is not internally stable: " + ", ".join(maps.unstable_paths))
    return maps.s_minus_one_norm_sq + maps.ly_p21_s_norm_sq / sigma_q_sq


def performance_sigma_e_sq(point: DesignPoint) -> float:
    return point.nominal_norm_sq + point.p12_f_s_norm_sq * point.sigma_q_sq


def max_sigma_indep(k_prime: int, point: DesignPoint) -> float:
    """Largest per-description noise for which any ``k_prime`` averaged encodings still stabilize."""
    s, g = point.s_minus_one_norm_sq, point.gamma
    if not g > s:
        raise InfeasibleDesign(f"gamma={g:g} must exceed ||S-1||^2={s:g}")
    if s == 0:
        return math.inf
    return g * k_prime * point.ly_p21_s_norm_sq / (s * (g - s))


def max_sigma_md(k_prime: int, rho: float, point: DesignPoint, k: int | None = None) -> float:
    _check_rho(rho, k if k is not None else max(k_prime, 2))
    if not 1 + (k_prime - 1) * rho > 0:
        raise ValueError("1 + (k'-1) rho must be positive")
    return max_sigma_indep(k_prime, point) / (1.0 + (k_prime - 1) * rho)


def combined_noise_variance(sigma_sq: float, ell: int, rho: float) -> float:
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return sigma_sq / ell * (1.0 + (ell - 1) * rho)


# ------------------------------------------------------------------ rates, efficiency
def sum_rate_lower_bound_indep(k: int, k_prime: int, s_minus_one_norm_sq: float) -> float:
    if not 1 <= k_prime <= k:
        raise ValueError("need 1 <= k' <= k")
    return 0.5 * k * math.log2(1.0 + s_minus_one_norm_sq / k_prime)


def efficiency(k: int, gamma_single: float, gamma_all: float) -> float:
    """Single-description-equivalent rate over sum rate; clamped to [0, 1] with a warning."""
    if not (gamma_single > 0 and gamma_all > 0):
        raise ValueError("SNR values must be positive")
    eta = math.log2(1.0 + gamma_all) / (k * math.log2(1.0 + gamma_single))
    if eta > 1.0 or eta < 0.0:
        warnings.warn(f"efficiency {eta:.6g} outside [0, 1]; clamped", RuntimeWarning, stacklevel=2)
        eta = min(max(eta, 0.0), 1.0)
    return eta


def efficiency_min_sum_rate(k: int, k_prime: int, s_minus_one_norm_sq: float) -> float:
    """Efficiency of a minimum sum-rate code; the ``||S-1||^2 = 0`` limit is 1."""
    if not 1 <= k_prime <= k:
        raise ValueError("need 1 <= k' <= k")
    x = s_minus_one_norm_sq
    if x < 0:
        raise ValueError("norm must be non-negative")
    if x < 1e-8:
        # series about 0; also avoids 0/0 on subnormal inputs
        return 1.0 - (k - 1) * x / (2 * k_prime)
    return math.log1p(k * x / k_prime) / (k * math.log1p(x / k_prime))


def performance_per_received(ell: int, k_prime: int, point: DesignPoint) -> float:
    """Output variance when ``ell`` descriptions of a minimum sum-rate code arrive."""
    if ell < k_prime:
        raise InfeasibleDesign("received SNR is below the stabilization threshold; the loop has no finite error variance")
    s, g = point.s_minus_one_norm_sq, point.gamma
    if s == 0:
        return math.inf
    excess = k_prime * g * point.p12_f_s_norm_sq * point.ly_p21_s_norm_sq / (ell * s * (g - s))
    return point.nominal_norm_sq + excess


def md_sum_rate(k: int, k_prime: int, sigma_sq: float, rho: float) -> float:
    """Rate of a symmetric Gaussian MD code for a unit-variance source (formula as printed)."""
    if k >= 2 and not rho > -1.0 / (k - 1):
        raise ValueError(f"rho={rho} at or below -1/(k-1)")
    if not rho < 1.0 or not sigma_sq > 0:
        raise ValueError("need rho < 1 and sigma_sq > 0")
    first = math.log2((k_prime + sigma_sq * (1 + (k_prime - 1) * rho)) / (sigma_sq * (1 - rho)))
    second = math.log2((1 - rho) / (1 + (k - 1) * rho))
    return first / (2 * k_prime) + second / (2 * k)


# ------------------------------------------------------------------ planning
def snr_ladder(gamma: float, k: int, family: Family, rho: float = 0.0) -> dict[int, float]:
    """SNR of the combined reconstruction from ``ell`` descriptions when all ``k`` give ``gamma``."""
    family = Family.parse(family)
    if family is Family.REPETITION:
        return {ell: gamma for ell in range(1, k + 1)}
    r = rho if family is Family.MULTIPLE_DESCRIPTIONS else 0.0
    full = 1.0 + (k - 1) * r
    return {ell: gamma * ell * full / (k * (1.0 + (ell - 1) * r)) for ell in range(1, k + 1)}


@dataclass(frozen=True)
class CodePlan:
    spec: CodeSpec
    point: DesignPoint
    ladder: dict[int, float] = field(default_factory=dict)

    @property
    def rate_per_description(self) -> float:
        return gaussian_rate(self.ladder[1])

    @property
    def sum_rate(self) -> float:
        return self.spec.k * self.rate_per_description

    @property
    def efficiency(self) -> float:
        return efficiency(self.spec.k, self.ladder[1], self.ladder[self.spec.k])

    def to_json(self) -> dict:
        return {
            "code": self.spec.to_json(),
            "design_point": self.point.to_json(),
            "ladder": {str(ell): snr for ell, snr in self.ladder.items()},
            "rate_per_description": self.rate_per_description,
            "sum_rate": self.sum_rate,
            "efficiency": self.efficiency,
        }


def plan_point(point: DesignPoint, k: int, k_prime: int, family, rho: float = 0.0,
               epsilon: float = PLAN_EPSILON) -> CodePlan:
    """Size the per-description noise so that all ``k`` descriptions reproduce the design SNR."""
    family = Family.parse(family)
    if not 1 <= k_prime <= k:
        raise InfeasibleDesign(f"need 1 <= k' <= k, got k={k}, k'={k_prime}")
    if family is Family.MULTIPLE_DESCRIPTIONS:
        if k < 2:
            raise InfeasibleDesign("multiple descriptions need k >= 2")
        _check_rho(rho, k)
    elif rho != 0:
        raise InfeasibleDesign(f"rho must be 0 for the {family.value} family")
    if family is Family.REPETITION:
        sigma_sq = point.sigma_q_sq
    else:
        sigma_sq = k * point.sigma_q_sq / (1.0 + (k - 1) * rho)
    ladder = snr_ladder(point.gamma, k, family, rho)
    need = point.s_minus_one_norm_sq + epsilon
    if ladder[k_prime] < need:
        raise InfeasibleDesign(
            f"({k},{k_prime}) {family.value} code infeasible at gamma={point.gamma:g}: "
            f"SNR with {k_prime} descriptions is {ladder[k_prime]:.6g} < ||S-1||^2 + eps = {need:.6g}"
        )
    return CodePlan(CodeSpec(k, k_prime, family, sigma_sq, rho), point, ladder)


def plan_code(plant: PlantModel, filters: LoopFilters, gamma: float, k: int, k_prime: int,
              family, rho: float = 0.0, epsilon: float = PLAN_EPSILON) -> CodePlan:
    maps = closed_loop_maps(plant, filters)
    if not maps.internally_stable:
        raise InfeasibleDesign("filters do not stabilize the plant: " + ", ".join(maps.unstable_paths))
    return plan_point(DesignPoint.from_maps(maps, gamma), k, k_prime, family, rho, epsilon)


def feasibility_threshold(k: int, k_prime: int, s_minus_one_norm_sq: float, family=Family.INDEPENDENT,
                          rho: float = 0.0, tol: float = 1e-6, max_iterations: int = 200) -> float:
    """Smallest design SNR whose ``k_prime``-description SNR reaches ``||S-1||^2``, by bisection."""
    family = Family.parse(family)
    s = s_minus_one_norm_sq

    def margin(g):
        return snr_ladder(g, k, family, rho)[k_prime] - s

    lo = s
    if margin(lo) >= 0:
        return lo
    hi = max(2.0 * lo, 1.0)
    while margin(hi) < 0:
        hi *= 2.0
    for _ in range(max_iterations):
        if hi - lo <= tol * 1e-3:
            break
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if margin(mid) >= 0 else (mid, hi)
    return hi


def design_sweep(s_minus_one_norm_sq: float, gamma_db_grid, codes) -> list[dict]:
    """Ladder and efficiency rows for each ``(k, k', family, rho)`` in ``codes`` over a dB grid."""
    rows = []
    for k, k_prime, family, rho in codes:
        family = Family.parse(family)
        for g_db in gamma_db_grid:
            g = from_db(g_db)
            ladder = snr_ladder(g, k, family, rho)
            eta = efficiency(k, ladder[1], ladder[k])
            feasible = g > s_minus_one_norm_sq and ladder[k_prime] >= s_minus_one_norm_sq + PLAN_EPSILON
            for ell, snr in ladder.items():
                rows.append({"gamma_db": float(g_db), "ell": ell, "snr_db": to_db(snr), "eta": eta,
                             "family": family.value, "k": k, "k_prime": k_prime, "feasible": int(feasible)})
    return rows


def sweep_to_csv(rows, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in SWEEP_COLUMNS})
    return buf.getvalue()
