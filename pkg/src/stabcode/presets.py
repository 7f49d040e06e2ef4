"""Ready-made plants and coding schemes for the reference experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ErasureChannel
from .design import CodeSpec, DesignPoint, Family, plan_point
from .errors import InfeasibleDesign
from .lti import LoopFilters, PlantModel, TransferFunction, closed_loop_maps
from .quantization import build_index_assignment, md_error_moments
from .simulation import MODE_QUANTIZER, SimConfig, run_closed_loop
from .synthesis import SynthesisConfig, synthesize_filters


def reference_plant() -> PlantModel:
    """G(z) = 0.165 / ((z - 2)(z - 0.5789)) with the disturbance at the plant input and e = y."""
    g = TransferFunction.from_roots([], [2.0, 0.5789], 0.165)
    return PlantModel.from_output_disturbance(g)


@dataclass(frozen=True)
class Scheme:
    """A synthesized loop plus a sized coder, ready to be simulated."""

    name: str
    config: SimConfig
    point: DesignPoint
    ladder: dict

    def at(self, loss_probability: float, **overrides) -> SimConfig:
        ch = ErasureChannel(loss_probability, self.config.channel.rng_seed)
        return replace(self.config, channel=ch, **overrides)


def _design(plant, gamma, synthesis: dict | None):
    report = synthesize_filters(plant, SynthesisConfig(gamma, **(synthesis or {})))
    point = DesignPoint.from_norms(gamma, report.s_minus_one_norm_sq, report.ly_p21_s_norm_sq,
                                   report.p12_f_s_norm_sq, report.nominal_norm_sq)
    return report.filters, point


def _base(plant, filters, code, name, seed, horizon, **kw) -> SimConfig:
    return SimConfig(plant=plant, filters=filters, code=code, channel=ErasureChannel(0.0, seed + 2),
                     horizon=horizon, disturbance_seed=seed, dither_seed=seed + 1, name=name, **kw)


def independent_scheme(plant, gamma, k, k_prime, *, seed=0, horizon=1_000_000, synthesis=None,
                       name=None) -> Scheme:
    """Independent encodings whose ``k`` averaged descriptions give SNR ``gamma``."""
    filters, point = _design(plant, gamma, synthesis)
    plan = plan_point(point, k, k_prime, Family.INDEPENDENT)
    step = math.sqrt(12.0 * plan.spec.sigma_sq)
    cfg = _base(plant, filters, plan.spec, name or f"indep({k},{k_prime})", seed, horizon, step=step)
    return Scheme(cfg.name, cfg, point, plan.ladder)


def md_scheme(plant, gamma, k, k_prime, nesting_factor, *, seed=0, horizon=1_000_000, synthesis=None,
              name=None) -> Scheme:
    """Nested-lattice MD code whose central reconstruction gives SNR ``gamma``.

    The ladder is the exact per-``ell`` prediction for the constructed table; it
    is not forced to meet the ``k_prime`` requirement, so callers should check it.
    """
    filters, point = _design(plant, gamma, synthesis)
    central = math.sqrt(12.0 * point.sigma_q_sq)
    ia = build_index_assignment(nesting_factor, k, central)
    mom = md_error_moments(ia, math.sqrt(point.sigma_v_sq))
    sigma_sq = float(np.mean(np.diag(mom["second_moment"])))
    rho = max(mom["rho"], -1.0 / (k - 1) + 1e-9)
    code = CodeSpec(k, k_prime, Family.MULTIPLE_DESCRIPTIONS, sigma_sq, rho)
    cfg = _base(plant, filters, code, name or f"md({k},{k_prime},N={nesting_factor})", seed, horizon,
                index_assignment=ia)
    ladder = {ell: point.sigma_v_sq / m for ell, m in mom["mse_per_ell"].items()}
    return Scheme(cfg.name, cfg, point, ladder)


def repetition_step_for_snr(plant: PlantModel, filters: LoopFilters, snr: float) -> float:
    """Step giving per-copy SNR ``snr`` in the loop; needs ``snr > ||S-1||^2``."""
    maps = closed_loop_maps(plant, filters)
    s1 = maps.s_minus_one_norm_sq
    if snr <= s1:
        raise InfeasibleDesign(f"repetition copy SNR {snr:g} cannot exceed the loop floor ||S-1||^2={s1:g}")
    return math.sqrt(12.0 * maps.ly_p21_s_norm_sq / (snr - s1))


def _pilot_entropy(base: SimConfig, step: float) -> float:
    m = run_closed_loop(replace(base, step=step))
    return m.entropy_per_description if not m.diverged else math.nan


def calibrate_repetition_step(base: SimConfig, target_entropy: float, *, pilot_horizon: int = 200_000,
                              tol: float = 1e-3, max_iterations: int = 60) -> float:
    """Bisection (in log step) on seeded pilot runs for a per-copy entropy target.

    Entropy falls as the step grows, but only down to the value reached as the
    loop SNR approaches its floor; targets below that floor are infeasible.
    """
    pilot = replace(base, horizon=pilot_horizon, channel=ErasureChannel(0.0, base.channel.rng_seed))
    ref = repetition_step_for_snr(base.plant, base.filters, closed_loop_maps(base.plant, base.filters).s_minus_one_norm_sq * 1.5)
    lo, hi = math.log(ref) - 8.0, math.log(ref) + 12.0
    h_hi = _pilot_entropy(pilot, math.exp(hi))
    if target_entropy < h_hi - tol:
        raise InfeasibleDesign(
            f"repetition cannot reach {target_entropy:.4f} bits per copy in this loop; "
            f"its floor is about {h_hi:.4f} bits (loop SNR pinned above ||S-1||^2)"
        )
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        h = _pilot_entropy(pilot, math.exp(mid))
        if abs(h - target_entropy) <= tol / 4 or hi - lo < 1e-6:
            return math.exp(mid)
        lo, hi = (mid, hi) if h > target_entropy else (lo, mid)
    return math.exp(0.5 * (lo + hi))


def repetition_scheme(reference: Scheme, *, mode: str = "rate", copies: int | None = None,
                      target: float | None = None, name=None, **calibration) -> Scheme:
    """Repetition baseline on the reference scheme's filters.

    ``mode="rate"`` matches per-copy entropy to the reference's per-description
    entropy (``target`` overrides it); ``mode="snr"`` pins the per-copy SNR.
    """
    base = reference.config
    k = copies or base.code.k
    plant, filters = base.plant, base.filters
    code0 = CodeSpec(k, 1, Family.REPETITION, 1.0)
    cfg = replace(base, code=code0, index_assignment=None, name=name or f"repetition({k})",
                  mode=MODE_QUANTIZER, step=1.0)
    if mode == "snr":
        if target is None:
            raise ValueError("snr mode needs a target SNR")
        step = repetition_step_for_snr(plant, filters, target)
    elif mode == "rate":
        if target is None:
            ref = run_closed_loop(replace(base, horizon=calibration.get("pilot_horizon", 200_000)))
            target = ref.entropy_per_description
        step = calibrate_repetition_step(cfg, target, **calibration)
    else:
        raise ValueError("mode must be 'rate' or 'snr'")
    sigma_sq = step**2 / 12.0
    cfg = replace(cfg, step=step, code=CodeSpec(k, 1, Family.REPETITION, sigma_sq))
    maps = closed_loop_maps(plant, filters)
    point = DesignPoint.from_norms(maps.s_minus_one_norm_sq + maps.ly_p21_s_norm_sq / sigma_sq,
                                   maps.s_minus_one_norm_sq, maps.ly_p21_s_norm_sq,
                                   maps.p12_f_s_norm_sq, maps.nominal_norm_sq)
    return Scheme(cfg.name, cfg, point, {ell: point.gamma for ell in range(1, k + 1)})
