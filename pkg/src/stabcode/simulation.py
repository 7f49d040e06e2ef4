"""Monte Carlo simulation of the coded feedback loop.

Per sample: plant output from the disturbance, coder input
``v = L_y y + L_w (previous w)``, quantization into ``k`` descriptions,
erasures, decoding into ``w`` and plant input ``u = F w``.  The inner loop is
compiled with numba; all random streams are generated up front from seeds.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import rng
from .channel import ErasureChannel
from .design import CodeSpec, Family, to_db
from .errors import InfeasibleDesign
from .lti import LoopFilters, PlantModel, TransferFunction, closed_loop_maps
from .quantization import IndexAssignment, empirical_entropy, md_error_moments

RESULT_COLUMNS = ("scheme", "family", "k", "k_prime", "loss_prob", "sigma_e_sq_db", "snr_all_db",
                  "entropy_bits", "sum_rate_bits", "diverged")

MODE_QUANTIZER = "quantizer"
MODE_GAUSSIAN = "gaussian"
_FAMILY_CODE = {Family.INDEPENDENT: 0, Family.REPETITION: 1, Family.MULTIPLE_DESCRIPTIONS: 2}


@dataclass(frozen=True)
class SimConfig:
    plant: PlantModel
    filters: LoopFilters
    code: CodeSpec
    step: float | None = None
    index_assignment: IndexAssignment | None = None
    channel: ErasureChannel = field(default_factory=lambda: ErasureChannel(0.0))
    horizon: int = 1_000_000
    disturbance_seed: int = 0
    dither_seed: int = 0
    divergence_threshold: float = 1e9
    burn_in: int = 1000
    mode: str = MODE_QUANTIZER
    zero_reception: str = "zero"
    min_received: int = 0
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.divergence_threshold > 0:
            raise ValueError("divergence_threshold must be positive")
        if self.mode not in (MODE_QUANTIZER, MODE_GAUSSIAN):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.zero_reception not in ("zero", "hold"):
            raise ValueError("zero_reception must be 'zero' or 'hold'")
        if not 0 <= self.min_received <= self.code.k:
            raise ValueError("min_received must lie in [0, k]")
        if self.mode == MODE_QUANTIZER:
            if self.code.family is Family.MULTIPLE_DESCRIPTIONS:
                if self.index_assignment is None or self.index_assignment.k != self.code.k:
                    raise ValueError("multiple descriptions need an index assignment with matching k")
            elif not (self.step and self.step > 0):
                raise ValueError("quantizer mode needs a positive step")

    @property
    def effective_burn_in(self) -> int:
        return min(self.burn_in, self.horizon // 2)


@dataclass(frozen=True)
class SimMetrics:
    sigma_e_sq_hat: float
    snr_per_ell: dict
    gamma_hat: float
    sigma_v_sq_hat: float
    sigma_q_sq_hat: float
    rho_hat: float
    entropy_per_description: float
    sum_rate_hat: float
    mean_received: float
    diverged: bool
    samples_used: int
    error: str = ""

    @property
    def snr_all(self) -> float:
        return self.snr_per_ell[max(self.snr_per_ell)] if self.snr_per_ell else math.nan

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["snr_per_ell"] = {str(k): v for k, v in self.snr_per_ell.items()}
        return out


# ------------------------------------------------------------------ kernel
@numba.njit(cache=True)
def _mv(A, x, out):
    for i in range(A.shape[0]):
        s = 0.0
        for j in range(A.shape[1]):
            s += A[i, j] * x[j]
        out[i] = s


@numba.njit(cache=True)
def _dot(c, x):
    s = 0.0
    for i in range(x.shape[0]):
        s += c[i] * x[i]
    return s


@numba.njit(cache=True)
def _step_siso(A, b, x, u, tmp):
    _mv(A, x, tmp)
    for i in range(x.shape[0]):
        x[i] = tmp[i] + b[i] * u


@numba.njit(cache=True)
def _kernel(Ap, Bp, Cp, Dp, xp, Af, bf, cf, df, Al, bl, cl, dl, Aw, bw, cw, y_first,
            d, mode, k, step, dith, table, nest, side_step, gnoise, mask, hold, burn, thr, symbols):
    n = d.shape[0]
    xf = np.zeros(Af.shape[0])
    xl = np.zeros(Al.shape[0])
    xw = np.zeros(Aw.shape[0])
    tp = np.zeros(xp.shape[0])
    tf_ = np.zeros(xf.shape[0])
    tl = np.zeros(xl.shape[0])
    tw = np.zeros(xw.shape[0])
    half = nest // 2
    errs = np.zeros(k)
    M = np.zeros((k, k))
    e2 = 0.0
    v1 = 0.0
    v2 = 0.0
    wv2 = 0.0
    cen2 = 0.0
    nrec = 0.0
    w_prev = 0.0
    status = 0
    t_stop = n
    for t in range(n):
        dt = d[t]
        if y_first:
            y = _dot(Cp[1], xp) + Dp[1, 0] * dt + Dp[1, 1] * _dot(cf, xf)
            v = _dot(cw, xw) + _dot(cl, xl) + dl * y
        else:
            v = _dot(cw, xw) + _dot(cl, xl)
            y = 0.0
        # ---- coder: per-description reconstructions (errs holds recon - v)
        central = v
        if mode == 0:
            for i in range(k):
                xi = dith[t, i]
                m = math.floor((v + xi) / step + 0.5)
                symbols[t, i] = m
                errs[i] = m * step - xi - v
            central = v + np.mean(errs)
        elif mode == 1:
            xi = dith[t, 0]
            m = math.floor((v + xi) / step + 0.5)
            rec = m * step - xi
            for i in range(k):
                symbols[t, i] = m
                errs[i] = rec - v
            central = rec
        elif mode == 2:
            xi = dith[t, 0]
            m = math.floor((v + xi) / step + 0.5)
            r = (m + half) % nest - half
            j = (m - r) // nest
            for i in range(k):
                s = table[r + half, i] + j
                symbols[t, i] = s
                errs[i] = s * side_step - xi - v
            central = m * step - xi
        else:
            for i in range(k):
                errs[i] = gnoise[t, i]
            central = v + np.mean(errs)
        cnt = 0
        acc = 0.0
        for i in range(k):
            if mask[t, i]:
                cnt += 1
                acc += errs[i]
        if cnt == k:
            w = central
        elif cnt > 0:
            w = v + acc / cnt
        elif hold:
            w = w_prev
        else:
            w = 0.0
        u = _dot(cf, xf) + df * w
        if not y_first:
            y = _dot(Cp[1], xp) + Dp[1, 0] * dt + Dp[1, 1] * u
        e = _dot(Cp[0], xp) + Dp[0, 0] * dt + Dp[0, 1] * u
        if not (abs(y) < thr and abs(e) < thr):
            status = 1
            t_stop = t
            break
        if t >= burn:
            e2 += e * e
            v1 += v
            v2 += v * v
            wv2 += (w - v) * (w - v)
            cen2 += (central - v) * (central - v)
            nrec += cnt
            for i in range(k):
                for jj in range(k):
                    M[i, jj] += errs[i] * errs[jj]
        # ---- state updates
        _mv(Ap, xp, tp)
        for i in range(xp.shape[0]):
            xp[i] = tp[i] + Bp[i, 0] * dt + Bp[i, 1] * u
        _step_siso(Af, bf, xf, w, tf_)
        _step_siso(Al, bl, xl, y, tl)
        _step_siso(Aw, bw, xw, w, tw)
        w_prev = w
    return status, t_stop, e2, v1, v2, wv2, cen2, nrec, M


def _siso_arrays(tf: TransferFunction):
    A, B, C, D = tf.to_ss()
    n = A.shape[0]
    return (np.ascontiguousarray(np.asarray(A, float).reshape(n, n)),
            np.ascontiguousarray(np.asarray(B, float).reshape(n)),
            np.ascontiguousarray(np.asarray(C, float).reshape(n)),
            float(np.asarray(D).ravel()[0]))


def _subset_mse(M: np.ndarray, k: int, central_mse: float, central_full: bool) -> dict:
    out = {}
    for ell in range(1, k + 1):
        if ell == k and central_full:
            out[ell] = central_mse
            continue
        vals = [M[np.ix_(s, s)].sum() / ell**2 for s in itertools.combinations(range(k), ell)]
        out[ell] = float(np.mean(vals))
    return out


def _streams(config: SimConfig, n: int):
    k = config.code.k
    fam = config.code.family
    d = rng.gaussian(config.disturbance_seed, rng.DISTURBANCE, n)
    dith = np.zeros((n, k))
    gnoise = np.zeros((1, k))
    if config.mode == MODE_GAUSSIAN:
        rho = config.code.rho if fam is Family.MULTIPLE_DESCRIPTIONS else 0.0
        if fam is Family.REPETITION:
            cov = np.full((k, k), config.code.sigma_sq)
            z = rng.gaussian(config.dither_seed, rng.DITHER, n)[:, None] * math.sqrt(config.code.sigma_sq)
            gnoise = np.repeat(z, k, axis=1)
        else:
            cov = config.code.sigma_sq * ((1 - rho) * np.eye(k) + rho * np.ones((k, k)))
            L = np.linalg.cholesky(cov)
            gnoise = rng.gaussian(config.dither_seed, rng.DITHER, n * k).reshape(n, k) @ L.T
        gnoise = np.ascontiguousarray(gnoise)
    elif fam is Family.INDEPENDENT:
        u = rng.uniform_range(config.dither_seed, rng.DITHER, 0, n * k).reshape(n, k)
        dith = config.step * (u - 0.5)
    else:
        step = config.step if fam is Family.REPETITION else config.index_assignment.central_step
        dith[:, 0] = step * (rng.uniform_range(config.dither_seed, rng.DITHER, 0, n) - 0.5)
    mask = config.channel.received_mask(0, n, k)
    if config.min_received:
        short = mask.sum(axis=1) < config.min_received
        for t in np.flatnonzero(short):
            row = mask[t]
            for i in range(k):
                if row.sum() >= config.min_received:
                    break
                row[i] = True
    return d, np.ascontiguousarray(dith), gnoise, np.ascontiguousarray(mask)


def run_closed_loop(config: SimConfig, x0=None) -> SimMetrics:
    """Simulate the loop and return sample statistics after the burn-in."""
    plant, filters, code = config.plant, config.filters, config.code
    A, B, C, D = plant.realization
    Af, bf, cf, df = _siso_arrays(filters.f)
    Al, bl, cl, dl = _siso_arrays(filters.l_y)
    Aw, bw, cw, dw = _siso_arrays(filters.l_w * TransferFunction.delay(1))
    assert dw == 0.0
    if abs(D[1, 1] * df) == 0.0:
        y_first = True
    elif dl == 0.0:
        y_first = False
    else:
        raise ValueError("simulation needs an algebra-free loop: P22(inf) * F(inf) * L_y(inf) must be 0")
    n = config.horizon
    k = code.k
    d, dith, gnoise, mask = _streams(config, n)
    fam = code.family
    mode = 3 if config.mode == MODE_GAUSSIAN else _FAMILY_CODE[fam]
    ia = config.index_assignment
    if mode == 2:
        table, nest, step, side_step = ia.table_array(), ia.nesting_factor, ia.central_step, ia.side_step
    else:
        table, nest, step, side_step = np.zeros((1, k), np.int64), 1, float(config.step or 1.0), 0.0
    xp = np.zeros(A.shape[0]) if x0 is None else np.array(x0, dtype=float)
    symbols = np.zeros((n, k), dtype=np.int64)
    burn = config.effective_burn_in
    with np.errstate(all="ignore"):
        status, t_stop, e2, v1, v2, wv2, cen2, nrec, M = _kernel(
            np.ascontiguousarray(A), np.ascontiguousarray(B), np.ascontiguousarray(C), np.ascontiguousarray(D),
            xp, Af, bf, cf, df, Al, bl, cl, dl, Aw, bw, cw, y_first, d, mode, k, step, dith, table, nest,
            side_step, gnoise, mask, config.zero_reception == "hold", burn, config.divergence_threshold, symbols)
    used = n - burn
    if status != 0 or used <= 1:
        nan = math.nan
        return SimMetrics(nan, {}, nan, nan, nan, nan, nan, nan, nan, True, max(t_stop - burn, 0),
                          "diverged" if status else "no samples after burn-in")
    var_v = (v2 - v1 * v1 / used) / (used - 1)
    M = M / used
    mse = _subset_mse(M, k, cen2 / used, mode in (0, 2, 3))
    diag = np.sqrt(np.diag(M))
    off = ~np.eye(k, dtype=bool)
    rho_hat = float((M / np.outer(diag, diag))[off].mean()) if k > 1 else 0.0
    if config.mode == MODE_GAUSSIAN:
        ent, rate = math.nan, math.nan
    else:
        hs = [empirical_entropy(symbols[burn:, i]) for i in range(k)]
        ent, rate = float(np.mean(hs)), float(np.sum(hs))
    return SimMetrics(
        sigma_e_sq_hat=e2 / used,
        snr_per_ell={ell: var_v / m for ell, m in mse.items()},
        gamma_hat=var_v / (wv2 / used),
        sigma_v_sq_hat=var_v,
        sigma_q_sq_hat=wv2 / used,
        rho_hat=rho_hat,
        entropy_per_description=ent,
        sum_rate_hat=rate,
        mean_received=nrec / used,
        diverged=False,
        samples_used=used,
    )


# ------------------------------------------------------------------ sweeps
@dataclass(frozen=True)
class SweepRow:
    scheme: str
    family: str
    k: int
    k_prime: int
    loss_prob: float
    metrics: SimMetrics

    def as_csv_row(self) -> dict:
        m = self.metrics
        def fmt(x):
            return repr(float(x))
        return {
            "scheme": self.scheme, "family": self.family, "k": self.k, "k_prime": self.k_prime,
            "loss_prob": fmt(self.loss_prob),
            "sigma_e_sq_db": fmt(to_db(m.sigma_e_sq_hat) if not m.diverged else math.inf),
            "snr_all_db": fmt(to_db(m.snr_all) if not m.diverged else math.nan),
            "entropy_bits": fmt(m.entropy_per_description), "sum_rate_bits": fmt(m.sum_rate_hat),
            "diverged": int(m.diverged),
        }


def run_sweep(configs, loss_grid) -> list[SweepRow]:
    """One row per (config, p); failures become flagged rows instead of aborting."""
    grid = list(loss_grid)
    if not grid:
        raise ValueError("loss grid must be nonempty")
    rows = []
    for cfg in configs:
        for p in grid:
            try:
                run_cfg = replace(cfg, channel=ErasureChannel(float(p), cfg.channel.rng_seed))
                metrics = run_closed_loop(run_cfg)
            except Exception as exc:  # noqa: BLE001 - every failure becomes a flagged row
                nan = math.nan
                metrics = SimMetrics(nan, {}, nan, nan, nan, nan, nan, nan, nan, True, 0, f"{type(exc).__name__}: {exc}")
            rows.append(SweepRow(cfg.name, cfg.code.family.value, cfg.code.k, cfg.code.k_prime, float(p), metrics))
    return rows


def results_to_csv(rows, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {value}\n")
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_csv_row())
    return buf.getvalue()


# ------------------------------------------------------------------ predictions
def predicted_loop(config: SimConfig) -> dict:
    """Lossless-channel predictions of the loop statistics from the closed-loop maps.

    With the coder noise ``q`` white and independent of the disturbance,
    ``var v = ||L_y P21 S||^2 + ||S-1||^2 var q`` and
    ``var e = nominal + ||P12 F S||^2 var q``.
    """
    maps = closed_loop_maps(config.plant, config.filters)
    if not maps.internally_stable:
        raise InfeasibleDesign("filters do not stabilize the plant")
    code, k = config.code, config.code.k
    s1, a, c, nom = maps.s_minus_one_norm_sq, maps.ly_p21_s_norm_sq, maps.p12_f_s_norm_sq, maps.nominal_norm_sq
    if config.mode == MODE_GAUSSIAN:
        per = code.sigma_sq
        q_full = code.combined_variance(k)
    elif code.family is Family.MULTIPLE_DESCRIPTIONS:
        q_full = config.index_assignment.central_step**2 / 12.0
    else:
        per = config.step**2 / 12.0
        q_full = per if code.family is Family.REPETITION else per / k
    var_v = a + s1 * q_full
    if config.mode == MODE_QUANTIZER and code.family is Family.MULTIPLE_DESCRIPTIONS:
        mse = md_error_moments(config.index_assignment, math.sqrt(var_v))["mse_per_ell"]
    elif code.family is Family.REPETITION:
        mse = {ell: per for ell in range(1, k + 1)}
    else:
        rho = code.rho if (config.mode == MODE_GAUSSIAN and code.family is Family.MULTIPLE_DESCRIPTIONS) else 0.0
        mse = {ell: per / ell * (1 + (ell - 1) * rho) for ell in range(1, k + 1)}
    return {
        "sigma_v_sq": var_v,
        "sigma_q_sq": q_full,
        "gamma": var_v / q_full,
        "sigma_e_sq": nom + c * q_full,
        "snr_per_ell": {ell: var_v / m for ell, m in mse.items()},
    }


def theoretical_vs_measured(config: SimConfig) -> dict:
    if config.channel.loss_probability != 0.0:
        raise ValueError("comparison needs a lossless channel (p = 0)")
    pred = predicted_loop(config)
    meas = run_closed_loop(config)
    if meas.diverged:
        return {"valid": False, "predicted": pred, "measured": meas.to_json()}
    dev = {ell: meas.snr_per_ell[ell] / pred["snr_per_ell"][ell] - 1.0 for ell in pred["snr_per_ell"]}
    return {
        "valid": True,
        "predicted": pred,
        "measured": meas.to_json(),
        "ladder_deviation": dev,
        "gamma_deviation": meas.gamma_hat / pred["gamma"] - 1.0,
        "sigma_e_sq_deviation": meas.sigma_e_sq_hat / pred["sigma_e_sq"] - 1.0,
    }
