import math
from dataclasses import replace

import numpy as np
import pytest

from stabcode.channel import ErasureChannel
from stabcode.design import performance_sigma_e_sq
from stabcode.presets import independent_scheme
from stabcode.simulation import (
    RESULT_COLUMNS,
    predicted_loop,
    results_to_csv,
    run_closed_loop,
    run_sweep,
    theoretical_vs_measured,
)


@pytest.fixture(scope="module")
def scheme42(plant):
    return independent_scheme(plant, 7.2, 4, 2, horizon=1_000_000)


def test_config_validation(scheme32):
    cfg = scheme32.config
    with pytest.raises(ValueError):
        replace(cfg, horizon=0)
    with pytest.raises(ValueError):
        replace(cfg, divergence_threshold=0.0)
    with pytest.raises(ValueError):
        replace(cfg, mode="analog")
    with pytest.raises(ValueError):
        replace(cfg, zero_reception="guess")
    with pytest.raises(ValueError):
        replace(cfg, step=None)
    with pytest.raises(ValueError):
        replace(cfg, min_received=4)


def test_md_needs_assignment(scheme_md):
    with pytest.raises(ValueError):
        replace(scheme_md.config, index_assignment=None)


def test_gaussian_oracle(scheme32):
    """Additive white Gaussian coder noise: measured statistics follow the closed-loop norms."""
    cfg = replace(scheme32.config, mode="gaussian")
    pred = predicted_loop(cfg)
    m = run_closed_loop(cfg)
    assert not m.diverged
    assert m.gamma_hat == pytest.approx(pred["gamma"], rel=0.02)
    assert m.sigma_e_sq_hat == pytest.approx(pred["sigma_e_sq"], rel=0.02)
    assert pred["gamma"] == pytest.approx(5.29, rel=1e-9)


def test_prediction_matches_design_point(scheme32):
    pred = predicted_loop(scheme32.config)
    assert pred["gamma"] == pytest.approx(scheme32.point.gamma, rel=1e-9)
    assert pred["sigma_e_sq"] == pytest.approx(performance_sigma_e_sq(scheme32.point), rel=1e-9)
    for ell, snr in scheme32.ladder.items():
        assert pred["snr_per_ell"][ell] == pytest.approx(snr, rel=1e-9)


def test_total_loss_diverges(scheme32):
    m = run_closed_loop(scheme32.at(1.0, horizon=10_000))
    assert m.diverged
    assert math.isnan(m.sigma_e_sq_hat)
    assert m.samples_used < 10_000


def test_hold_policy_also_diverges_under_total_loss(scheme32):
    assert run_closed_loop(scheme32.at(1.0, horizon=10_000, zero_reception="hold")).diverged


def test_reproducible(scheme32):
    cfg = scheme32.at(0.1, horizon=50_000)
    assert run_closed_loop(cfg) == run_closed_loop(cfg)
    other = replace(cfg, disturbance_seed=cfg.disturbance_seed + 100)
    assert run_closed_loop(other).sigma_e_sq_hat != run_closed_loop(cfg).sigma_e_sq_hat


def test_forced_two_receptions_never_diverge(scheme32):
    m = run_closed_loop(scheme32.at(0.6, min_received=2))
    assert not m.diverged
    assert m.samples_used == 1_000_000 - 1000
    assert m.mean_received >= 2.0


def test_snr_ladder_nondecreasing(scheme32, scheme_md):
    for s in (scheme32, scheme_md):
        snr = run_closed_loop(s.at(0.0, horizon=200_000)).snr_per_ell
        vals = [snr[ell] for ell in sorted(snr)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_zero_loss_ignores_policy(scheme32):
    cfg = scheme32.at(0.0, horizon=20_000)
    assert run_closed_loop(cfg) == run_closed_loop(replace(cfg, zero_reception="hold"))


def test_policies_differ_under_loss(scheme21):
    cfg = scheme21.at(0.15, horizon=100_000)
    zero, hold = run_closed_loop(cfg), run_closed_loop(replace(cfg, zero_reception="hold"))
    assert zero.sigma_e_sq_hat != hold.sigma_e_sq_hat


def test_monotone_in_loss(scheme32):
    grid = [0.0, 0.02, 0.05, 0.1, 0.2]
    rows = run_sweep([replace(scheme32.config, horizon=300_000)], grid)
    se = [r.metrics.sigma_e_sq_hat for r in rows]
    assert all(b >= a * (1 - 0.01) for a, b in zip(se, se[1:]))
    assert se[-1] > se[0]


def test_mean_received_tracks_channel(scheme32):
    m = run_closed_loop(scheme32.at(0.2, horizon=200_000))
    assert m.mean_received == pytest.approx(2.4, abs=0.01)


class TestSweep:
    def test_empty_grid_raises(self, scheme32):
        with pytest.raises(ValueError):
            run_sweep([scheme32.config], [])

    def test_empty_scheme_list(self):
        assert run_sweep([], [0.0]) == []

    def test_duplicates_identical(self, scheme32):
        cfg = replace(scheme32.config, horizon=20_000)
        a, b = run_sweep([cfg, cfg], [0.05])
        assert a.as_csv_row() == b.as_csv_row()

    def test_failures_become_flagged_rows(self, scheme32):
        cfg = replace(scheme32.config, horizon=5_000)
        rows = run_sweep([cfg], [0.0, 1.0, 2.0])
        assert [r.metrics.diverged for r in rows] == [False, True, True]
        assert "ValueError" in rows[2].metrics.error
        assert rows[1].metrics.error == "diverged"

    def test_csv_layout(self, scheme32):
        rows = run_sweep([replace(scheme32.config, horizon=5_000)], [0.0, 1.0])
        text = results_to_csv(rows, {"seed": 0})
        lines = text.splitlines()
        assert lines[0] == "# seed: 0"
        assert lines[1] == ",".join(RESULT_COLUMNS)
        assert lines[3].split(",")[-1] == "1"


class TestTheoryVsMeasured:
    def test_requires_lossless(self, scheme32):
        with pytest.raises(ValueError):
            theoretical_vs_measured(scheme32.at(0.1))

    def test_quantizer_ladder_within_5pct(self, scheme42):
        rep = theoretical_vs_measured(scheme42.config)
        assert rep["valid"]
        for ell, dev in rep["ladder_deviation"].items():
            assert abs(dev) <= 0.05, (ell, dev)
        assert abs(rep["sigma_e_sq_deviation"]) <= 0.05

    def test_gaussian_within_2pct(self, scheme42):
        rep = theoretical_vs_measured(replace(scheme42.config, mode="gaussian"))
        for dev in rep["ladder_deviation"].values():
            assert abs(dev) <= 0.02
        assert abs(rep["gamma_deviation"]) <= 0.02
        assert abs(rep["sigma_e_sq_deviation"]) <= 0.02

    def test_diverged_marked_invalid(self, scheme32):
        rep = theoretical_vs_measured(replace(scheme32.config, horizon=20_000, divergence_threshold=1e-3))
        assert rep["valid"] is False
        assert "ladder_deviation" not in rep

    def test_md_ladder_follows_table_moments(self, scheme_md):
        """The measured MD ladder agrees with the exact moments of the built table."""
        rep = theoretical_vs_measured(replace(scheme_md.config, horizon=300_000))
        for ell, dev in rep["ladder_deviation"].items():
            assert abs(dev) <= 0.05, (ell, dev)


def test_channel_seed_in_config_drives_losses(scheme32):
    a = scheme32.at(0.1, horizon=20_000)
    b = replace(a, channel=ErasureChannel(0.1, a.channel.rng_seed + 1))
    assert run_closed_loop(a).mean_received != run_closed_loop(b).mean_received
    assert np.isfinite(run_closed_loop(b).sigma_e_sq_hat)
