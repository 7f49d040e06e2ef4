import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabcode.quantization import (
    DescriptionSet,
    DitheredQuantizer,
    IndexAssignment,
    build_index_assignment,
    decode_independent,
    dithered_decode,
    dithered_encode,
    empirical_entropy,
    independent_encodings,
    md_decode,
    md_encode,
    md_error_moments,
    measured_snr,
    quantize_index,
    quantize_with_dither,
)

N_MC = 1_000_000


def gaussian(n, seed=123, scale=1.0):
    return np.random.default_rng(seed).normal(0.0, scale, n)


class TestDitheredQuantizer:
    def test_worked_example(self):
        m, rec = quantize_with_dither(0.3, 0.4, 1.0)
        assert int(m) == 1
        assert rec == pytest.approx(0.6)
        assert rec - 0.3 == pytest.approx(0.3)

    def test_exact_point(self):
        m, rec = quantize_with_dither(2.5, 0.0, 0.5)
        assert rec == 2.5

    def test_dither_range_and_reproducible(self):
        q = DitheredQuantizer(2.0, 9)
        xi = q.dither(np.arange(10_000))
        assert np.all(xi > -1.0) and np.all(xi <= 1.0)
        np.testing.assert_array_equal(xi, DitheredQuantizer(2.0, 9).dither(np.arange(10_000)))
        assert q.dither(17) == xi[17]

    def test_error_in_cell(self):
        q = DitheredQuantizer(0.7, 1)
        v = gaussian(50_000, scale=3.0)
        idx = np.arange(v.size)
        err = dithered_decode(dithered_encode(v, q, idx), q, idx) - v
        assert np.all(err > -0.35 - 1e-12) and np.all(err <= 0.35 + 1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            dithered_encode(np.inf, DitheredQuantizer(1.0), 0)
        with pytest.raises(ValueError):
            DitheredQuantizer(0.0)

    def test_error_variance_and_independence(self):
        step = 1.3
        q = DitheredQuantizer(step, 5)
        v = gaussian(N_MC)
        idx = np.arange(N_MC)
        err = dithered_decode(dithered_encode(v, q, idx), q, idx) - v
        assert np.var(err) == pytest.approx(step**2 / 12, rel=0.01)
        assert abs(np.corrcoef(err, v)[0, 1]) < 0.01
        assert abs(np.corrcoef(err, v**2)[0, 1]) < 0.01

    def test_snr_of_unit_source(self):
        step = 0.8
        q = DitheredQuantizer(step, 2)
        v = gaussian(N_MC, seed=4)
        idx = np.arange(N_MC)
        rec = dithered_decode(dithered_encode(v, q, idx), q, idx)
        assert measured_snr(v, rec) == pytest.approx(12 / step**2, rel=0.01)


class TestIndependentEncodings:
    def test_single_matches_scalar(self):
        q = DitheredQuantizer(0.9, 3)
        ds = independent_encodings(0.77, q, 1, 42)
        assert ds.payloads == {1: dithered_encode(0.77, q, 42)}

    def test_averaging_law(self):
        k, step = 4, 1.1
        q = DitheredQuantizer(step, 8)
        v = gaussian(N_MC, seed=9)
        idx = np.arange(N_MC)[:, None] * k + np.arange(k)
        rec = dithered_decode(quantize_index(v[:, None] + q.dither(idx), step), q, idx)
        err = rec - v[:, None]
        cov = np.cov(err.T)
        np.testing.assert_allclose(np.diag(cov), step**2 / 12, rtol=0.01)
        corr = np.corrcoef(err.T)[~np.eye(k, dtype=bool)]
        assert np.max(np.abs(corr)) < 0.01
        for ell in range(1, k + 1):
            assert np.var(err[:, :ell].mean(axis=1)) == pytest.approx(step**2 / 12 / ell, rel=0.02)

    def test_decode_is_mean(self):
        q = DitheredQuantizer(0.5, 1)
        ds = independent_encodings(1.234, q, 3, 10)
        parts = [dithered_decode(ds.payloads[i], q, 30 + i - 1) for i in (1, 2, 3)]
        assert decode_independent(ds, q, 3, {1, 3}) == pytest.approx((parts[0] + parts[2]) / 2)
        with pytest.raises(ValueError):
            decode_independent(ds, q, 3, set())

    def test_description_indices(self):
        with pytest.raises(ValueError):
            DescriptionSet(0, {0: 1})


def _brute_force_cost(N, k, radius=2):
    # oracle: exhaustive search over injective class choices within +-radius side cells
    cosets = range(-(N // 2), N // 2 + 1)
    tuples = list(itertools.product(range(-radius, radius + 1), repeat=k))
    best_for = {}
    for t in tuples:
        cls = tuple(np.subtract(t, t[0]))
        best_for.setdefault(cls, []).append(t)
    classes = list(best_for)
    cost = {(r, c): min(sum((N * x - r) ** 2 for x in t) for t in best_for[c]) for r in cosets for c in classes}
    zero = (0,) * k
    others = [c for c in classes if c != zero]
    rest = [r for r in cosets if r != 0]
    # the central coset is pinned to the zero tuple
    return min(sum(cost[(r, c)] for r, c in zip(rest, perm)) for perm in itertools.permutations(others, N - 1))


class TestIndexAssignment:
    def test_validation(self):
        with pytest.raises(ValueError):
            build_index_assignment(4, 2, 1.0)
        with pytest.raises(ValueError):
            build_index_assignment(5, 1, 1.0)

    @pytest.mark.parametrize("N,k", [(3, 2), (5, 3), (7, 2), (9, 4)])
    def test_centre_and_injective(self, N, k):
        ia = build_index_assignment(N, k, 1.0)
        assert ia.table[N // 2] == (0,) * k
        for m in range(-5 * N, 5 * N):
            assert ia.invert(ia.side_indices(m)) == m

    def test_three_cosets_two_descriptions(self):
        ia = build_index_assignment(3, 2, 1.0)
        assert len(set(ia.table)) == 3
        for r, t in zip((-1, 0, 1), ia.table):
            assert abs(np.mean(t) * 3 - r) <= 1.5

    @pytest.mark.parametrize("N,k", [(3, 2), (5, 2), (5, 3)])
    def test_cost_is_optimal(self, N, k):
        ia = build_index_assignment(N, k, 1.0)
        assert float(np.sum(ia.offsets() ** 2)) == _brute_force_cost(N, k)

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from([3, 5, 7]), st.integers(2, 3), st.integers(-10_000, 10_000))
    def test_shift_invariance(self, N, k, m):
        ia = build_index_assignment(N, k, 1.0)
        np.testing.assert_array_equal(ia.side_indices(m + N), ia.side_indices(m) + 1)

    def test_json_roundtrip(self):
        ia = build_index_assignment(5, 3, 0.4)
        assert IndexAssignment.from_json(ia.to_json()) == ia
        assert '"nesting_factor": 5' in ia.dumps()


class TestMultipleDescriptions:
    def setup_method(self):
        self.ia = build_index_assignment(5, 3, 0.5)

    def test_full_set_is_central(self):
        for t, v in enumerate(np.linspace(-3, 3, 41)):
            ds = md_encode(v, self.ia, 11, t)
            rec = md_decode(ds, self.ia, {1, 2, 3}, 11)
            q = DitheredQuantizer(0.5, 11)
            assert rec == pytest.approx(dithered_decode(dithered_encode(v, q, t), q, t))
            assert abs(rec - v) <= 0.25 + 1e-12

    def test_subset_is_average(self):
        ds = md_encode(0.83, self.ia, 2, 5)
        xi = DitheredQuantizer(0.5, 2).dither(5)
        side = {i: ds.payloads[i] * self.ia.side_step - xi for i in (1, 2, 3)}
        assert md_decode(ds, self.ia, {1, 3}, 2) == pytest.approx((side[1] + side[3]) / 2)
        assert md_decode(ds, self.ia, [3, 1], 2) == md_decode(ds, self.ia, {1, 3}, 2)
        with pytest.raises(ValueError):
            md_decode(ds, self.ia, set(), 2)

    def test_single_description_bound(self):
        bound = (np.max(np.abs(self.ia.offsets())) + 0.5) * self.ia.central_step
        for t, v in enumerate(np.linspace(-4, 4, 200)):
            ds = md_encode(v, self.ia, 3, t)
            for i in (1, 2, 3):
                assert abs(md_decode(ds, self.ia, {i}, 3) - v) <= bound + 1e-12

    def test_correlation_law(self):
        ia = build_index_assignment(5, 3, 1.0)
        sigma_v = 1.3
        v = gaussian(N_MC, seed=21, scale=sigma_v)
        xi = DitheredQuantizer(1.0, 4).dither_range(0, N_MC)
        m = quantize_index(v + xi, 1.0)
        err = ia.side_indices(m) * ia.side_step - xi[:, None] - v[:, None]
        M = err.T @ err / N_MC
        d = np.sqrt(np.diag(M))
        rho_mc = (M / np.outer(d, d))[~np.eye(3, dtype=bool)].mean()
        mom = md_error_moments(ia, sigma_v)
        assert rho_mc == pytest.approx(mom["rho"], abs=0.02)
        centred = np.corrcoef(err.T)[~np.eye(3, dtype=bool)].mean()
        assert centred == pytest.approx(mom["rho_centred"], abs=0.02)
        np.testing.assert_allclose(np.diag(M), np.diag(mom["second_moment"]), rtol=0.02)


class TestMeasurement:
    def test_entropy_examples(self):
        assert empirical_entropy([7] * 100) == 0.0
        assert empirical_entropy([0, 1, 2, 3] * 25) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            empirical_entropy([])

    def test_snr_examples(self):
        x = gaussian(N_MC, seed=1)
        y = x + gaussian(N_MC, seed=2)
        assert measured_snr(x, y) == pytest.approx(1.0, rel=0.01)
        assert measured_snr(3 * x, 3 * y) == pytest.approx(measured_snr(x, y), rel=1e-12)
        assert measured_snr(x, x) == math.inf

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 6.0))
    def test_rate_ordering_band(self, step):
        n = 200_000
        q = DitheredQuantizer(step, 6)
        v = gaussian(n, seed=5)
        idx = np.arange(n)
        sym = dithered_encode(v, q, idx)
        snr = measured_snr(v, dithered_decode(sym, q, idx))
        h = empirical_entropy(sym)
        ref = 0.5 * math.log2(1 + snr)
        assert ref - 0.3 <= h <= ref + 1.6
