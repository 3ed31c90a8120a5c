import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn
from primephase import ConfigError
from primephase.ambiguity import (DFT_AMBIGUITIES, PHASE_ONLY, AmbiguityClass, SUCCESS_THRESHOLD,
                                  candidates, conjugate_inversion, is_success, nse)
from primephase.measurements import build_partial_dft


def grid_nse(x_star, x_true, step=1e-4):
    """Brute force: 2N shifted/inverted candidates times a global-phase grid.

    For a candidate c, ||c e^{j phi} - x||^2 = ||c||^2 + ||x||^2 - 2 Re(e^{j phi} <x, c>),
    evaluated at every grid angle.
    """
    n = len(x_true)
    inv = np.array([np.conj(x_star[(n - i) % n]) for i in range(n)])
    phis = np.arange(0.0, 2 * np.pi, step)
    rot = np.exp(1j * phis)
    ref = np.sum(np.abs(x_true) ** 2)
    best = np.inf
    for base in (x_star, inv):
        for s in range(n):
            c = np.array([base[(i - s) % n] for i in range(n)])
            inner = np.sum(np.conj(x_true) * c)
            errs = np.sum(np.abs(c) ** 2) + ref - 2 * np.real(rot * inner)
            best = min(best, errs.min())
    return best / ref


class TestNSE:
    def test_identity(self, rng):
        x = crandn(rng, 16)
        assert nse(x, x) == 0

    def test_global_phase(self, rng):
        x = crandn(rng, 16)
        assert nse(x * np.exp(0.7j), x) <= 1e-12

    def test_composed(self, rng):
        x = crandn(rng, 16)
        g = np.roll(conjugate_inversion(x), 3) * np.exp(1j * np.pi / 5)
        assert nse(g, x) <= 1e-12

    def test_matches_grid(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            a, b = crandn(rng, 32), crandn(rng, 32)
            assert abs(nse(a, b) - grid_nse(a, b)) <= 1e-6

    def test_ambiguities_preserve_dft_magnitudes(self, rng):
        ens = build_partial_dft(16, 16, 0)
        x = crandn(rng, 16)
        for c in candidates(x):
            assert np.allclose(np.abs(ens.forward(c)), np.abs(ens.forward(x)), atol=1e-12)

    def test_inversion_index_map(self):
        x = np.arange(5) + 1j * np.arange(5)
        assert np.array_equal(conjugate_inversion(x), np.conj(x[[0, 4, 3, 2, 1]]))
        assert np.array_equal(conjugate_inversion(conjugate_inversion(x)), x)

    def test_phase_only_class(self, rng):
        x = crandn(rng, 16)
        assert nse(np.roll(x, 2), x, PHASE_ONLY) > 1e-2
        assert nse(np.roll(x, 2), x, DFT_AMBIGUITIES) <= 1e-12
        assert candidates(x, PHASE_ONLY).shape == (1, 16)
        assert candidates(x).shape == (32, 16)
        assert candidates(x, AmbiguityClass(allow_conjugate_inversion=False)).shape == (16, 16)

    def test_phase_required(self):
        with pytest.raises(ConfigError):
            AmbiguityClass(allow_phase=False)

    def test_zero_reference(self):
        with pytest.raises(ConfigError):
            nse(np.ones(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            nse(np.ones(4), np.ones(5))

    @given(st.integers(0, 2**32 - 1), st.integers(0, 31), st.booleans(), st.floats(0, 2 * np.pi))
    def test_invariance(self, seed, shift, invert, phi):
        rng = np.random.default_rng(seed)
        x, y = crandn(rng, 32), crandn(rng, 32)
        g = conjugate_inversion(x) if invert else x
        g = np.roll(g, shift) * np.exp(1j * phi)
        assert abs(nse(g, y) - nse(x, y)) <= 1e-12
        assert nse(g, x) <= 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_upper_bound(self, seed):
        rng = np.random.default_rng(seed)
        x, y = crandn(rng, 12), crandn(rng, 12)
        plain = np.sum(np.abs(x - y) ** 2) / np.sum(np.abs(y) ** 2)
        assert 0 <= nse(x, y) <= plain + 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_closed_form_phase_vs_grid(self, seed):
        rng = np.random.default_rng(seed)
        x, y = crandn(rng, 8), crandn(rng, 8)
        phis = np.arange(0, 2 * np.pi, 1e-3)
        grid = min(np.sum(np.abs(x * np.exp(1j * p) - y) ** 2) for p in phis) / np.sum(np.abs(y) ** 2)
        closed = nse(x, y, PHASE_ONLY)
        assert closed <= grid + 1e-12
        assert grid - closed <= 1e-6 * (1 + grid) + 2e-6


class TestSuccess:
    def test_threshold(self):
        assert SUCCESS_THRESHOLD == 1e-4
        assert is_success(0.0)
        assert not is_success(1e-4)
        assert is_success(9.9e-5)

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            is_success(-1.0)
