import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtri
from scipy.stats import qmc

from subsetuq.lowdisc import (
    SamplerConfig,
    Scheme,
    gaussian_transform,
    halton_sample,
    lhs_sample,
    norm_ppf,
    radical_inverse,
    sample,
    sobol_max_dims,
    sobol_sample,
)


def occupancy_ok(x):
    m = x.shape[0]
    return all(np.array_equal(np.sort(np.floor(x[:, d] * m).astype(int)), np.arange(m)) for d in range(x.shape[1]))


@given(st.integers(1, 60), st.integers(1, 20), st.integers(0, 2**63 - 1))
def test_lhs_bin_occupancy(count, dims, seed):
    x = lhs_sample(SamplerConfig(Scheme.LatinHypercube, count, dims, seed))
    assert x.shape == (count, dims)
    assert np.all((x >= 0) & (x < 1))
    assert occupancy_ok(x)


def test_lhs_small_cases():
    x = lhs_sample(SamplerConfig("LatinHypercube", 1, 5, 3))
    assert x.shape == (1, 5) and np.all((x >= 0) & (x < 1))
    y = lhs_sample(SamplerConfig("LatinHypercube", 4, 1, 3))
    assert sorted(np.floor(4 * y[:, 0]).astype(int)) == [0, 1, 2, 3]


def test_lhs_seeds_differ():
    a = lhs_sample(SamplerConfig("LatinHypercube", 100, 18, 1))
    b = lhs_sample(SamplerConfig("LatinHypercube", 100, 18, 2))
    assert not np.array_equal(a, b)
    assert occupancy_ok(a) and occupancy_ok(b)


def test_radical_inverse_hand_values():
    assert radical_inverse(1, 2) == 0.5
    assert radical_inverse(3, 2) == 0.75
    assert radical_inverse(1, 3) == 1 / 3
    assert radical_inverse(6, 2) == 0.375  # 110 -> 0.011
    with pytest.raises(ValueError):
        radical_inverse(0, 2)


def test_halton_hand_values():
    x = halton_sample(SamplerConfig(Scheme.Halton, 2, 2))
    assert x.tolist() == [[0.5, 1 / 3], [0.25, 2 / 3]]
    first = halton_sample(SamplerConfig(Scheme.Halton, 4, 1))[:, 0].tolist()
    assert first == [1 / 2, 1 / 4, 3 / 4, 1 / 8]


def test_halton_matches_reference_generator():
    ours = halton_sample(SamplerConfig(Scheme.Halton, 64, 6))
    ref = qmc.Halton(d=6, scramble=False).random(65)[1:]
    np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-15)


def test_sobol_first_dimension():
    x = sobol_sample(SamplerConfig(Scheme.Sobol, 3, 1))
    assert x[:, 0].tolist() == [0.5, 0.75, 0.25]


@pytest.mark.parametrize("dims", [1, 2, 5, 21, 40])
def test_sobol_matches_reference_generator(dims):
    ours = sobol_sample(SamplerConfig(Scheme.Sobol, 255, dims))
    ref = qmc.Sobol(d=dims, scramble=False).random(256)[1:]
    np.testing.assert_array_equal(ours, ref)


@pytest.mark.parametrize("j", [1, 2, 3, 4, 5])
def test_sobol_dyadic_balance(j):
    count = 2**7 - 1
    x = sobol_sample(SamplerConfig(Scheme.Sobol, count, 3))[:, 0]
    bins = np.bincount(np.floor(x * 2**j).astype(int), minlength=2**j)
    # the first 2^7 points (zero included) fill every dyadic bin equally; the zero sits in bin 0
    expected = np.full(2**j, 2 ** (7 - j))
    expected[0] -= 1
    assert np.array_equal(bins, expected)


def test_sobol_range_and_limit():
    x = sobol_sample(SamplerConfig(Scheme.Sobol, 1000, 21))
    assert np.all((x > 0) & (x < 1))
    assert sobol_max_dims() >= 21
    with pytest.raises(ValueError):
        SamplerConfig(Scheme.Sobol, 4, sobol_max_dims() + 1)


def test_quasi_random_is_deterministic():
    for scheme in (Scheme.Halton, Scheme.Sobol):
        a = sample(SamplerConfig(scheme, 50, 4, seed=1))
        b = sample(SamplerConfig(scheme, 50, 4, seed=99))
        assert np.array_equal(a, b)


def test_config_invariants():
    with pytest.raises(ValueError):
        SamplerConfig(Scheme.LatinHypercube, 0, 2)
    with pytest.raises(ValueError):
        SamplerConfig(Scheme.LatinHypercube, 2, 0)
    with pytest.raises(ValueError):
        halton_sample(SamplerConfig(Scheme.Sobol, 2, 2))


def _phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def test_norm_ppf_accuracy_grid():
    ps = np.concatenate([np.logspace(-12, -1, 400), np.linspace(0.05, 0.95, 400), 1 - np.logspace(-12, -1, 400)])
    ours = np.array([norm_ppf(p) for p in ps])
    np.testing.assert_allclose(ours, ndtri(ps), rtol=0, atol=1e-9)


@given(st.floats(1e-12, 1 - 1e-12))
def test_norm_ppf_inverts_erfc(p):
    assert _phi(norm_ppf(p)) == pytest.approx(p, rel=1e-9, abs=1e-15)


def test_gaussian_transform_examples():
    u = np.array([[0.5, 0.5], [0.8413447460685429, 0.2]])
    out = gaussian_transform(u, [3.0, 1.0], [1.0, 0.0])
    assert out[0, 0] == 3.0 and out[0, 1] == 1.0
    assert out[1, 1] == 1.0
    assert out[1, 0] - 3.0 == pytest.approx(1.0, abs=1e-3)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            gaussian_transform(np.array([[bad]]), [0.0], [1.0])
    with pytest.raises(ValueError):
        gaussian_transform(np.array([[0.5]]), [0.0], [-1.0])


@given(st.lists(st.floats(1e-10, 1 - 1e-10), min_size=2, max_size=30))
def test_gaussian_transform_monotone(us):
    u = np.sort(np.array(us))[:, None]
    out = gaussian_transform(u, [2.0], [0.7])[:, 0]
    assert np.all(np.diff(out) >= 0)
