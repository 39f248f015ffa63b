import math

import numpy as np
import pytest
from scipy.stats import binomtest

from phaseflip.fock import Amplitude, coherent_vector, helstrom_error, truncation_dim
from phaseflip.measurement import (
    CheckKind,
    RngStream,
    basis_error_probability,
    discriminate,
    helstrom_read_probabilities,
    measure_in_basis,
    photon_number_pvalue,
    photon_number_test,
    pulse_pass_probability,
    sample_photon_count,
    verify_pulse,
)
from phaseflip.protocol import CoherentPulse, Provenance


def pulse(mean, phase, index=0):
    return CoherentPulse(index, mean, phase, Provenance.HONEST)


def fock_helstrom_probs(ref_mean, ref_phase, mean, phase):
    """Oracle: build |beta>, |-beta>, the Helstrom projectors in the Fock
    basis, and measure |gamma> with them."""
    dim = truncation_dim(max(ref_mean, mean), 1e-14) + 10
    b = coherent_vector(Amplitude.from_mean_n(ref_mean, ref_phase), dim).coeffs
    bm = coherent_vector(Amplitude.from_mean_n(ref_mean, ref_phase + math.pi), dim).coeffs
    g = coherent_vector(Amplitude.from_mean_n(mean, phase), dim).coeffs
    gamma_op = 0.5 * (np.outer(b, b.conj()) - np.outer(bm, bm.conj()))
    w, v = np.linalg.eigh(gamma_op)
    p0 = sum(abs(v[:, i].conj() @ g) ** 2 for i in range(dim) if w[i] > 1e-14)
    p1 = sum(abs(v[:, i].conj() @ g) ** 2 for i in range(dim) if w[i] < -1e-14)
    rest = 1 - p0 - p1
    return p0 + rest / 2, p1 + rest / 2


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7, "x").random(5)
    assert np.array_equal(a, RngStream(7, "x").random(5))
    assert not np.array_equal(a, RngStream(7, "y").random(5))
    assert not np.array_equal(a, RngStream(8, "x").random(5))
    assert RngStream(7, "x").child("c").label == "x/c"
    assert np.array_equal(RngStream(7, "x").child("c").random(3), RngStream(7, "x/c").random(3))


def test_discriminate_error_free_and_vectorized(rng):
    assert discriminate(1, 0.0, rng) == 1
    bits = np.array([0, 1] * 50)
    assert np.array_equal(discriminate(bits, 0.0, rng), bits)
    assert discriminate(0, 0.3, rng, error_floor=0.4) in (0, 1)
    with pytest.raises(ValueError):
        discriminate(0, -0.1, rng)


@pytest.mark.parametrize("F", [0.5, math.exp(-4)])
def test_discriminate_rate(F, rng):
    pe = helstrom_error(F)
    n = 200_000
    errs = int(discriminate(np.zeros(n, dtype=int), pe, rng).sum())
    assert binomtest(errs, n, pe).pvalue > 1e-4


def test_error_floor_caps_at_half(rng):
    n = 100_000
    errs = int(discriminate(np.zeros(n, dtype=int), 0.3, rng, error_floor=0.5).sum())
    assert abs(errs / n - 0.5) < 0.01


@pytest.mark.parametrize(
    "ref_mean,ref_phase,mean,phase",
    [(0.5, 0.0, 0.5, 0.0), (0.5, 0.0, 0.5, math.pi), (2.0, 0.3, 2.0, 1.0), (1.0, 0.0, 0.4, 2.5), (3.0, 1.0, 3.0, 1.0 + math.pi / 2)],
)
def test_helstrom_probabilities_match_fock_projectors(ref_mean, ref_phase, mean, phase):
    got = helstrom_read_probabilities(ref_mean, ref_phase, mean, phase)
    want = fock_helstrom_probs(ref_mean, ref_phase, mean, phase)
    assert got == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("mean", [0.05, 0.5, 2.0])
def test_helstrom_readout_on_basis_states(mean):
    p0, p1 = helstrom_read_probabilities(mean, 0.4, mean, 0.4)
    assert p1 == pytest.approx(basis_error_probability(mean), abs=1e-12)
    assert p0 + p1 == pytest.approx(1.0)
    q0, q1 = helstrom_read_probabilities(mean, 0.4, mean, 0.4 + math.pi)
    assert q0 == pytest.approx(p1, abs=1e-12)


def test_orthogonal_phase_read_is_a_coin():
    p0, p1 = helstrom_read_probabilities(4.0, 0.0, 4.0, math.pi / 2)
    assert p0 == pytest.approx(0.5, abs=1e-9)


def test_weak_signal_error_value():
    assert basis_error_probability(0.5) == pytest.approx(0.5 * (1 - math.sqrt(1 - math.exp(-2))), abs=1e-12)
    assert basis_error_probability(0.5) == pytest.approx(0.035063, abs=1e-6)


def test_measure_in_basis_statistics(rng):
    n = 20_000
    p = pulse(0.5, 1.0)
    errs = sum(measure_in_basis(p, 0.5, 1.0, rng) for _ in range(n))
    assert binomtest(errs, n, basis_error_probability(0.5)).pvalue > 1e-4
    flipped = pulse(0.5, 1.0 + math.pi)
    assert sum(measure_in_basis(flipped, 0.5, 1.0, rng) for _ in range(200)) > 150


def test_verify_pulse_exact_match_always_passes(rng):
    for _ in range(50):
        out = verify_pulse(0.7, pulse(100.0, 0.7), rng)
        assert out.passed and out.kind is CheckKind.STATE_FIDELITY
        assert out.pass_probability == pytest.approx(1.0)


def test_verify_pulse_pass_probability_values():
    assert pulse_pass_probability(0.0, pulse(2.0, math.pi)) == pytest.approx(math.exp(-8.0))
    assert pulse_pass_probability(0.0, pulse(0.25 * 100, 0.0), expected_mean_n=100) == pytest.approx(math.exp(-25.0))
    assert pulse_pass_probability(0.0, pulse(1.0, 0.3)) == pytest.approx(math.exp(-4 * math.sin(0.15) ** 2))


def test_verify_pulse_rate(rng):
    p = pulse(1.0, 1.0)
    want = pulse_pass_probability(0.0, p)
    n = 20_000
    passes = sum(verify_pulse(0.0, p, rng).passed for _ in range(n))
    assert binomtest(passes, n, want).pvalue > 1e-4


def test_photon_counts(rng):
    assert isinstance(sample_photon_count(3.0, rng), int)
    xs = sample_photon_count(100.0, rng, size=50_000)
    assert abs(xs.mean() - 100.0) < 0.5
    with pytest.raises(ValueError):
        sample_photon_count(0.0, rng)


@pytest.mark.parametrize("mean,size", [(0.5, 20), (100.0, 32)])
def test_photon_test_calibration(mean, size, rng):
    trials = 4000
    fails = sum(
        not photon_number_test(sample_photon_count(mean, rng, size=size), mean, 0.01).passed for _ in range(trials)
    )
    # false-alarm rate must not exceed the significance level (exact tails are conservative)
    assert fails / trials <= 0.01 + 3 * math.sqrt(0.01 * 0.99 / trials)


def test_photon_test_power(rng):
    counts = sample_photon_count(50.0, rng, size=32)
    out = photon_number_test(counts, 100.0)
    assert not out.passed
    assert out.kind is CheckKind.PHOTON_NUMBER


def test_photon_pvalue_edges():
    assert photon_number_pvalue([1, 1], 1.0) == pytest.approx(1.0, abs=0.5)
    assert photon_number_pvalue([1, 1], 1.0) <= 1.0
    with pytest.raises(ValueError):
        photon_number_pvalue([], 1.0)
    with pytest.raises(ValueError):
        photon_number_test([1], 1.0, significance=1.5)
