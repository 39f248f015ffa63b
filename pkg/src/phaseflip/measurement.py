"""Stochastic measurement models: Helstrom discrimination, photon counting,
and the verification tests Bob and Alice run on disclosed pulses.

The state test is modelled as a projection onto the expected pure state, so a
reported pass/fail probability is the most favourable one any real verifier
could achieve; detection rates derived from it are upper bounds.
"""
from __future__ import annotations

import cmath
import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.stats import poisson

from .fock import helstrom_error, overlap_sq, wrap_angle

if TYPE_CHECKING:
    from .protocol import CoherentPulse

DEFAULT_SIGNIFICANCE = 0.01
# below this expected total count the sum is tested with exact Poisson tails
EXACT_POISSON_BELOW = 100.0


class RngStream:
    """Named, seeded random stream.

    The same ``(seed, label)`` always yields the same draws: the label is
    hashed into the spawn key of a :class:`numpy.random.SeedSequence`, and the
    bit generator is PCG64, whose output is platform independent.
    """

    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{name}" if self.label else name)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"

    # thin pass-throughs used across the package
    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def poisson(self, lam, size=None):
        return self.generator.poisson(lam, size)


class CheckKind(str, Enum):
    STATE_FIDELITY = "state-fidelity"
    PHOTON_NUMBER = "photon-number"


@dataclass(frozen=True)
class VerificationOutcome:
    passed: bool
    pulse_index: int
    kind: CheckKind
    # probability that the test passes given the true state; informational
    pass_probability: float = math.nan


def discriminate(true_bit, error_prob, rng: RngStream, error_floor: float = 0.0):
    """Binary discrimination that errs with probability ``error_prob``.

    Works elementwise on arrays. ``error_floor`` adds excess detector error
    on top of the ideal value (capped at 1/2).
    """
    p = np.minimum(np.asarray(error_prob, dtype=float) + error_floor, 0.5)
    if np.any(p < 0.0):
        raise ValueError("error probability must be non-negative")
    bits = np.asarray(true_bit, dtype=np.int64)
    shape = np.broadcast_shapes(p.shape, bits.shape)
    if shape == ():
        return int(bits) ^ int(rng.random() < p)
    return bits ^ (rng.random(shape) < p).astype(np.int64)


def helstrom_read_probabilities(
    reference_mean_n: float, reference_phase: float, mean_n: float, phase: float
) -> tuple[float, float]:
    """Outcome probabilities of the optimal measurement for the basis
    ``{|beta>, |-beta>}`` (``beta`` given by the reference) applied to the
    coherent state with ``mean_n`` and ``phase``.

    Returns ``(p0, p1)``. Weight outside the two-dimensional span is split
    evenly between the outcomes.
    """
    b = math.sqrt(reference_mean_n) * cmath.exp(1j * reference_phase)
    g = math.sqrt(mean_n) * cmath.exp(1j * phase)
    s = math.exp(-2.0 * reference_mean_n)  # <beta|-beta>, real
    base = -0.5 * (reference_mean_n + mean_n)
    a0 = cmath.exp(base + b.conjugate() * g)  # <beta|gamma>
    a1 = cmath.exp(base - b.conjugate() * g)  # <-beta|gamma>
    plus = (a0 + a1) / math.sqrt(2.0 * (1.0 + s))
    minus = (a0 - a1) / math.sqrt(2.0 * (1.0 - s))
    p0 = 0.5 * abs(plus + minus) ** 2
    p1 = 0.5 * abs(plus - minus) ** 2
    rest = max(0.0, 1.0 - p0 - p1)
    return p0 + 0.5 * rest, p1 + 0.5 * rest


def measure_in_basis(
    pulse: "CoherentPulse",
    reference_mean_n: float,
    reference_phase: float,
    rng: RngStream,
    error_floor: float = 0.0,
) -> int:
    """Read a pulse in the basis whose bit-0 state has ``reference_phase``."""
    p0, p1 = helstrom_read_probabilities(reference_mean_n, reference_phase, pulse.mean_n_true, pulse.phase_true)
    likely = 0 if p0 >= p1 else 1
    return discriminate(likely, min(p0, p1), rng, error_floor)


def basis_error_probability(mean_n: float) -> float:
    """Helstrom error for the two states of one basis at intensity ``mean_n``."""
    return helstrom_error(math.exp(-4.0 * mean_n))


def sample_photon_count(mean_n: float, rng: RngStream, size=None):
    """Photon-number readout of a coherent pulse: a Poisson(mean_n) draw."""
    if not mean_n > 0.0:
        raise ValueError("mean_n must be positive")
    out = rng.poisson(mean_n, size)
    return int(out) if size is None else out


def pulse_pass_probability(expected_phase: float, pulse: "CoherentPulse", expected_mean_n: float | None = None) -> float:
    """Probability that projecting ``pulse`` onto the expected state succeeds."""
    ref = pulse.mean_n_true if expected_mean_n is None else expected_mean_n
    return overlap_sq(ref, pulse.mean_n_true, wrap_angle(pulse.phase_true - expected_phase))


def verify_pulse(
    expected_phase: float,
    pulse: "CoherentPulse",
    rng: RngStream,
    expected_mean_n: float | None = None,
) -> VerificationOutcome:
    """Projective test of ``pulse`` against the pure state with ``expected_phase``.

    With ``expected_mean_n`` omitted the expected state is taken at the
    pulse's own intensity, so only the phase is checked. Passing it makes the
    test sensitive to intensity changes as well.
    """
    p = pulse_pass_probability(expected_phase, pulse, expected_mean_n)
    passed = p >= 1.0 or bool(rng.random() < p)
    return VerificationOutcome(passed, pulse.index, CheckKind.STATE_FIDELITY, p)


def photon_number_pvalue(counts: Sequence[int], expected_mean: float) -> float:
    """Two-sided p-value of the summed counts under a Poisson null."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("counts must be nonempty")
    if not expected_mean > 0.0:
        raise ValueError("expected_mean must be positive")
    total = int(counts.sum())
    lam = expected_mean * counts.size
    if lam < EXACT_POISSON_BELOW:
        lower = poisson.cdf(total, lam)
        upper = poisson.sf(total - 1, lam)
        return float(min(1.0, 2.0 * min(lower, upper)))
    z = (total - lam) / math.sqrt(lam)
    return math.erfc(abs(z) / math.sqrt(2.0))


def photon_number_test(
    counts: Sequence[int],
    expected_mean: float,
    significance: float = DEFAULT_SIGNIFICANCE,
    pulse_index: int = -1,
) -> VerificationOutcome:
    """Aggregate intensity check over a batch of photon counts.

    Passes iff the two-sided p-value is at least ``significance``. The
    normal approximation is used unless the expected total is small.
    """
    if not 0.0 < significance < 1.0:
        raise ValueError("significance must lie in (0, 1)")
    p = photon_number_pvalue(counts, expected_mean)
    return VerificationOutcome(p >= significance, pulse_index, CheckKind.PHOTON_NUMBER, p)
