"""Coherent states of a single optical mode on a truncated Fock space.

Phases follow the rotation convention ``R(phi)|alpha> = |exp(-i phi) alpha>``,
so rotating by ``phi`` *subtracts* ``phi`` from the amplitude's phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

TWO_PI = 2.0 * math.pi
DEFAULT_EPS_TAIL = 1e-12


class TruncationError(ValueError):
    """Raised when a Fock space is too small for the requested tail tolerance."""


def wrap_angle(phi: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    out = math.fmod(phi, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2*pi
    return 0.0 if out >= TWO_PI else out


@dataclass(frozen=True)
class Amplitude:
    """Complex coherent amplitude ``alpha = modulus * exp(i * phase)``."""

    modulus: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.modulus > 0.0:
            raise ValueError(f"amplitude modulus must be positive, got {self.modulus!r}")
        object.__setattr__(self, "phase", wrap_angle(float(self.phase)))

    @classmethod
    def from_mean_n(cls, mean_n: float, phase: float = 0.0) -> "Amplitude":
        if not mean_n > 0.0:
            raise ValueError(f"mean photon number must be positive, got {mean_n!r}")
        return cls(math.sqrt(mean_n), phase)

    @property
    def mean_n(self) -> float:
        return self.modulus * self.modulus

    @property
    def value(self) -> complex:
        return self.modulus * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class FockVector:
    """Number-basis coefficients ``c_0 .. c_{dim-1}`` of a truncated state."""

    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.coeffs, self.coeffs).real)

    def inner(self, other: "FockVector") -> complex:
        """``<self|other>`` on the common truncated space."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.coeffs, other.coeffs))


@dataclass(frozen=True)
class PhaseGrid:
    """The 2M equidistant phases ``phi_k = k*pi/M`` and their bases.

    Basis ``B_k`` is the ordered pair (phi_k, phi_k + pi): the first phase
    encodes bit 0, the second bit 1.
    """

    M: int
    angles: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        object.__setattr__(self, "angles", np.arange(2 * self.M) * (math.pi / self.M))

    @property
    def size(self) -> int:
        return 2 * self.M

    @property
    def spacing(self) -> float:
        return math.pi / self.M

    def angle(self, k: int) -> float:
        return (k % self.size) * math.pi / self.M

    def partner(self, k: int) -> int:
        """Index whose basis holds the same two states with swapped bits."""
        return (k + self.M) % self.size

    def basis(self, k: int) -> tuple[float, float]:
        phi = self.angle(k)
        return phi, wrap_angle(phi + math.pi)

    def encode(self, k: int, bit: int) -> float:
        """Rotation angle that prepares ``bit`` in basis ``B_k``."""
        return self.basis(k)[bit]


def poisson_tail(mean_n: float, n_max: int) -> float:
    """Probability mass strictly above ``n_max`` for Poisson(mean_n)."""
    return float(poisson.sf(n_max, mean_n))


def truncation_dim(mean_n: float, eps_tail: float = DEFAULT_EPS_TAIL) -> int:
    """Number of Fock levels needed so the discarded Poisson tail is below ``eps_tail``.

    Returns ``N_max + 1`` where ``N_max`` is the smallest cutoff with
    ``P(n > N_max) < eps_tail``.
    """
    if not mean_n > 0.0:
        raise ValueError("mean_n must be positive")
    if not 0.0 < eps_tail < 1.0:
        raise ValueError("eps_tail must lie in (0, 1)")
    # start a few sigma below the answer, then walk up
    n = max(0, int(mean_n + math.sqrt(mean_n) * 3.0) - 1)
    while n > 0 and poisson_tail(mean_n, n - 1) < eps_tail:
        n -= 1
    while poisson_tail(mean_n, n) >= eps_tail:
        n += 1
    return n + 1


def coherent_coeffs(alpha: Amplitude, dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError("dim must be at least 1")
    n = np.arange(dim)
    log_mag = -0.5 * alpha.mean_n + n * math.log(alpha.modulus) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * alpha.phase)


def coherent_vector(alpha: Amplitude, dim: int, eps_tail: float | None = None) -> FockVector:
    """Truncated number-basis expansion of ``|alpha>``.

    Coefficients are assembled in the log domain, so ``dim`` far beyond the
    factorial overflow point (n ~ 171) is fine. When ``eps_tail`` is given the
    discarded Poisson mass must stay below it.
    """
    if eps_tail is not None:
        tail = poisson_tail(alpha.mean_n, dim - 1)
        if tail >= eps_tail:
            raise TruncationError(
                f"dim={dim} drops tail mass {tail:.3g} >= eps_tail={eps_tail:.3g} "
                f"for mean_n={alpha.mean_n:g}"
            )
    return FockVector(coherent_coeffs(alpha, dim))


def rotate(alpha: Amplitude, phi: float) -> Amplitude:
    """Apply ``R(phi)``: the returned phase is ``(theta - phi) mod 2*pi``."""
    return Amplitude(alpha.modulus, alpha.phase - phi)


def overlap_sq(mean_a: float, mean_b: float, dphi: float) -> float:
    """``|<a|b>|^2`` for coherent states of intensities ``mean_a``, ``mean_b``
    whose phases differ by ``dphi``."""
    arg = mean_a + mean_b - 2.0 * math.sqrt(mean_a * mean_b) * math.cos(dphi)
    return math.exp(-max(arg, 0.0))


def fidelity(alpha_mag_sq: float, dphi: float) -> float:
    """Overlap ``exp(-4|alpha|^2 sin^2(dphi/2))`` of two equal-intensity states."""
    if not alpha_mag_sq > 0.0:
        raise ValueError("alpha_mag_sq must be positive")
    s = math.sin(0.5 * dphi)
    return math.exp(-4.0 * alpha_mag_sq * s * s)


def helstrom_error(fidelity: float) -> float:
    """Minimum error for telling apart two equiprobable pure states.

    Uses ``F / (2 (1 + sqrt(1 - F)))``, algebraically equal to
    ``(1 - sqrt(1 - F)) / 2`` but free of cancellation for small F.
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity!r}")
    return 0.5 * fidelity / (1.0 + math.sqrt(1.0 - fidelity))
