"""Eavesdropping strategies and analytic leakage/detection figures.

Strategies hook both quantum legs of a run and listen to the public channel.
Collective attacks (entangled ancillas measured after the classical
exchange) are deliberately absent: in this protocol no classical data about
the key-bearing pulses is ever published, so there is nothing for such an
attack to wait for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ensemble import LN2, ensemble_entropy
from .fock import DEFAULT_EPS_TAIL, Amplitude, wrap_angle
from .measurement import RngStream, measure_in_basis
from .protocol import CoherentPulse, ProtocolConfig, Provenance, kept_positions

KINDS = ("none", "full-mitm", "intercept-resend", "beam-split")


class AdversaryStateError(RuntimeError):
    """A strategy hook was called out of order."""


def _pick_targets(n: int, fraction: float, rng: RngStream) -> np.ndarray:
    """Boolean mask with exactly ``round(fraction * n)`` tampered positions."""
    count = int(round(fraction * n))
    mask = np.zeros(n, dtype=bool)
    if count >= n:
        mask[:] = True
    elif count > 0:
        mask[rng.permutation(n)[:count]] = True
    return mask


class AdversaryStrategy:
    """Base strategy: leaves every pulse alone.

    Instances keep per-run memory and must not be shared between runs that
    execute concurrently.
    """

    kind = "none"

    def __init__(self):
        self.config: Optional[ProtocolConfig] = None
        self.public: dict = {}

    def begin_run(self, config: ProtocolConfig) -> None:
        self.config = config
        self.public = {}

    def observe(self, kind: str, value) -> None:
        self.public[kind] = value

    def on_forward(self, pulses: list[CoherentPulse], rng: RngStream) -> list[CoherentPulse]:
        return pulses

    def on_return(self, pulses: list[CoherentPulse], rng: RngStream) -> list[CoherentPulse]:
        return pulses

    def describe(self) -> str:
        return self.kind


class NoAttack(AdversaryStrategy):
    pass


class FullMITM(AdversaryStrategy):
    """Store Alice's pulses, hand Bob substitutes, read his flips off them and
    re-apply the flips to the stored originals.

    Substitutes use grid phases by default (``continuous=True`` draws any
    phase) at the honest intensity. ``fraction`` < 1 substitutes only that
    share of the pulses and forwards the rest untouched.
    """

    kind = "full-mitm"

    def __init__(self, continuous: bool = False, fraction: float = 1.0):
        super().__init__()
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        self.continuous = continuous
        self.fraction = fraction
        self.stored: Optional[list[CoherentPulse]] = None
        self.eve_phases: Optional[np.ndarray] = None
        self.substituted: Optional[np.ndarray] = None
        self.decoded_r: list[Optional[int]] = []

    def begin_run(self, config):
        super().begin_run(config)
        self.stored = self.eve_phases = self.substituted = None
        self.decoded_r = []

    def on_forward(self, pulses, rng):
        cfg = self.config
        n = len(pulses)
        self.stored = list(pulses)
        self.substituted = _pick_targets(n, self.fraction, rng)
        if self.continuous:
            phases = rng.random(n) * 2.0 * math.pi
        else:
            e = rng.integers(0, cfg.grid.size, size=n)
            phases = np.array([cfg.expected_phase(int(x)) for x in e])
        self.eve_phases = phases
        out = []
        for p, sub, phi in zip(pulses, self.substituted, phases):
            if sub:
                out.append(CoherentPulse(p.index, cfg.received_mean_n, wrap_angle(float(phi)), Provenance.SUBSTITUTED))
            else:
                out.append(p)
        return out

    def on_return(self, pulses, rng):
        if self.stored is None:
            raise AdversaryStateError("full-mitm return leg without a stored forward batch")
        if "v" not in self.public:
            raise AdversaryStateError("full-mitm needs the public disclosure string v")
        kept = kept_positions(self.public["v"])
        mean = self.config.received_mean_n
        out, decoded = [], []
        for j, p in enumerate(pulses):
            i = kept[j]
            if not self.substituted[i]:
                decoded.append(None)
                out.append(p)
                continue
            bit = measure_in_basis(p, mean, float(self.eve_phases[i]), rng)
            decoded.append(bit)
            original = self.stored[i].reindexed(j)
            out.append(original.rotated(math.pi) if bit else original)
        self.decoded_r = decoded
        return out


class InterceptResend(AdversaryStrategy):
    """Measure each pulse in a random grid basis and resend what was read."""

    kind = "intercept-resend"

    def __init__(self, return_leg: bool = False, fraction: float = 1.0):
        super().__init__()
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        self.return_leg = return_leg
        self.fraction = fraction
        self.records: list[tuple[int, int, int]] = []  # (index, basis, bit)

    def begin_run(self, config):
        super().begin_run(config)
        self.records = []

    def _measure_resend(self, pulses, rng):
        cfg = self.config
        targets = _pick_targets(len(pulses), self.fraction, rng)
        bases = rng.integers(0, cfg.grid.size, size=len(pulses))
        out = []
        for p, hit, b in zip(pulses, targets, bases):
            if not hit:
                out.append(p)
                continue
            ref = cfg.expected_phase(int(b))
            bit = measure_in_basis(p, cfg.received_mean_n, ref, rng)
            self.records.append((p.index, int(b), bit))
            phase = wrap_angle(ref - math.pi * bit)
            out.append(CoherentPulse(p.index, cfg.received_mean_n, phase, Provenance.MEASURED_RESENT))
        return out

    def on_forward(self, pulses, rng):
        return self._measure_resend(pulses, rng)

    def on_return(self, pulses, rng):
        return self._measure_resend(pulses, rng) if self.return_leg else pulses


class BeamSplit(AdversaryStrategy):
    """Tap a fraction ``1 - T`` of every forward pulse's intensity."""

    kind = "beam-split"

    def __init__(self, T: float):
        super().__init__()
        if not 0.0 < T < 1.0:
            raise ValueError("beam-split transmittance must lie in (0, 1); T=1 is no attack")
        self.T = T
        self.tapped: list[CoherentPulse] = []

    def begin_run(self, config):
        super().begin_run(config)
        self.tapped = []

    def on_forward(self, pulses, rng):
        T = self.T
        self.tapped = [
            CoherentPulse(p.index, p.mean_n_true * (1.0 - T), p.phase_true, Provenance.ATTENUATED) for p in pulses
        ]
        return [CoherentPulse(p.index, p.mean_n_true * T, p.phase_true, Provenance.ATTENUATED) for p in pulses]

    def describe(self):
        return f"beam-split:{self.T!r}"


def make_adversary(spec: str) -> AdversaryStrategy:
    """Build a strategy from ``none``, ``full-mitm``, ``full-mitm:continuous``,
    ``intercept-resend``, ``intercept-resend:both`` or ``beam-split:T``."""
    name, _, arg = spec.strip().partition(":")
    if name == "none":
        return NoAttack()
    if name == "full-mitm":
        if arg not in ("", "grid", "continuous"):
            raise ValueError(f"unknown full-mitm option {arg!r}")
        return FullMITM(continuous=arg == "continuous")
    if name == "intercept-resend":
        if arg not in ("", "forward", "both"):
            raise ValueError(f"unknown intercept-resend option {arg!r}")
        return InterceptResend(return_leg=arg == "both")
    if name == "beam-split":
        try:
            T = float(arg)
        except ValueError:
            raise ValueError(f"beam-split needs a transmittance, got {spec!r}") from None
        if T == 1.0:
            return NoAttack()
        return BeamSplit(T)
    raise ValueError(f"unknown adversary {spec!r}; choose from {', '.join(KINDS)}")


def expected_mitm_pass_prob(mean_n: float, M: int) -> float:
    """Chance that one uniformly mis-phased grid substitute passes the state test."""
    if not mean_n > 0.0:
        raise ValueError("mean_n must be positive")
    if M < 1:
        raise ValueError("M must be positive")
    k = np.arange(2 * M)
    return float(np.mean(np.exp(-4.0 * mean_n * np.sin(k * math.pi / (2 * M)) ** 2)))


def expected_beam_split_pass_prob(mean_n: float, T: float) -> float:
    """State-test pass chance of a pulse attenuated from ``mean_n`` to ``T * mean_n``."""
    return math.exp(-mean_n * (1.0 - math.sqrt(T)) ** 2)


@dataclass(frozen=True)
class LeakageReport:
    K: int
    M: int
    mean_n: float
    entropy_bits_per_pulse: float
    holevo_bound_bits: float
    basis_entropy_bits: float  # K log2(2M), uniform basis index
    basis_pair_entropy_bits: float  # K log2(M), the margin's reference
    mitm_per_pulse_pass: float
    mitm_overall_pass: float

    @property
    def margin(self) -> float:
        """Holevo bound as a fraction of the basis-pair entropy."""
        if self.basis_pair_entropy_bits == 0.0:
            return math.inf if self.holevo_bound_bits > 0 else 0.0
        return self.holevo_bound_bits / self.basis_pair_entropy_bits

    def as_dict(self) -> dict:
        return {
            "K": self.K,
            "M": self.M,
            "mean_n": self.mean_n,
            "entropy_bits_per_pulse": self.entropy_bits_per_pulse,
            "holevo_bound_bits": self.holevo_bound_bits,
            "basis_entropy_bits": self.basis_entropy_bits,
            "basis_pair_entropy_bits": self.basis_pair_entropy_bits,
            "mitm_per_pulse_pass": self.mitm_per_pulse_pass,
            "mitm_overall_pass": self.mitm_overall_pass,
        }


def holevo_leak(mean_n: float, M: int, K: int, eps_tail: float = DEFAULT_EPS_TAIL) -> LeakageReport:
    """Bound on what Eve can learn about the basis string of ``K`` pulses.

    The K-pulse state is a tensor power of the single-pulse ensemble, so its
    entropy is exactly ``K`` times the single-pulse value.
    """
    if K < 0 or K % 2:
        raise ValueError("K must be a non-negative even integer")
    s_bits = ensemble_entropy(Amplitude.from_mean_n(mean_n), M, eps_tail=eps_tail) / LN2
    p = expected_mitm_pass_prob(mean_n, M)
    return LeakageReport(
        K=K,
        M=M,
        mean_n=mean_n,
        entropy_bits_per_pulse=s_bits,
        holevo_bound_bits=K * s_bits,
        basis_entropy_bits=K * math.log2(2 * M),
        basis_pair_entropy_bits=K * math.log2(M),
        mitm_per_pulse_pass=p,
        mitm_overall_pass=p ** (K // 2),
    )


def analytic_abort_bound(kind: str, mean_n: float, M: int, K: int, T: float | None = None) -> Optional[float]:
    """Lower bound on the Step 2c abort probability from state tests alone."""
    if kind == "none":
        return 0.0
    if kind == "full-mitm":
        return 1.0 - expected_mitm_pass_prob(mean_n, M) ** (K // 2)
    if kind == "beam-split" and T is not None:
        return 1.0 - expected_beam_split_pass_prob(mean_n, T) ** (K // 2)
    return None

