"""Executable phase-flip key distribution between simulated Alice and Bob.

Round structure:

1. Alice draws basis indices ``k`` on the 2M grid and sends one coherent
   pulse per index.
2. Alice discloses a random half of ``k`` (string ``v``, masked ``k'``); Bob
   tests those pulses, keeps the other half, flips the phase of kept pulse
   ``j`` by ``r_j * pi`` and returns them. Bob then discloses a random half of
   ``r`` (``w``, masked ``r'``); the undisclosed half is the key.
3. Alice tests the ``w_j = 0`` pulses against ``phi_k + r'_j pi`` and reads
   the ``w_j = 1`` pulses back in the computational basis.

Positions with ``v_j = 0`` are the ones Bob consumes in verification; the
kept positions are re-indexed ``0 .. K/2 - 1`` in original order and the map
is recorded in the transcript. The classical channel is authenticated by
construction: messages are delivered verbatim and every listener (including
an adversary) sees them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .fock import Amplitude, PhaseGrid, rotate, wrap_angle
from .measurement import (
    DEFAULT_SIGNIFICANCE,
    RngStream,
    VerificationOutcome,
    measure_in_basis,
    photon_number_test,
    sample_photon_count,
    verify_pulse,
)

if TYPE_CHECKING:
    from .adversary import AdversaryStrategy

BLANK = None  # the masked-out default value; rendered as "-"
BLANK_TEXT = "-"


class Provenance(str, Enum):
    HONEST = "honest"
    SUBSTITUTED = "substituted"
    ATTENUATED = "attenuated"
    MEASURED_RESENT = "measured-resent"


class Outcome(str, Enum):
    COMPLETED = "completed"
    ABORTED_2C = "aborted-at-step-2c"
    ABORTED_3A = "aborted-at-step-3a"


class PhotonTestMode(str, Enum):
    AGGREGATE = "aggregate"
    PER_PULSE = "per-pulse"
    OFF = "off"


class ProtocolError(ValueError):
    """Invalid configuration or inconsistent round data."""


@dataclass(frozen=True)
class CoherentPulse:
    index: int
    mean_n_true: float
    phase_true: float
    provenance: Provenance = Provenance.HONEST

    def rotated(self, phi: float) -> "CoherentPulse":
        """Pulse after ``R(phi)``."""
        return replace(self, phase_true=wrap_angle(self.phase_true - phi))

    def reindexed(self, index: int) -> "CoherentPulse":
        return replace(self, index=index)


@dataclass(frozen=True)
class ProtocolConfig:
    K: int
    M: int
    mean_n: float
    theta_ref: float = 0.0
    seed: int = 0
    significance: float = DEFAULT_SIGNIFICANCE
    expected_channel_transmittance: float = 1.0
    max_fidelity_failures: int = 0
    photon_test: PhotonTestMode = PhotonTestMode.AGGREGATE
    # excess discrimination error on top of the Helstrom limit
    error_floor: float = 0.0

    def __post_init__(self):
        if self.K <= 0 or self.K % 4:
            raise ProtocolError(f"K must be a positive multiple of 4, got {self.K}")
        if self.M < 1:
            raise ProtocolError(f"M must be a positive integer, got {self.M}")
        if not self.mean_n > 0.0:
            raise ProtocolError(f"mean_n must be positive, got {self.mean_n}")
        if not 0.0 < self.significance < 1.0:
            raise ProtocolError("significance must lie in (0, 1)")
        if not 0.0 < self.expected_channel_transmittance <= 1.0:
            raise ProtocolError("expected_channel_transmittance must lie in (0, 1]")
        if self.max_fidelity_failures < 0:
            raise ProtocolError("max_fidelity_failures must be non-negative")
        object.__setattr__(self, "photon_test", PhotonTestMode(self.photon_test))

    @cached_property
    def grid(self) -> PhaseGrid:
        return PhaseGrid(self.M)

    @cached_property
    def alpha(self) -> Amplitude:
        return Amplitude.from_mean_n(self.mean_n, self.theta_ref)

    @property
    def received_mean_n(self) -> float:
        """Intensity an untampered pulse has on arrival."""
        return self.mean_n * self.expected_channel_transmittance

    @property
    def security_advisory(self) -> Optional[str]:
        if self.mean_n >= self.M:
            return (
                f"mean_n={self.mean_n:g} >= M={self.M}: basis entropy does not dominate "
                "the ensemble entropy; choose M much larger than mean_n"
            )
        return None

    def expected_phase(self, k: int, extra: float = 0.0) -> float:
        """Phase of ``R(phi_k + extra)|alpha>``."""
        return rotate(self.alpha, self.grid.angle(k) + extra).phase


# --------------------------------------------------------------------------
# transcript

@dataclass(frozen=True)
class Event:
    step: str
    direction: str
    kind: str
    payload: str

    def line(self) -> str:
        return f"{self.step}|{self.direction}|{self.kind}|{self.payload}"

    @property
    def is_classical_message(self) -> bool:
        return "->" in self.direction and self.kind != "quantum"


def render_bits(bits: Sequence[Optional[int]]) -> str:
    return "".join(BLANK_TEXT if b is BLANK else str(int(b)) for b in bits)


def render_indices(values: Sequence[Optional[int]]) -> str:
    return ",".join(BLANK_TEXT if x is BLANK else str(int(x)) for x in values)


def parse_bits(text: str) -> list[Optional[int]]:
    return [BLANK if ch == BLANK_TEXT else int(ch) for ch in text]


def parse_indices(text: str) -> list[Optional[int]]:
    if not text:
        return []
    return [BLANK if tok == BLANK_TEXT else int(tok) for tok in text.split(",")]


@dataclass
class ProtocolTranscript:
    events: list[Event] = field(default_factory=list)
    outcome: Optional[Outcome] = None
    alice_key: Optional[list[int]] = None
    bob_key: Optional[list[int]] = None
    kept_indices: list[int] = field(default_factory=list)
    bob_checks: list[VerificationOutcome] = field(default_factory=list)
    alice_checks: list[VerificationOutcome] = field(default_factory=list)
    # simulation ground truth, never serialised
    secrets: dict = field(default_factory=dict, repr=False)

    def record(self, step: str, direction: str, kind: str, payload: str) -> Event:
        if "|" in payload or "\n" in payload:
            raise ValueError("payload may not contain '|' or newlines")
        ev = Event(step, direction, kind, payload)
        self.events.append(ev)
        return ev

    def classical_messages(self) -> list[Event]:
        return [e for e in self.events if e.is_classical_message]

    @property
    def completed(self) -> bool:
        return self.outcome is Outcome.COMPLETED

    @property
    def keys_match(self) -> bool:
        return self.completed and self.alice_key == self.bob_key

    def serialize(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)


def parse_transcript(text: str) -> list[Event]:
    events = []
    for raw in text.splitlines():
        if not raw:
            continue
        step, direction, kind, payload = raw.split("|", 3)
        events.append(Event(step, direction, kind, payload))
    return events


class ClassicalChannel:
    """Public authenticated broadcast: delivered verbatim, readable by all."""

    def __init__(self, transcript: ProtocolTranscript, listeners=()):
        self.transcript = transcript
        self.listeners = list(listeners)

    def send(self, step: str, sender: str, receiver: str, kind: str, value, payload: str):
        self.transcript.record(step, f"{sender}->{receiver}", kind, payload)
        for listener in self.listeners:
            listener.observe(kind, value)
        return value


# --------------------------------------------------------------------------
# protocol steps

def fixed_weight_string(n: int, weight: int, rng: RngStream) -> np.ndarray:
    """Uniformly random 0/1 string of length ``n`` with exactly ``weight`` ones."""
    template = np.zeros(n, dtype=np.int64)
    template[:weight] = 1
    return template[rng.permutation(n)]


def alice_prepare(config: ProtocolConfig, rng: RngStream) -> tuple[np.ndarray, list[CoherentPulse]]:
    """Draw basis indices and prepare bit 0 in each basis."""
    grid = config.grid
    k = rng.integers(0, grid.size, size=config.K)
    alpha = config.alpha
    mean = config.received_mean_n
    pulses = [
        CoherentPulse(j, mean, rotate(alpha, grid.angle(int(kj))).phase, Provenance.HONEST)
        for j, kj in enumerate(k)
    ]
    return k, pulses


def alice_disclose(k: Sequence[int], rng: RngStream) -> tuple[np.ndarray, list[Optional[int]]]:
    """Pick ``v`` of weight K/2 and mask ``k`` where ``v_j = 1``."""
    K = len(k)
    v = fixed_weight_string(K, K // 2, rng)
    k_prime = [int(kj) if vj == 0 else BLANK for kj, vj in zip(k, v)]
    return v, k_prime


@dataclass
class VerificationReport:
    proceed: bool
    state_checks: list[VerificationOutcome]
    photon_checks: list[VerificationOutcome]
    reason: str = ""

    @property
    def state_failures(self) -> int:
        return sum(not c.passed for c in self.state_checks)

    def payload(self) -> str:
        parts = [f"state_failures={self.state_failures}/{len(self.state_checks)}"]
        if self.photon_checks:
            worst = min(c.pass_probability for c in self.photon_checks)
            parts.append(f"photon_p={worst!r}")
        parts.append("result=" + ("pass" if self.proceed else "fail"))
        return ";".join(parts)


def _run_checks(
    pulses: Sequence[CoherentPulse],
    expected_phases: Sequence[float],
    config: ProtocolConfig,
    rng: RngStream,
) -> VerificationReport:
    if not pulses:
        raise ProtocolError("no pulses to verify")
    expected_mean = config.received_mean_n
    state = [verify_pulse(phi, p, rng, expected_mean) for phi, p in zip(expected_phases, pulses)]
    photon: list[VerificationOutcome] = []
    if config.photon_test is not PhotonTestMode.OFF:
        counts = [sample_photon_count(p.mean_n_true, rng) for p in pulses]
        if config.photon_test is PhotonTestMode.AGGREGATE:
            photon = [photon_number_test(counts, expected_mean, config.significance)]
        else:
            per = config.significance / len(counts)
            photon = [
                photon_number_test([c], expected_mean, per, p.index) for c, p in zip(counts, pulses)
            ]
    failures = sum(not c.passed for c in state)
    reasons = []
    if failures > config.max_fidelity_failures:
        reasons.append(f"state-fidelity:{failures}")
    bad_photon = sum(not c.passed for c in photon)
    if bad_photon:
        reasons.append(f"photon-number:{bad_photon}")
    return VerificationReport(not reasons, state, photon, ";".join(reasons))


def bob_verify(
    pulses: Sequence[CoherentPulse],
    v: Sequence[int],
    k_prime: Sequence[Optional[int]],
    config: ProtocolConfig,
    rng: RngStream,
) -> VerificationReport:
    """Test every disclosed pulse against the state its basis index implies."""
    if not len(pulses) == len(v) == len(k_prime):
        raise ProtocolError("pulses, v and k' differ in length")
    disclosed = [j for j, vj in enumerate(v) if vj == 0]
    if not disclosed:
        raise ProtocolError("v discloses no pulses")
    if any(k_prime[j] is BLANK for j in disclosed):
        raise ProtocolError("k' is blank at a disclosed position")
    return _run_checks(
        [pulses[j] for j in disclosed],
        [config.expected_phase(k_prime[j]) for j in disclosed],
        config,
        rng,
    )


def bob_encode(pulses_kept: Sequence[CoherentPulse], r: Sequence[int]) -> list[CoherentPulse]:
    """Flip the phase of kept pulse ``j`` by ``pi`` where ``r_j = 1``."""
    if len(pulses_kept) != len(r):
        raise ProtocolError("r and kept pulses differ in length")
    return [p.rotated(math.pi) if rj else p for p, rj in zip(pulses_kept, r)]


def bob_disclose(r: Sequence[int], rng: RngStream) -> tuple[np.ndarray, list[Optional[int]], list[int]]:
    """Pick ``w`` of weight |r|/2; returns ``(w, r', final_key)``."""
    n = len(r)
    w = fixed_weight_string(n, n // 2, rng)
    return w, mask_bits(r, w), key_from_mask(r, w)


def mask_bits(r: Sequence[int], w: Sequence[int]) -> list[Optional[int]]:
    return [int(rj) if wj == 0 else BLANK for rj, wj in zip(r, w)]


def key_from_mask(r: Sequence[int], w: Sequence[int]) -> list[int]:
    return [int(rj) for rj, wj in zip(r, w) if wj == 1]


def kept_positions(v: Sequence[int]) -> list[int]:
    return [j for j, vj in enumerate(v) if vj == 1]


def alice_verify(
    pulses: Sequence[CoherentPulse],
    k: Sequence[int],
    v: Sequence[int],
    w: Sequence[int],
    r_prime: Sequence[Optional[int]],
    config: ProtocolConfig,
    rng: RngStream,
) -> VerificationReport:
    """Alice's check of the returned pulses Bob disclosed (``w_j = 0``)."""
    kept = kept_positions(v)
    if not len(kept) == len(pulses) == len(w) == len(r_prime):
        raise ProtocolError("returned pulses do not line up with v, w and r'")
    tested = [j for j, wj in enumerate(w) if wj == 0]
    if any(r_prime[j] is BLANK for j in tested):
        raise ProtocolError("r' is blank at a disclosed position")
    return _run_checks(
        [pulses[j] for j in tested],
        [config.expected_phase(int(k[kept[j]]), r_prime[j] * math.pi) for j in tested],
        config,
        rng,
    )


def alice_decode(
    pulses: Sequence[CoherentPulse],
    k: Sequence[int],
    config: ProtocolConfig,
    rng: RngStream,
) -> list[int]:
    """Read key pulses in their own bases.

    ``pulses[j]`` was prepared in basis ``k[j]``; rotating back by
    ``-phi_k`` and discriminating in the computational basis is the same as
    discriminating directly in ``B_k``.
    """
    if len(pulses) != len(k):
        raise ProtocolError("key pulses and bases differ in length")
    mean = config.received_mean_n
    return [
        int(measure_in_basis(p, mean, config.expected_phase(int(kj)), rng, config.error_floor))
        for p, kj in zip(pulses, k)
    ]


def _abort(transcript: ProtocolTranscript, channel: ClassicalChannel, step: str, sender: str,
           receiver: str, outcome: Outcome, reason: str) -> ProtocolTranscript:
    channel.send(step, sender, receiver, "abort", reason, reason)
    transcript.outcome = outcome
    transcript.record("end", "-", "outcome", outcome.value)
    return transcript


def run_protocol(
    config: ProtocolConfig,
    adversary: Optional["AdversaryStrategy"] = None,
    rng: Optional[RngStream] = None,
) -> ProtocolTranscript:
    """Run Steps 1-3 once, passing both quantum legs through ``adversary``.

    Aborts are outcomes recorded in the transcript; only invalid inputs raise.
    """
    rng = rng if rng is not None else RngStream(config.seed, "protocol")
    alice_rng, bob_rng, eve_rng = rng.child("alice"), rng.child("bob"), rng.child("eve")
    t = ProtocolTranscript()
    listeners = []
    if adversary is not None:
        adversary.begin_run(config)
        listeners.append(adversary)
    channel = ClassicalChannel(t, listeners)
    K = config.K

    # step 1
    k, pulses = alice_prepare(config, alice_rng)
    t.secrets["k"] = k
    t.record("1b", "alice->bob", "quantum", f"pulses={K}")
    if adversary is not None:
        pulses = adversary.on_forward(pulses, eve_rng)

    # step 2
    channel.send("2a", "bob", "alice", "ack", "received", "received")
    v, k_prime = alice_disclose(k, alice_rng)
    channel.send("2b", "alice", "bob", "v", v, render_bits(v))
    channel.send("2b", "alice", "bob", "k_prime", k_prime, render_indices(k_prime))
    t.secrets["v"] = v

    check = bob_verify(pulses, v, k_prime, config, bob_rng)
    t.bob_checks = check.state_checks + check.photon_checks
    t.record("2c", "bob", "verify", check.payload())
    if not check.proceed:
        return _abort(t, channel, "2c", "bob", "alice", Outcome.ABORTED_2C, check.reason)

    kept = kept_positions(v)
    t.kept_indices = kept
    t.record("2d", "bob", "index_map", render_indices(kept))
    r = bob_rng.integers(0, 2, size=K // 2)
    t.secrets["r"] = r
    encoded = bob_encode([pulses[i].reindexed(j) for j, i in enumerate(kept)], r)
    t.record("2e", "bob->alice", "quantum", f"pulses={K // 2}")
    if adversary is not None:
        encoded = adversary.on_return(encoded, eve_rng)

    w, r_prime, bob_key = bob_disclose(r, bob_rng)
    t.secrets["w"] = w
    channel.send("2f", "bob", "alice", "w", w, render_bits(w))
    channel.send("2f", "bob", "alice", "r_prime", r_prime, render_bits(r_prime))

    # step 3
    check = alice_verify(encoded, k, v, w, r_prime, config, alice_rng)
    t.alice_checks = check.state_checks + check.photon_checks
    t.record("3a", "alice", "verify", check.payload())
    if not check.proceed:
        return _abort(t, channel, "3a", "alice", "bob", Outcome.ABORTED_3A, check.reason)

    key_slots = [j for j, wj in enumerate(w) if wj == 1]
    alice_key = alice_decode(
        [encoded[j] for j in key_slots], [k[kept[j]] for j in key_slots], config, alice_rng
    )
    t.record("3b", "alice", "decode", f"bits={len(alice_key)}")
    channel.send("3b", "alice", "bob", "ack", "done", "done")
    t.alice_key, t.bob_key = alice_key, bob_key
    t.record("end", "alice", "key", render_bits(alice_key))
    t.record("end", "bob", "key", render_bits(bob_key))
    t.outcome = Outcome.COMPLETED
    t.record("end", "-", "outcome", Outcome.COMPLETED.value)
    return t
