"""Monte Carlo batches over independent protocol runs.

Run ``i`` of a batch draws from ``RngStream(seed, f"{prefix}run-{i}")``, so
results do not depend on the worker count or on completion order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .adversary import FullMITM, make_adversary
from .measurement import CheckKind, RngStream
from .protocol import Outcome, ProtocolConfig, ProtocolTranscript, run_protocol


def default_workers() -> int:
    env = os.environ.get("PHASEFLIP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class RunResult:
    """What a batch keeps from one run (transcripts are optional: they are big)."""

    index: int
    outcome: Outcome
    keys_match: bool
    key_length: int
    bit_errors: int
    # state tests Bob ran on substituted / tampered pulses
    state_tests: int
    state_passes: int
    eve_decoded: int = 0
    eve_correct: int = 0
    transcript: Optional[str] = None


def _one_run(args) -> RunResult:
    config, adversary_spec, seed, prefix, index, keep_transcript = args
    adversary = make_adversary(adversary_spec) if adversary_spec != "none" else None
    rng = RngStream(seed, f"{prefix}run-{index}")
    t: ProtocolTranscript = run_protocol(config, adversary, rng)
    checks = [c for c in t.bob_checks if c.kind is CheckKind.STATE_FIDELITY]
    bit_errors = 0
    if t.completed:
        bit_errors = sum(a != b for a, b in zip(t.alice_key, t.bob_key))
    eve_decoded = eve_correct = 0
    if isinstance(adversary, FullMITM) and adversary.decoded_r:
        r = t.secrets["r"]
        pairs = [(d, int(x)) for d, x in zip(adversary.decoded_r, r) if d is not None]
        eve_decoded = len(pairs)
        eve_correct = sum(d == x for d, x in pairs)
    return RunResult(
        index=index,
        outcome=t.outcome,
        keys_match=t.keys_match,
        key_length=len(t.alice_key) if t.completed else 0,
        bit_errors=bit_errors,
        state_tests=len(checks),
        state_passes=sum(c.passed for c in checks),
        eve_decoded=eve_decoded,
        eve_correct=eve_correct,
        transcript=t.serialize() if keep_transcript else None,
    )


def run_batch(
    config: ProtocolConfig,
    adversary: str = "none",
    runs: int = 1,
    seed: int = 0,
    workers: int = 1,
    keep_transcripts: bool = False,
    prefix: str = "",
) -> list[RunResult]:
    """Execute ``runs`` independent protocol runs; results in run order."""
    make_adversary(adversary)  # fail fast on a bad spec
    jobs = [(config, adversary, seed, prefix, i, keep_transcripts) for i in range(runs)]
    if workers <= 1 or runs < 2:
        return [_one_run(j) for j in jobs]
    chunk = max(1, runs // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one_run, jobs, chunksize=chunk))


@dataclass
class BatchSummary:
    runs: int
    completed: int
    aborted_2c: int
    aborted_3a: int
    key_match_rate: Optional[float]
    mean_key_length: Optional[float]
    bit_errors: int = 0
    key_bits: int = 0
    state_tests: int = 0
    state_passes: int = 0
    eve_decoded: int = 0
    eve_correct: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def abort_rate(self) -> float:
        return (self.aborted_2c + self.aborted_3a) / self.runs if self.runs else 0.0

    @property
    def bit_error_rate(self) -> Optional[float]:
        return self.bit_errors / self.key_bits if self.key_bits else None

    @property
    def state_pass_rate(self) -> Optional[float]:
        return self.state_passes / self.state_tests if self.state_tests else None


def summarize(results: Iterable[RunResult]) -> BatchSummary:
    results = list(results)
    done = [r for r in results if r.outcome is Outcome.COMPLETED]
    return BatchSummary(
        runs=len(results),
        completed=len(done),
        aborted_2c=sum(r.outcome is Outcome.ABORTED_2C for r in results),
        aborted_3a=sum(r.outcome is Outcome.ABORTED_3A for r in results),
        key_match_rate=(sum(r.keys_match for r in done) / len(done)) if done else None,
        mean_key_length=(sum(r.key_length for r in done) / len(done)) if done else None,
        bit_errors=sum(r.bit_errors for r in done),
        key_bits=sum(r.key_length for r in done),
        state_tests=sum(r.state_tests for r in results),
        state_passes=sum(r.state_passes for r in results),
        eve_decoded=sum(r.eve_decoded for r in results),
        eve_correct=sum(r.eve_correct for r in results),
    )
