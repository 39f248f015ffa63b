"""Command-line experiments: entropy scans, plateau scans, protocol runs and
attack sweeps. Every command writes its data file(s) plus a JSON manifest.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O failure.
Environment: ``PHASEFLIP_OUTPUT_DIR`` is the directory used for outputs given
as bare file names (or omitted); ``PHASEFLIP_WORKERS`` sets the default pool
size.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .adversary import analytic_abort_bound, holevo_leak, make_adversary
from .ensemble import (
    DEFAULT_M_CAP,
    DEFAULT_PLATEAU_TOL,
    InvalidDensityMatrix,
    PlateauNotReached,
    entropy_csv,
    entropy_report,
    log_slope,
    smax_csv,
    smax_point,
)
from .experiments import default_workers, run_batch, summarize
from .fock import DEFAULT_EPS_TAIL, Amplitude, TruncationError
from .protocol import ProtocolConfig, ProtocolError

log = logging.getLogger("phaseflip")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
DETECTION_NOTE = "state test modelled as a projection onto the expected state; detection rates are upper bounds"
SWEEP_HEADER = (
    "adversary,mean_n,M,T,K,runs,aborted,aborted_2c,aborted_3a,abort_rate,analytic_abort_bound"
)
SIMULATE_FIELDS = (
    "runs",
    "completed",
    "aborted_2c",
    "aborted_3a",
    "key_match_rate",
    "mean_key_length",
    "holevo_bound_bits",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# value parsing

def _expand_ellipsis(head: list[float], stop: float) -> list[float]:
    if len(head) < 2:
        raise UsageError("'...' needs at least two leading terms")
    diffs = {b - a for a, b in zip(head, head[1:])}
    ratios = {b / a for a, b in zip(head, head[1:])} if all(head) else set()
    if len(head) >= 3 and len(ratios) == 1 and len(diffs) > 1:
        (r,) = ratios
        if r <= 1:
            raise UsageError("geometric progression must grow")
        out = list(head)
        while out[-1] * r <= stop * (1 + 1e-12):
            out.append(out[-1] * r)
        return out
    if len(diffs) == 1:
        (d,) = diffs
        if d <= 0:
            raise UsageError("arithmetic progression must grow")
        n = int(math.floor((stop - head[0]) / d + 1e-9))
        return [head[0] + i * d for i in range(n + 1)]
    raise UsageError("terms before '...' are neither arithmetic nor geometric")


def parse_number_list(text: str, cast=float) -> list:
    """``"1,2,4"``, ``"1,2,4,...,4096"`` (progression) or ``"a:b"`` (doubling)."""
    text = text.strip()
    if not text:
        raise UsageError("empty list")
    if ":" in text and "," not in text:
        lo, hi = (float(x) for x in text.split(":", 1))
        if lo <= 0 or hi < lo:
            raise UsageError(f"bad range {text!r}")
        vals = [lo]
        while vals[-1] * 2 <= hi:
            vals.append(vals[-1] * 2)
        return [cast(v) for v in vals]
    toks = [t.strip() for t in text.split(",")]
    if "..." in toks:
        i = toks.index("...")
        if i != len(toks) - 2:
            raise UsageError("'...' must be followed by exactly one final term")
        head = [float(t) for t in toks[:i]]
        vals = _expand_ellipsis(head, float(toks[-1]))
    else:
        vals = [float(t) for t in toks]
    out = [cast(v) for v in vals]
    if cast is int and any(abs(a - b) > 1e-9 for a, b in zip(out, vals)):
        raise UsageError(f"expected integers in {text!r}")
    return out


def _ints(text):
    try:
        return parse_number_list(text, int)
    except (ValueError, UsageError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _floats(text):
    try:
        return parse_number_list(text, float)
    except (ValueError, UsageError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _adversary_list(text):
    specs = [s.strip() for s in text.split(",") if s.strip()]
    for s in specs:
        name = s.partition(":")[0]
        if name != "beam-split":
            try:
                make_adversary(s)
            except ValueError as e:
                raise argparse.ArgumentTypeError(str(e)) from None
    return specs


# --------------------------------------------------------------------------
# output helpers

def resolve_output(path: str | None, default_name: str) -> Path:
    base = Path(os.environ.get("PHASEFLIP_OUTPUT_DIR", "."))
    if path is None:
        return base / default_name
    p = Path(path)
    if not p.is_absolute() and p.parent == Path(".") and "PHASEFLIP_OUTPUT_DIR" in os.environ:
        return base / p
    return p


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_manifest(path: Path, command: str, params: dict, seed, outputs: Sequence[Path], started: float, **extra):
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": __version__,
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
    }
    manifest.update(extra)
    write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _pool_map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# commands

def _entropy_point(args):
    mean_n, m, eps = args
    return entropy_report(Amplitude.from_mean_n(mean_n), m, eps)


def cmd_entropy_scan(ns) -> int:
    started = time.perf_counter()
    ms = ns.m
    if any(m < 1 for m in ms):
        raise UsageError("every M must be a positive integer")
    if any(b < a for a, b in zip(ms, ms[1:])):
        raise UsageError("M values must be ascending")
    reports = _pool_map(_entropy_point, [(ns.mean_n, m, ns.eps_tail) for m in ms], ns.workers)
    out = resolve_output(ns.output, "entropy_scan.csv")
    write_text(out, entropy_csv(reports))
    write_manifest(
        _manifest_path(out),
        "entropy-scan",
        {"mean_n": ns.mean_n, "M": ms, "eps_tail": ns.eps_tail},
        None,
        [out],
        started,
    )
    print(f"wrote {len(reports)} rows to {out}")
    return EXIT_OK


def _smax_job(args):
    mean_n, tol, cap, eps = args
    return smax_point(mean_n, tol, cap, eps)


def cmd_smax_scan(ns) -> int:
    started = time.perf_counter()
    means = ns.mean_n
    if any(x <= 0 for x in means):
        raise UsageError("mean photon numbers must be positive")
    points = _pool_map(_smax_job, [(x, ns.plateau_tol, ns.m_cap, ns.eps_tail) for x in means], ns.workers)
    out = resolve_output(ns.output, "smax_scan.csv")
    write_text(out, smax_csv(points))
    slope = log_slope(points) if len(points) >= 2 else None
    write_manifest(
        _manifest_path(out),
        "smax-scan",
        {"mean_n": means, "plateau_tol": ns.plateau_tol, "M_cap": ns.m_cap, "eps_tail": ns.eps_tail},
        None,
        [out],
        started,
        slope_nats_per_ln_mean_n=slope,
    )
    print(f"wrote {len(points)} rows to {out}")
    if slope is not None:
        print(f"slope of S_max vs ln(mean_n): {slope:.4f}")
    return EXIT_OK


def _config_from(ns, K=None, M=None, mean_n=None) -> ProtocolConfig:
    return ProtocolConfig(
        K=ns.k if K is None else K,
        M=ns.m if M is None else M,
        mean_n=ns.mean_n if mean_n is None else mean_n,
        theta_ref=ns.theta_ref,
        seed=ns.seed,
        significance=ns.significance,
        expected_channel_transmittance=ns.transmittance,
        max_fidelity_failures=ns.max_failures,
        photon_test=ns.photon_test,
    )


def simulate_summary(config: ProtocolConfig, adversary: str, results) -> dict:
    s = summarize(results)
    leak = holevo_leak(config.mean_n, config.M, config.K)
    out = {
        "runs": s.runs,
        "completed": s.completed,
        "aborted_2c": s.aborted_2c,
        "aborted_3a": s.aborted_3a,
        "key_match_rate": s.key_match_rate,
        "mean_key_length": s.mean_key_length,
        "holevo_bound_bits": leak.holevo_bound_bits,
    }
    if adversary.partition(":")[0] == "full-mitm":
        out["mitm_overall_pass"] = leak.mitm_overall_pass
    return out


def cmd_simulate(ns) -> int:
    started = time.perf_counter()
    try:
        make_adversary(ns.adversary)
    except ValueError as e:
        raise UsageError(str(e)) from None
    config = _config_from(ns)
    if config.security_advisory:
        log.warning(config.security_advisory)
    results = run_batch(config, ns.adversary, ns.runs, ns.seed, ns.workers, keep_transcripts=ns.transcripts)
    outdir = resolve_output(ns.output, "simulate")
    summary = simulate_summary(config, ns.adversary, results)
    summary_path = outdir / "summary.json"
    write_text(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs = [summary_path]
    if ns.transcripts:
        width = max(5, len(str(ns.runs - 1)))
        for r in results:
            p = outdir / "transcripts" / f"run-{r.index:0{width}d}.txt"
            write_text(p, r.transcript)
        outputs.append(outdir / "transcripts")
    params = {
        "K": config.K,
        "M": config.M,
        "mean_n": config.mean_n,
        "theta_ref": config.theta_ref,
        "significance": config.significance,
        "transmittance": config.expected_channel_transmittance,
        "max_failures": config.max_fidelity_failures,
        "photon_test": config.photon_test.value,
        "adversary": ns.adversary,
        "runs": ns.runs,
    }
    write_manifest(outdir / "manifest.json", "simulate", params, ns.seed, outputs, started,
                   detection_model=DETECTION_NOTE)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def sweep_cells(adversaries, means, ms, ts, ks):
    for adv in adversaries:
        for mean_n in means:
            for M in ms:
                for K in ks:
                    if adv == "beam-split":
                        for T in ts:
                            yield f"beam-split:{T!r}", mean_n, M, T, K
                    elif adv.startswith("beam-split:"):
                        yield adv, mean_n, M, float(adv.partition(":")[2]), K
                    else:
                        yield adv, mean_n, M, None, K


def cmd_attack_sweep(ns) -> int:
    started = time.perf_counter()
    cells = list(sweep_cells(ns.adversary, ns.mean_n, ns.m, ns.t, ns.k))
    if not cells or ns.runs < 1:
        raise UsageError("empty sweep grid")
    lines = [SWEEP_HEADER]
    for adv, mean_n, M, T, K in cells:
        cfg = _config_from(ns, K=K, M=M, mean_n=mean_n)
        prefix = f"{adv}|{mean_n!r}|{M}|{K}|"
        s = summarize(run_batch(cfg, adv, ns.runs, ns.seed, ns.workers, prefix=prefix))
        kind = adv.partition(":")[0]
        bound = analytic_abort_bound(kind, cfg.received_mean_n, M, K, T)
        row = [
            kind,
            _fmt(float(mean_n)),
            str(M),
            _fmt(T),
            str(K),
            str(s.runs),
            str(s.aborted_2c + s.aborted_3a),
            str(s.aborted_2c),
            str(s.aborted_3a),
            _fmt(s.abort_rate),
            _fmt(bound),
        ]
        lines.append(",".join(row))
    out = resolve_output(ns.output, "attack_sweep.csv")
    write_text(out, "\n".join(lines) + "\n")
    params = {
        "adversary": ns.adversary,
        "mean_n": ns.mean_n,
        "M": ns.m,
        "T": ns.t,
        "K": ns.k,
        "runs": ns.runs,
        "significance": ns.significance,
    }
    write_manifest(_manifest_path(out), "attack-sweep", params, ns.seed, [out], started,
                   detection_model=DETECTION_NOTE)
    print(f"wrote {len(cells)} rows to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------

def _protocol_flags(p, multi: bool):
    if multi:
        p.add_argument("--k", type=_ints, default=[256], help="pulse counts K (list)")
        p.add_argument("--m", type=_ints, default=[64], help="M values (list)")
        p.add_argument("--mean-n", type=_floats, default=[100.0], help="mean photon numbers (list)")
    else:
        p.add_argument("--k", type=int, required=True, help="pulses per run, multiple of 4")
        p.add_argument("--m", type=int, required=True, help="half the number of phases")
        p.add_argument("--mean-n", type=_positive_float, required=True)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-ref", type=float, default=0.0)
    p.add_argument("--significance", type=float, default=0.01)
    p.add_argument("--transmittance", type=float, default=1.0, help="known channel transmittance")
    p.add_argument("--max-failures", type=int, default=0, help="tolerated state-test failures")
    p.add_argument("--photon-test", choices=["aggregate", "per-pulse", "off"], default="aggregate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phaseflip", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--workers", type=int, default=None, help="worker processes (default: CPUs)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("entropy-scan", help="entropy of the pulse ensemble against M")
    p.add_argument("--mean-n", type=_positive_float, required=True)
    p.add_argument("--m", "--m-range", dest="m", type=_ints, default=_ints("1:4096"),
                   help="M list, e.g. 1,2,4,...,4096 or a doubling range 1:4096")
    p.add_argument("--eps-tail", type=float, default=DEFAULT_EPS_TAIL)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_entropy_scan)

    p = sub.add_parser("smax-scan", help="plateau entropy against mean photon number")
    p.add_argument("--mean-n", type=_floats, default=[8.0, 16.0, 32.0, 64.0, 128.0, 200.0])
    p.add_argument("--plateau-tol", type=float, default=DEFAULT_PLATEAU_TOL)
    p.add_argument("--m-cap", type=int, default=DEFAULT_M_CAP)
    p.add_argument("--eps-tail", type=float, default=DEFAULT_EPS_TAIL)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_smax_scan)

    p = sub.add_parser("simulate", help="Monte Carlo protocol runs")
    _protocol_flags(p, multi=False)
    p.add_argument("--adversary", default="none", help="none | full-mitm | intercept-resend | beam-split:T")
    p.add_argument("--no-transcripts", dest="transcripts", action="store_false")
    p.add_argument("--output", "-o", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack-sweep", help="abort rates over a parameter grid")
    _protocol_flags(p, multi=True)
    p.add_argument("--adversary", type=_adversary_list, default=["full-mitm"],
                   help="comma list; bare 'beam-split' sweeps --t")
    p.add_argument("--t", type=_floats, default=[0.9, 0.7, 0.5], help="beam-split transmittances")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_attack_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if ns.workers is None:
        ns.workers = default_workers()
    try:
        return ns.func(ns)
    except (UsageError, ProtocolError) as e:
        print(f"phaseflip: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PlateauNotReached, InvalidDensityMatrix, TruncationError, np.linalg.LinAlgError) as e:
        print(f"phaseflip: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"phaseflip: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
