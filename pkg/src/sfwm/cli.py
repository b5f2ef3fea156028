"""Command-line front end: ``sfwm simulate | correlate | analyze | sweep``.

Exit codes
----------
0  success (for ``sweep``: at least one point succeeded)
1  verification mismatch, or every sweep point failed
2  invalid configuration, arguments or malformed time-tag file
3  I/O error
4  empty zero-delay auto-correlation bin

Summaries and verdicts go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import (CauchySchwarzError, cauchy_schwarz, detuning_sweep, siegert_invert,
                       spectrum_fft, time_ordering_check)
from .correlator import (DEFAULT_BIN_NS, DEFAULT_MAX_DELAY_NS, PAIRS,
                         brute_force_g2, g2_matrix, ns_to_ticks, stream_histogram)
from .emission import DETECTORS, TimeTagStream, simulate_run
from .model import FILTER_ARMS, ConfigError, filters_for_arm, load_config, parse_detuning

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_IO, EXIT_EMPTY = 0, 1, 2, 3, 4

COINCIDENCE_WINDOW_NS = 20.0
VERIFY_MAX_TAGS = 200_000


class _Exit(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _load_config(path, seed=None):
    try:
        cfg = load_config(path)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise _Exit(EXIT_INPUT, f"config error in {exc}") from None
    if seed is not None:
        try:
            cfg = replace(cfg, rng_seed=seed)
        except ConfigError as exc:
            raise _Exit(EXIT_INPUT, f"config error in {exc}") from None
    return cfg


def _read_tags(path):
    try:
        return io.read_tags(path)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot read {path}: {exc}") from None
    except io.MalformedFileError as exc:
        raise _Exit(EXIT_INPUT, f"malformed time-tag file {path}: {exc}") from None


def _merged(streams, names):
    """One stream holding the tags of several detectors, sorted per trial."""
    ref = streams[names[0]]
    trials = [np.sort(np.concatenate([streams[n].trial(k) for n in names]))
              for k in range(ref.n_trials)]
    return TimeTagStream.from_trials("+".join(names), trials, ref.tick, ref.trial_ticks)


def coincidence_rate(streams, window_ns=COINCIDENCE_WINDOW_NS):
    """Field-1/field-2 coincidences within ``+-window/2`` per live second."""
    ref = streams["1a"]
    half = ns_to_ticks(window_ns / 2, ref.tick)
    f1, f2 = _merged(streams, ("1a", "1b")), _merged(streams, ("2a", "2b"))
    hist = stream_histogram(f2, f1, half, half)
    return float(hist.sum()) / ref.live_time if ref.live_time > 0 else 0.0


def cmd_simulate(args):
    cfg = _load_config(args.config, args.seed)
    streams = simulate_run(cfg, filters_for_arm(cfg, args.filters), args.threads)
    try:
        io.write_tags(args.output, streams)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot write {args.output}: {exc}") from None
    live = cfg.live_time
    print(f"trials: {cfg.n_trials}  live time: {live:.6g} s  filters: {args.filters}")
    for d in DETECTORS:
        print(f"singles {d}: {len(streams[d]) / live:.6g} Hz")
    print(f"coincidence rate (20 ns window): {coincidence_rate(streams):.6g} Hz")
    return EXIT_OK


def _verify(streams, bw, md):
    total = sum(len(s) for s in streams.values())
    if total > VERIFY_MAX_TAGS:
        raise _Exit(EXIT_INPUT, f"--verify is limited to {VERIFY_MAX_TAGS} tags, file has {total}")
    for name, a, b in PAIRS:
        ref = np.zeros(2 * md // bw, dtype=np.int64)
        for k in range(streams[a].n_trials):
            ref += brute_force_g2(streams[a].trial(k), streams[b].trial(k), bw, md)
        if not np.array_equal(ref, stream_histogram(streams[a], streams[b], bw, md)):
            print(f"verify {name}: MISMATCH")
            return False
        print(f"verify {name}: ok")
    return True


def cmd_correlate(args):
    streams = _read_tags(args.tagfile)
    tick = streams["1a"].tick
    try:
        bw, md = ns_to_ticks(args.bin_ns, tick), ns_to_ticks(args.max_delay_ns, tick)
        curves = g2_matrix(streams, bw, md)
    except ValueError as exc:
        raise _Exit(EXIT_INPUT, str(exc)) from None
    out = Path(args.outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, c in curves.items():
            io.write_curve(out / io.curve_filename(name), c)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot write curves: {exc}") from None
    for name, c in curves.items():
        print(f"{name}: g(0) = {c.at_zero:.4g}  counts = {int(c.raw_counts.sum())}")
    if args.verify and not _verify(streams, bw, md):
        return EXIT_FAIL
    return EXIT_OK


def _load_curves(curvedir, names):
    out = {}
    for name in names:
        path = Path(curvedir) / io.curve_filename(name)
        try:
            out[name] = io.read_curve(path)
        except OSError as exc:
            raise _Exit(EXIT_IO, f"cannot read {path}: {exc}") from None
        except ValueError as exc:
            raise _Exit(EXIT_INPUT, str(exc)) from None
    return out


def _cs(curves):
    try:
        return cauchy_schwarz(curves)
    except CauchySchwarzError as exc:
        raise _Exit(EXIT_EMPTY, str(exc)) from None
    except ValueError as exc:
        raise _Exit(EXIT_INPUT, str(exc)) from None


def cmd_analyze(args):
    outdir = Path(args.output or args.curvedir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Exit(EXIT_IO, str(exc)) from None
    if args.mode == "spectrum":
        curves = _load_curves(args.curvedir, ("1b1a", "2b2a"))
        for field_id, name in ((1, "1b1a"), (2, "2b2a")):
            c = curves[name]
            if c.raw_counts[c.zero_bin] <= 0:
                raise _Exit(EXIT_EMPTY, f"auto-correlation {name} has an empty zero-delay bin")
            spec = spectrum_fft(siegert_invert(c), pad=args.pad)
            try:
                io.write_spectrum(outdir / f"spectrum_field{field_id}.csv", spec)
            except OSError as exc:
                raise _Exit(EXIT_IO, str(exc)) from None
            pos = spec.freq > 0
            k = np.argmax(np.where(pos, spec.magnitude, -1.0))
            print(f"field {field_id}: strongest nonzero beat at {spec.freq[k] / 1e6:.4g} MHz, "
                  f"relative magnitude {spec.magnitude[k]:.3g}")
        return EXIT_OK
    curves = _load_curves(args.curvedir, [p[0] for p in PAIRS])
    result = _cs(curves)
    if args.mode == "cs":
        try:
            io.write_cs_curve(outdir / "r_curve.csv", result)
        except OSError as exc:
            raise _Exit(EXIT_IO, str(exc)) from None
        print(f"Rbar_max = {result.rbar_max:.4g} ± {result.rbar_max_sigma:.2g}, "
              f"CS violated: {'yes' if result.violated else 'no'}")
    else:
        print(time_ordering_check(result))
    return EXIT_OK


def _parse_deltas(text):
    vals = []
    for part in text.split(","):
        part = part.strip()
        if part:
            try:
                vals.append(parse_detuning(part))
            except ConfigError as exc:
                raise _Exit(EXIT_INPUT, f"--deltas: {exc}") from None
    if not vals:
        raise _Exit(EXIT_INPUT, "--deltas needs at least one detuning")
    return vals


def cmd_sweep(args):
    cfg = _load_config(args.config, args.seed)
    deltas = _parse_deltas(args.deltas)
    arms = ("none", args.filtered_arm) if args.both_arms else (args.arm,)
    points = detuning_sweep(cfg, deltas, arms, bin_ns=args.bin_ns,
                            max_delay_ns=args.max_delay_ns, threads=args.threads)
    try:
        io.write_sweep(args.output, points)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot write {args.output}: {exc}") from None
    for p in points:
        print(f"Delta = {p.delta_over_gamma:g} Gamma  arm = {p.arm:<10s} alpha = {p.alpha:.3g}  "
              f"Rbar_max = {p.rbar_max:.4g} ± {p.sigma:.2g}  {p.status}")
    return EXIT_OK if any(p.status == "ok" for p in points) else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="sfwm", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a run and write a time-tag file")
    s.add_argument("config")
    s.add_argument("output")
    s.add_argument("--filters", choices=FILTER_ARMS, default="none")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, help="worker threads (default: SFWM_THREADS or auto)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("correlate", help="six g2 curves from a time-tag file")
    c.add_argument("tagfile")
    c.add_argument("outdir")
    c.add_argument("--bin-ns", type=float, default=DEFAULT_BIN_NS)
    c.add_argument("--max-delay-ns", type=float, default=DEFAULT_MAX_DELAY_NS)
    c.add_argument("--verify", action="store_true", help="check against brute-force counting")
    c.set_defaults(func=cmd_correlate)

    a = sub.add_parser("analyze", help="spectra, Cauchy-Schwarz ratios or time ordering")
    a.add_argument("curvedir")
    a.add_argument("--mode", choices=("spectrum", "cs", "ordering"), default="cs")
    a.add_argument("--output", help="directory for CSV output (default: CURVEDIR)")
    a.add_argument("--pad", type=int, default=1, help="zero-padding factor for spectra")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="Rbar_max versus detuning")
    w.add_argument("config")
    w.add_argument("--deltas", required=True, help="comma-separated, e.g. 20,30,40gamma")
    arm = w.add_mutually_exclusive_group()
    arm.add_argument("--both-arms", action="store_true", help="unfiltered and filtered arms")
    arm.add_argument("--arm", choices=FILTER_ARMS, default="none")
    w.add_argument("--filtered-arm", choices=FILTER_ARMS[1:], default="resonant-1")
    w.add_argument("--output", default="sweep.csv")
    w.add_argument("--seed", type=int)
    w.add_argument("--threads", type=int)
    w.add_argument("--bin-ns", type=float, default=DEFAULT_BIN_NS)
    w.add_argument("--max-delay-ns", type=float, default=DEFAULT_MAX_DELAY_NS)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="sfwm: %(levelname)s: %(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"sfwm: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
