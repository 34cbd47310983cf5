"""
Command-line front end.

    python app/cli.py capacity --n 2 --m 1
    python app/cli.py simulate --n 2 --m 1 --topology one-link --T 10 --seed 7
    python app/cli.py sweep --n 3 --m 2 --L 6 --T 4
    python app/cli.py curve --n 12 --m-step 2
    python app/cli.py verify --n-max 4 --m-max 8

CSV goes to stdout (or --output), logs to stderr.
Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
import argparse
import csv
import io
import logging
import os
import sys
from fractions import Fraction

from pydantic import ValidationError

from cache import AllocationCache
from capacity import (
    capacity_for,
    fb_sum_capacity,
    feedback_gain,
    half_duplex_sum_capacity,
    in_no_gain_region,
    no_fb_sum_capacity,
    normalized,
)
from channel import make_operating_point
from errors import ChannelError, DecodeFailure, GuardExceeded, OracleError, \
    RegimeError
from halfduplex import CHAINED, NO_FEEDBACK, RELAY, half_duplex_session, \
    sweep_t, sweep_workers
from models import FeedbackTopology, FeedbackVariant, OperatingPoint, \
    RunConfig, StrategySpace
from oracle import (
    certify,
    exhaustive_feedback_search,
    feedback_upper_bound,
    search_max_dimension,
    verify_w_curve,
)
from schemes import decode_check, dedicated_session, write_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

HALF_DUPLEX_FRAMES = (2, 3, 6)
CONVERSE_HORIZONS = (1, 2)
CONVERSE_CAPS = (2, 2)
CONVERSE_TOPOLOGIES = (FeedbackVariant.ONE_LINK, FeedbackVariant.FOUR_LINK)


def _decimal(value: Fraction) -> str:
    return f"{float(value):.6f}".rstrip("0").rstrip(".")


def _alpha(op: OperatingPoint) -> str:
    return "inf" if op.alpha is None else _decimal(op.alpha)


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def cmd_capacity(config: RunConfig, out):
    op = make_operating_point(config.n, config.m)
    w = _writer(out)
    w.writerow(["n", "m", "alpha", "no-feedback", "one-link", "two-link",
                "four-link", "half-duplex", "gain"])
    dedicated = [fb_sum_capacity(op, v).render() for v in
                 (FeedbackVariant.ONE_LINK, FeedbackVariant.TWO_LINK,
                  FeedbackVariant.FOUR_LINK)]
    w.writerow([op.n, op.m, _alpha(op), no_fb_sum_capacity(op).render(),
                *dedicated, half_duplex_sum_capacity(op).render(),
                feedback_gain(op)])
    return EXIT_OK


def _default_strategy(op: OperatingPoint, L: int, f: int) -> str:
    if f == L:
        return NO_FEEDBACK
    return CHAINED if op.m < op.n else RELAY


def _cache(config: RunConfig):
    if config.cache or "allocation_cache" in os.environ:
        return AllocationCache(config.cache)
    return None


def cmd_simulate(config: RunConfig, out):
    op = make_operating_point(config.n, config.m)
    cache = _cache(config)
    if config.topology == FeedbackVariant.HALF_DUPLEX:
        topology = FeedbackTopology.half_duplex(config.L, config.f)
        strategy = config.strategy or _default_strategy(op, config.L,
                                                        config.f)
        trace, report = half_duplex_session(op, topology, config.T, strategy,
                                            config.seed, cache)
    else:
        topology = FeedbackTopology.dedicated_link(config.topology)
        trace, report = dedicated_session(op, topology, config.T,
                                          config.seed, cache)
    logger.info(f"{op} {topology} ran the {report.scheme} scheme")
    if config.trace:
        write_trace(trace, config.trace)
    _writer(out).writerows([
        ["n", "m", "alpha", "model", "T", "t", "bits_u1", "bits_u2",
         "sum_rate", "capacity"],
        [op.n, op.m, _alpha(op), topology.variant.value, config.T,
         _decimal(topology.t), report.delivered_u1, report.delivered_u2,
         _decimal(report.finite_sum_rate),
         capacity_for(op, topology).render()]])
    decode_check(trace, report).raise_for_failures()
    return EXIT_OK


def cmd_sweep(config: RunConfig, out):
    op = make_operating_point(config.n, config.m)
    result = sweep_t(op, config.L, config.T, config.seed, config.workers,
                     _cache(config))
    w = _writer(out)
    w.writerow(["n", "m", "L", "T", "f", "t", "strategy", "bits_u1",
                "bits_u2", "rate", "best"])
    for row in result.rows:
        w.writerow([op.n, op.m, config.L, config.T, row.f,
                    _decimal(Fraction(row.f, config.L)), row.strategy,
                    row.bits_u1, row.bits_u2, _decimal(row.rate),
                    int(row == result.best)])
    return EXIT_OK


def cmd_curve(config: RunConfig, out):
    n = config.n
    w = _writer(out)
    w.writerow(["alpha", "m", "feedback_sum", "feedback_normalized",
                "no_feedback_sum", "no_feedback_normalized"])
    for m in range(0, config.alpha_max * n + 1, config.m_step):
        op = OperatingPoint(n=n, m=m)
        fb = fb_sum_capacity(op).bits_per_forward_slot
        no_fb = no_fb_sum_capacity(op).bits_per_forward_slot
        w.writerow([f"{float(op.alpha):.6f}", m, fb,
                    f"{float(normalized(fb, op)):.6f}", no_fb,
                    f"{float(normalized(no_fb, op)):.6f}"])
    return EXIT_OK


def _formula_identity(config):
    problems = []
    for n in range(65):
        for m in range(65):
            if n + m == 0:
                continue
            op = OperatingPoint(n=n, m=m)
            c = fb_sum_capacity(op).bits_per_forward_slot
            if not c == max(n, m) + max(n - m, 0) == max(2 * n - m, m):
                problems.append(f"({n},{m}) gives {c}")
    return problems


def _gain_region(config):
    problems = []
    for n in range(1, 33):
        for m in range(65):
            op = OperatingPoint(n=n, m=m)
            zero = feedback_gain(op) == 0
            if zero != in_no_gain_region(op):
                problems.append(f"({n},{m}) gain zero={zero}")
    return problems


def _grid(config):
    return [OperatingPoint(n=n, m=m) for n in range(1, config.n_max + 1)
            for m in range(config.m_max + 1)]


def _w_curve(config):
    report = verify_w_curve(_grid(config), config.workers)
    return [f"{row.op}: {row.detail}" for row in report.mismatches]


def _one_link(config):
    problems = []
    topology = FeedbackTopology.dedicated_link(FeedbackVariant.ONE_LINK)
    T = max(config.T, 2)
    for op in _grid(config):
        if not 1 <= op.m < op.n:
            continue
        for seed in (config.seed, config.seed + 1):
            trace, report = dedicated_session(op, topology, T, seed)
            check = decode_check(trace, report)
            if not check.passed:
                problems.append(f"{op} seed {seed}: {check.failures[0]}")
            if report.delivered < (T - 1) * (2 * op.n - op.m):
                problems.append(f"{op} seed {seed}: {report.delivered} bits")
            if report.finite_sum_rate > fb_sum_capacity(op).lower:
                problems.append(f"{op} seed {seed}: rate above capacity")
    return problems


def _relay(config):
    problems = []
    topology = FeedbackTopology.dedicated_link(FeedbackVariant.ONE_LINK)
    T = max(config.T, 2)
    for op in _grid(config):
        if op.m < 2 * op.n:
            continue
        trace, report = dedicated_session(op, topology, T, config.seed)
        want = (0, op.n * T + (op.m - op.n) * (T - 1))
        got = (report.delivered_u1, report.delivered_u2)
        if got != want:
            problems.append(f"{op}: delivered {got}, expected {want}")
        if not decode_check(trace, report).passed:
            problems.append(f"{op}: decode_check failed")
    return problems


def _half_duplex(config):
    problems = []
    for op in _grid(config):
        if 3 * op.m < 2 * op.n:
            continue
        target = no_fb_sum_capacity(op).bits_per_forward_slot
        for L in HALF_DUPLEX_FRAMES:
            best = sweep_t(op, L, 2, config.seed, config.workers).best
            if best.f != L or best.rate != target:
                problems.append(f"{op} L={L}: best f={best.f} "
                                f"rate {best.rate}, expected {target}")
    return problems


def _converse(config):
    problems = []
    points = [OperatingPoint(n=n, m=m) for n in range(3) for m in range(3)
              if n + m > 0]
    for op in points:
        for T in CONVERSE_HORIZONS:
            for variant in CONVERSE_TOPOLOGIES:
                space = StrategySpace(
                    op=op, T=T,
                    topology=FeedbackTopology.dedicated_link(variant),
                    bits_cap_u1=CONVERSE_CAPS[0],
                    bits_cap_u2=CONVERSE_CAPS[1])
                where = f"{op} T={T} {variant.value}"
                try:
                    found = exhaustive_feedback_search(space).best_bits
                except GuardExceeded as e:
                    problems.append(f"{where}: {e}")
                    continue
                bound = feedback_upper_bound(space)
                if found > bound:
                    problems.append(f"{where}: {found} bits beat the "
                                    f"bound {bound}")
    return problems


def _cached_allocations(config):
    cache = _cache(config)
    if cache is None:
        return []
    problems = []
    for op, alloc in cache.entries():
        try:
            certify(op, alloc)
        except OracleError as e:
            problems.append(str(e))
            continue
        target = no_fb_sum_capacity(op).bits_per_forward_slot
        if alloc.rate != target:
            problems.append(f"cached allocation at {op} carries rate "
                            f"{alloc.rate}, formula says {target}")
    return problems


VERIFY_SUITES = (
    ("formula-identity", _formula_identity),
    ("gain-region", _gain_region),
    ("w-curve", _w_curve),
    ("one-link", _one_link),
    ("relay", _relay),
    ("half-duplex", _half_duplex),
    ("converse", _converse),
    ("allocation-cache", _cached_allocations),
)


def cmd_verify(config: RunConfig, out):
    guard = search_max_dimension()
    if max(config.n_max, config.m_max) > guard:
        raise GuardExceeded(f"grid n <= {config.n_max}, m <= {config.m_max} "
                            f"exceeds the search guard of {guard} levels")
    failed = 0
    for name, suite in VERIFY_SUITES:
        problems = suite(config)
        if problems:
            failed += 1
            out.write(f"FAIL {name}: {problems[0]}"
                      f" ({len(problems)} problems)\n")
        else:
            out.write(f"PASS {name}\n")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "curve": cmd_curve,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dic-feedback",
        description="Deterministic interference channel with feedback")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="write CSV here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int,
                        help="worker threads (default SWEEP_WORKERS)")
    common.add_argument("--cache", help="allocation cache file")

    p = sub.add_parser("capacity", parents=[common])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)

    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--T", type=int, default=10,
                   help="slots, or frames for half-duplex")
    p.add_argument("--topology", default="one-link",
                   choices=[v.value for v in FeedbackVariant])
    p.add_argument("--L", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--strategy", choices=[NO_FEEDBACK, CHAINED, RELAY])
    p.add_argument("--trace", help="write the slot trace here")

    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--T", type=int, default=4, help="frames")

    p = sub.add_parser("curve", parents=[common])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-step", type=int, default=1)
    p.add_argument("--alpha-max", type=int, default=3)

    p = sub.add_parser("verify", parents=[common])
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--m-max", type=int, default=8)
    p.add_argument("--T", type=int, default=20)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(args).items() if v is not None}
    fields.setdefault("workers", sweep_workers())
    try:
        config = RunConfig(**fields)
    except ValidationError as e:
        logger.error(f"Invalid flags: {e}")
        return EXIT_USAGE

    buffer = io.StringIO()
    buffer.write(config.echo() + "\n")
    try:
        code = COMMANDS[config.command](config, buffer)
    except (ChannelError, RegimeError, GuardExceeded) as e:
        logger.error(f"{config.command}: {e}")
        return EXIT_USAGE
    except (OracleError, DecodeFailure) as e:
        logger.error(f"{config.command}: {e}")
        code = EXIT_FAILED

    if config.output:
        with open(config.output, "w") as fh:
            fh.write(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
