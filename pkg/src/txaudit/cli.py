"""Command-line entry point: ``txaudit <command> [options]``.

Machine-readable reports go to stdout (or ``--out DIR``); diagnostics and
human summaries go to stderr.  Exit status: 0 success, 1 invalid input or
failed validation, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import io as tio
from .bundles import bundle_effective_priority_fee, bundle_stats, classify_bundle, read_bundles
from .bundles import WEI_PER_GWEI
from .cohorts import cohort_counts, extract_miner_wallets, self_interest_txs
from .congestion import delay_report, congestion_bin, fee_revenue_share, feerate_by_congestion
from .congestion import mempool_size_series
from .model import validate_dataset
from .norms import find_violation_pairs
from .positions import EmptyCohortError, cohort_signed_errors, flag_accelerated, ppe_report
from .report import emit, fixed, sig
from .stats import TESTS, DegenerateParameterError, fisher_combine
from .synth import GroundTruth, SynthConfig, generate, inject_acceleration

DATA_ENV = "TXAUDIT_DATA"


class InputError(Exception):
    """Bad input data; reported on stderr with exit status 1."""


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(args, name, columns, rows) -> None:
    emit(name, columns, rows, args.format, args.out)


def _load(args):
    directory = args.data or os.environ.get(DATA_ENV) or "."
    try:
        ds = tio.read_dataset(directory)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    if ds.issues and args.command != "validate":
        for v in ds.issues:
            _note(f"{v.identifier}: {v.kind}: {v.detail}")
        raise InputError(f"{len(ds.issues)} malformed record(s)")
    return ds


def _cohorts(path, wanted=None) -> dict:
    try:
        cohorts = tio.read_cohorts(path)
    except (OSError, tio.RecordError) as exc:
        raise InputError(str(exc)) from None
    if wanted:
        if wanted not in cohorts:
            raise InputError(f"cohort {wanted!r} not found in {path}")
        cohorts = {wanted: cohorts[wanted]}
    return dict(sorted(cohorts.items()))


def _window(text):
    if text is None:
        return None
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("window must look like LO:HI") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("window needs LO <= HI")
    return lo, hi


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _miners(text):
    out = []
    for part in text.split(","):
        name, sep, share = part.rpartition(":")
        if not sep or not name:
            raise argparse.ArgumentTypeError("miners must look like NAME:SHARE,NAME:SHARE")
        out.append((name, _fraction(share)))
    return tuple(out)


# -- commands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    ds = _load(args)
    found = validate_dataset(ds)
    _emit(args, "validation", ["kind", "identifier", "detail"],
          [list(v) for v in found])
    if found:
        for v in found:
            _note(f"{v.identifier}: {v.kind}" + (f": {v.detail}" if v.detail else ""))
        _note(f"{len(found)} problem(s) found")
        return 1
    return 0


def cmd_ppe(args) -> int:
    ds = _load(args)
    rows = [[h, m, n, v] for h, m, n, v in ppe_report(ds)]
    _emit(args, "ppe", ["height", "miner", "n_eligible", "ppe_pct"], rows)
    return 0


def cmd_sppe(args) -> int:
    ds = _load(args)
    miners = [args.miner] if args.miner else ds.miners()
    rows = []
    for name, txids in _cohorts(args.cohort, args.cohort_name).items():
        for miner in miners:
            errors = cohort_signed_errors(txids, miner, ds)
            if not errors:
                _note(f"{name}/{miner}: no cohort transaction in this miner's blocks")
                continue
            rows.append([miner, name, len(errors),
                         sum(errors.values(), Fraction(0)) / len(errors)])
    _emit(args, "sppe", ["miner", "cohort", "n", "sppe_pct"], rows)
    return 0


def _dataset_counts(args, ds):
    """Yield (cohort, CohortCounts) for every cohort/miner pair with data."""
    miners = [args.miner] if args.miner else ds.miners()
    for name, txids in _cohorts(args.cohort, args.cohort_name).items():
        for miner in miners:
            try:
                c = cohort_counts(txids, ds, miner, args.window, args.theta0)
            except EmptyCohortError:
                _note(f"{name}/{miner}: cohort absent from the selected blocks")
                continue
            except ValueError as exc:
                raise InputError(str(exc)) from None
            yield name, c


def cmd_counts(args) -> int:
    ds = _load(args)
    rows = [[c.miner, name, c.x, c.y, sig(c.theta0)] for name, c in _dataset_counts(args, ds)]
    _emit(args, "counts", ["miner", "cohort", "x", "y", "theta0"], rows)
    return 0


def _read_counts_csv(path):
    out = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"miner", "cohort", "x", "y", "theta0"} - set(reader.fieldnames or ())
            if missing:
                raise InputError(f"{path}:1: missing column(s) {', '.join(sorted(missing))}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    out.append((row["miner"], row["cohort"], int(row["x"]), int(row["y"]),
                                Fraction(row["theta0"])))
                except (TypeError, ValueError, ZeroDivisionError) as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise InputError(str(exc)) from None
    return out


TEST_COLUMNS = ["miner", "cohort", "kind", "method", "x", "y", "theta0", "p_value", "rejected"]


def _run_test(test, miner, cohort, x, y, theta0, args):
    """Return (report row, raw p-value), or None when theta0 is degenerate."""
    try:
        r = test(x, y, theta0, args.alpha)
    except DegenerateParameterError as exc:
        _note(f"{cohort}/{miner}: skipped ({exc})")
        return None
    except ValueError as exc:
        raise InputError(f"{cohort}/{miner}: {exc}") from None
    if r.approx_warning:
        _note(f"{cohort}/{miner}: normal approximation may be inaccurate (y*theta0 small)")
    row = [miner, cohort, args.kind, args.method, x, y, sig(r.theta0), sig(r.p_value), r.rejected]
    return row, r.p_value


def _test_row(*a):
    got = _run_test(*a)
    return got and got[0]


def cmd_test(args) -> int:
    test = TESTS[(args.kind, args.method)]
    rows = []
    if args.counts:
        if args.fisher_window:
            raise InputError("--fisher-window needs a dataset and --cohort, not --counts")
        for miner, cohort, x, y, theta0 in _read_counts_csv(args.counts):
            if args.miner and miner != args.miner:
                continue
            if args.theta0 is not None:
                theta0 = args.theta0
            row = _test_row(test, miner, cohort, x, y, theta0, args)
            if row:
                rows.append(row)
    elif args.cohort:
        if args.fisher_window is not None and args.fisher_window < 1:
            raise InputError("--fisher-window must be at least 1")
        ds = _load(args)
        if args.fisher_window:
            rows = _fisher_rows(args, ds, test)
        else:
            for name, c in _dataset_counts(args, ds):
                row = _test_row(test, c.miner, name, c.x, c.y, c.theta0, args)
                if row:
                    rows.append(row)
    else:
        raise InputError("test needs --counts FILE or --cohort FILE")
    _emit(args, "tests", TEST_COLUMNS, rows)
    return 0


def _fisher_rows(args, ds, test):
    """One row per height window, then a Fisher-combined row per cohort/miner."""
    if not ds.blocks:
        raise InputError("dataset has no blocks")
    heights = [b.height for b in ds.blocks]
    lo, hi = args.window or (min(heights), max(heights))
    size = args.fisher_window
    windows = [(s, min(s + size - 1, hi)) for s in range(lo, hi + 1, size)]
    miners = [args.miner] if args.miner else ds.miners()
    rows = []
    for name, txids in _cohorts(args.cohort, args.cohort_name).items():
        for miner in miners:
            ps, xs, ys = [], 0, 0
            for w in windows:
                try:
                    c = cohort_counts(txids, ds, miner, w, args.theta0)
                except (EmptyCohortError, ValueError):
                    continue
                got = _run_test(test, miner, f"{name}[{w[0]}-{w[1]}]", c.x, c.y, c.theta0, args)
                if got:
                    rows.append(got[0])
                    ps.append(got[1])
                    xs += c.x
                    ys += c.y
            if ps:
                f = fisher_combine(ps)
                rows.append([miner, f"{name}[fisher]", args.kind, f"{args.method}+fisher",
                             xs, ys, "", sig(f.p_value), f.p_value < args.alpha])
    return rows


def cmd_detect(args) -> int:
    ds = _load(args)
    flagged = flag_accelerated(ds, args.threshold)
    rows = []
    for txid, err in flagged.items():
        b = ds.committing_block(txid)
        rows.append([txid, b.height, b.miner_id, err])
    _emit(args, "accelerated", ["txid", "height", "miner", "signed_error_pct"], rows)
    _note(f"{len(rows)} transaction(s) at or above {fixed(args.threshold)}")
    return 0


def cmd_cpfp(args) -> int:
    ds = _load(args)
    cpfp = ds.cpfp_txids
    rows = [[b.height, t] for b in ds.blocks for t in b.tx_order if t in cpfp]
    _emit(args, "cpfp", ["height", "txid"], rows)
    return 0


def cmd_violations(args) -> int:
    ds = _load(args)
    snaps = sorted(ds.snapshots, key=lambda s: s.timestamp)
    if args.sample is not None and args.sample < len(snaps):
        import random
        picked = sorted(random.Random(args.seed).sample(range(len(snaps)), args.sample))
        snaps = [snaps[i] for i in picked]
    rows = []
    for s in snaps:
        r = find_violation_pairs(s, ds, args.epsilon, exclude_cpfp=not args.include_cpfp)
        rows.append([r.snapshot_ts, args.epsilon, r.pairs_total, r.pairs_violating, r.fraction])
    _emit(args, "violations",
          ["snapshot_ts", "epsilon_s", "pairs_total", "pairs_violating", "fraction"], rows)
    return 0


def cmd_congestion(args) -> int:
    ds = _load(args)
    rows = [[p.timestamp, p.vbytes, p.tx_count, congestion_bin(p.vbytes).label]
            for p in mempool_size_series(ds)]
    _emit(args, "congestion", ["timestamp", "vbytes", "tx_count", "bin"], rows)
    return 0


def cmd_delays(args) -> int:
    ds = _load(args)
    rep = delay_report(ds)
    _emit(args, "delays", ["txid", "feerate_sat_vb", "delay_blocks"],
          [list(r) for r in rep.rows])
    _note(f"clamped={rep.clamped} pending={rep.pending} no_arrival={rep.no_arrival}")
    return 0


def cmd_fee_share(args) -> int:
    ds = _load(args)
    rows = [[b.height, b.miner_id, fee_revenue_share(b, ds)] for b in ds.blocks]
    _emit(args, "fee_share", ["height", "miner", "fee_share_pct"], rows)
    return 0


def cmd_feerates(args) -> int:
    ds = _load(args)
    summaries, excluded = feerate_by_congestion(ds)
    rows = [[label, s.count, s.mean, s.minimum, s.q1, s.median, s.q3, s.maximum]
            for label, s in summaries.items()]
    _emit(args, "feerates", ["bin", "count", "mean", "min", "q1", "median", "q3", "max"], rows)
    _note(f"{excluded} transaction(s) without a covering snapshot")
    return 0


def cmd_wallets(args) -> int:
    ds = _load(args)
    w = extract_miner_wallets(ds)
    rows = [[m, a, a in w.shared] for m, addrs in w.wallets.items() for a in sorted(addrs)]
    _emit(args, "wallets", ["miner", "address", "shared"], rows)
    return 0


def cmd_self_interest(args) -> int:
    ds = _load(args)
    if args.miner not in ds.miners():
        raise InputError(f"unknown miner {args.miner!r}")
    cohort = self_interest_txs(ds, args.miner)
    name = args.name or cohort.name
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        tio.write_cohort(Path(args.out) / "cohort.jsonl", name, cohort.txids)
    else:
        for t in sorted(cohort.txids):
            sys.stdout.write(tio.dumps({"cohort": name, "txid": t}) + "\n")
    return 0


def _bundles(args):
    try:
        return read_bundles(args.bundles)
    except OSError as exc:
        raise InputError(str(exc)) from None
    except tio.RecordError as exc:
        raise InputError(f"{args.bundles}: {exc}") from None


def cmd_bundles_classify(args) -> int:
    rows = []
    for b in _bundles(args):
        fee = bundle_effective_priority_fee(b) / WEI_PER_GWEI
        rows.append([b.block_number, b.bundle_index, b.size, classify_bundle(b).pattern, fee])
    _emit(args, "bundles", ["block_number", "bundle_index", "size", "pattern",
                            "effective_priority_fee_gwei"], rows)
    return 0


def cmd_bundles_stats(args) -> int:
    s = bundle_stats(_bundles(args))
    rows = [["n_bundles", s.n_bundles], ["n_txs", s.n_txs],
            ["mean_size", s.mean_size], ["max_size", s.max_size]]
    rows += [[f"category.{c}", n] for c, n in s.by_category.items()]
    rows += [[f"size.{k}", n] for k, n in s.size_distribution.items()]
    rows += [[f"matched.{p}", n] for p, n in s.matched.items()]
    rows += [[f"matched_fraction.{p}", v] for p, v in s.matched_fraction.items()]
    _emit(args, "bundle_stats", ["metric", "value"], rows)
    return 0


def cmd_synth_generate(args) -> int:
    try:
        cfg = SynthConfig(
            miners=args.miners, n_blocks=args.blocks, block_capacity=args.capacity,
            tx_arrival_rate=args.rate, feerate_mu=args.mu, feerate_sigma=args.sigma,
            seed=args.seed, min_feerate=args.min_feerate, snapshot_every=args.snapshot_every,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    ds, truth = generate(cfg)
    _write_synth(args.out, ds, truth)
    _note(f"{len(ds.transactions)} transactions, {len(ds.blocks)} blocks")
    return 0


def cmd_synth_inject(args) -> int:
    ds = _load(args)
    data_dir = Path(args.data or os.environ.get(DATA_ENV) or ".")
    truth_path = data_dir / tio.GROUND_TRUTH_FILE
    accelerated = {}
    if truth_path.exists():
        try:
            accelerated = tio.read_ground_truth(truth_path)
        except tio.RecordError as exc:
            raise InputError(str(exc)) from None
    truth = GroundTruth(accelerated, frozenset(accelerated.values()))
    try:
        ds, truth = inject_acceleration(ds, truth, args.miner, args.n, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_synth(args.out, ds, truth)
    if truth.shortfall:
        _note(f"only {args.n - truth.shortfall} of {args.n} transactions had a candidate")
    return 0


def _write_synth(out, ds, truth) -> None:
    tio.write_dataset(ds, out)
    tio.write_ground_truth(Path(out) / tio.GROUND_TRUTH_FILE, truth.accelerated)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", metavar="DIR", help="write report files here instead of stdout")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", metavar="DIR",
                      help=f"dataset directory (default: ${DATA_ENV} or the working directory)")

    cohort = argparse.ArgumentParser(add_help=False)
    cohort.add_argument("--cohort", metavar="FILE", help="cohort JSONL of {cohort, txid}")
    cohort.add_argument("--cohort-name", help="only this cohort from the file")
    cohort.add_argument("--miner", help="only this miner (default: every miner)")

    counting = argparse.ArgumentParser(add_help=False)
    counting.add_argument("--window", type=_window, metavar="LO:HI",
                          help="inclusive block-height range")
    counting.add_argument("--theta0", type=_fraction,
                          help="override the miner's block share")

    p = argparse.ArgumentParser(prog="txaudit",
                                description="Audit transaction ordering against fee-rate norms.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, parents, help_text):
        sp = sub.add_parser(name, parents=parents, help=help_text)
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, [common, data], "check dataset integrity")
    add("ppe", cmd_ppe, [common, data], "per-block position prediction error")
    sp = add("sppe", cmd_sppe, [common, data, cohort], "per-miner signed cohort error")
    sp.set_defaults(window=None, theta0=None)
    add("counts", cmd_counts, [common, data, cohort, counting], "c-block counts per miner")

    sp = add("test", cmd_test, [common, data, cohort, counting], "binomial prioritization tests")
    sp.add_argument("--kind", choices=("accel", "decel"), required=True)
    sp.add_argument("--method", choices=("exact", "normal"), default="exact")
    sp.add_argument("--counts", metavar="FILE", help="CSV of miner,cohort,x,y,theta0")
    sp.add_argument("--alpha", type=float, default=0.01)
    sp.add_argument("--fisher-window", type=int, metavar="H",
                    help="test per H-block window and combine with Fisher's method")

    sp = add("detect-accelerated", cmd_detect, [common, data],
             "flag transactions by their own signed error")
    sp.add_argument("--threshold", type=_fraction, default=Fraction(99))

    add("cpfp", cmd_cpfp, [common, data], "child-pays-for-parent transactions")

    sp = add("violations", cmd_violations, [common, data], "fee-rate selection violations")
    sp.add_argument("--epsilon", type=int, default=0, metavar="S",
                    help="minimum arrival gap in seconds")
    sp.add_argument("--include-cpfp", action="store_true")
    sp.add_argument("--sample", type=int, metavar="N", help="only N random snapshots")
    sp.add_argument("--seed", type=int, default=0)

    add("congestion", cmd_congestion, [common, data], "mempool size per snapshot")
    add("delays", cmd_delays, [common, data], "commit delay per transaction")
    add("fee-share", cmd_fee_share, [common, data], "fee share of block revenue")
    add("feerates", cmd_feerates, [common, data], "fee-rate summary per congestion bin")
    add("wallets", cmd_wallets, [common, data], "coinbase reward addresses per miner")
    sp = add("self-interest", cmd_self_interest, [common, data],
             "cohort of transactions touching a miner's wallets")
    sp.add_argument("--miner", required=True)
    sp.add_argument("--name", help="cohort name (default: self-interest:MINER)")

    bp = sub.add_parser("bundles", help="private bundle analysis")
    bsub = bp.add_subparsers(dest="action", required=True, metavar="ACTION")
    for name, func, text in (("classify", cmd_bundles_classify, "pattern per bundle"),
                             ("stats", cmd_bundles_stats, "corpus summary")):
        sp = bsub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--bundles", required=True, metavar="FILE")
        sp.set_defaults(func=func)

    sy = sub.add_parser("synth", help="synthetic chains with ground truth")
    ssub = sy.add_subparsers(dest="action", required=True, metavar="ACTION")
    sp = ssub.add_parser("generate", help="norm-following chain")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, metavar="DIR")
    sp.add_argument("--miners", type=_miners,
                    default=_miners("pool-a:0.4,pool-b:0.3,pool-c:0.2,pool-d:0.1"),
                    metavar="NAME:SHARE,...")
    sp.add_argument("--blocks", type=int, default=1000)
    sp.add_argument("--capacity", type=int, default=1_000_000, help="block size in vbytes")
    sp.add_argument("--rate", type=float, default=2500.0, help="arrivals per block interval")
    sp.add_argument("--mu", type=float, default=SynthConfig.feerate_mu)
    sp.add_argument("--sigma", type=float, default=SynthConfig.feerate_sigma)
    sp.add_argument("--min-feerate", type=_fraction, default=Fraction(1))
    sp.add_argument("--snapshot-every", type=int, default=10)
    sp.set_defaults(func=cmd_synth_generate)

    sp = ssub.add_parser("inject", parents=[data], help="accelerate pending low-fee txs")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, metavar="DIR")
    sp.add_argument("--miner", action="append", required=True)
    sp.add_argument("--n", type=int, required=True, help="transactions to accelerate")
    sp.set_defaults(func=cmd_synth_inject)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.format = getattr(args, "format", "csv")
    try:
        return args.func(args)
    except InputError as exc:
        _note(f"error: {exc}")
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); stay quiet
        sys.stderr.close()
        return 0


if __name__ == "__main__":
    sys.exit(main())
