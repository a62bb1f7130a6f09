"""JSON Lines readers/writers for datasets, cohorts and ground truth.

Canonical form: one compact JSON object per line, fixed key order, UTF-8,
``\\n`` line endings.  Files already in canonical form round-trip byte for
byte.  Unknown keys are ignored on ingest.
"""

from __future__ import annotations

import json
from pathlib import Path

from .model import (
    DEFAULT_MAX_VSIZE,
    Block,
    Dataset,
    MempoolSnapshot,
    Transaction,
    Violation,
)

TRANSACTIONS_FILE = "transactions.jsonl"
BLOCKS_FILE = "blocks.jsonl"
SNAPSHOTS_FILE = "snapshots.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"


class RecordError(ValueError):
    pass


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False)


def iter_jsonl(path):
    """Yield (line_number, object or None, error message) for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"unreadable JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "record is not a JSON object"
                continue
            yield lineno, obj, ""


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec))
            fh.write("\n")


def _require(obj: dict, *keys):
    missing = [k for k in keys if k not in obj]
    if missing:
        raise RecordError("missing required field(s): " + ", ".join(missing))
    return [obj[k] for k in keys]


def _as_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise RecordError(f"{name} must be an integer")
    return value


# -- transactions -----------------------------------------------------------

def tx_to_record(tx: Transaction) -> dict:
    rec = {
        "txid": tx.txid,
        "vsize": tx.vsize,
        "fee": tx.fee,
        "arrival_time": tx.arrival_time,
        "inputs": [{"txid": i.txid, "vout": i.vout} for i in tx.inputs],
        "outputs": [{"address": o.address, "value": o.value} for o in tx.outputs],
    }
    if tx.is_coinbase:
        rec["is_coinbase"] = True
    return rec


def record_to_tx(obj: dict) -> Transaction:
    txid, vsize, fee = _require(obj, "txid", "vsize", "fee")
    arrival = obj.get("arrival_time")
    if arrival is not None:
        _as_int(arrival, "arrival_time")
    try:
        inputs = [(_require(i, "txid", "vout")) for i in obj.get("inputs", [])]
        outputs = [(_require(o, "address", "value")) for o in obj.get("outputs", [])]
        for _, v in inputs:
            _as_int(v, "vout")
        for _, v in outputs:
            _as_int(v, "value")
        return Transaction(
            txid, _as_int(vsize, "vsize"), _as_int(fee, "fee"), arrival,
            inputs, outputs, bool(obj.get("is_coinbase", False)),
        )
    except (TypeError, AttributeError) as exc:
        raise RecordError(f"malformed input/output list: {exc}") from exc
    except ValueError as exc:
        raise RecordError(str(exc)) from exc


# -- blocks -----------------------------------------------------------------

def block_to_record(b: Block) -> dict:
    return {
        "height": b.height,
        "block_hash": b.block_hash,
        "miner_id": b.miner_id,
        "timestamp": b.timestamp,
        "tx_order": list(b.tx_order),
        "coinbase_addresses": list(b.coinbase_addresses),
        "max_vsize": b.max_vsize,
    }


def record_to_block(obj: dict) -> Block:
    height, bhash, miner, ts, order = _require(
        obj, "height", "block_hash", "miner_id", "timestamp", "tx_order")
    if not isinstance(order, list):
        raise RecordError("tx_order must be a list")
    try:
        return Block(
            _as_int(height, "height"), str(bhash), str(miner), _as_int(ts, "timestamp"),
            tuple(str(t) for t in order),
            tuple(str(a) for a in obj.get("coinbase_addresses", [])),
            _as_int(obj.get("max_vsize", DEFAULT_MAX_VSIZE), "max_vsize"),
        )
    except ValueError as exc:
        raise RecordError(str(exc)) from exc


# -- snapshots --------------------------------------------------------------

def snapshot_to_record(s: MempoolSnapshot) -> dict:
    return {"timestamp": s.timestamp, "txids": sorted(s.txids)}


def record_to_snapshot(obj: dict) -> MempoolSnapshot:
    ts, txids = _require(obj, "timestamp", "txids")
    if not isinstance(txids, list):
        raise RecordError("txids must be a list")
    return MempoolSnapshot(_as_int(ts, "timestamp"), frozenset(str(t) for t in txids))


def _load(path: Path, convert, issues: list) -> list:
    out = []
    if not path.exists():
        return out
    for lineno, obj, err in iter_jsonl(path):
        where = f"{path.name}:{lineno}"
        if obj is None:
            issues.append(Violation("unreadable-record", where, err))
            continue
        try:
            out.append(convert(obj))
        except RecordError as exc:
            issues.append(Violation("invalid-record", where, str(exc)))
    return out


def read_dataset(directory) -> Dataset:
    """Load ``transactions/blocks/snapshots.jsonl`` from a directory.

    Bad records are skipped and recorded on ``Dataset.issues`` with
    file:line identifiers.  A missing file is treated as empty, except
    that a directory with none of the three files raises FileNotFoundError.
    """
    d = Path(directory)
    names = (TRANSACTIONS_FILE, BLOCKS_FILE, SNAPSHOTS_FILE)
    if not any((d / n).exists() for n in names):
        raise FileNotFoundError(f"no dataset files found in {d}")
    issues = []
    txs = _load(d / TRANSACTIONS_FILE, record_to_tx, issues)
    blocks = _load(d / BLOCKS_FILE, record_to_block, issues)
    snaps = _load(d / SNAPSHOTS_FILE, record_to_snapshot, issues)
    return Dataset(txs, blocks, snaps, issues)


def write_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_jsonl(d / TRANSACTIONS_FILE, map(tx_to_record, ds.transactions))
    write_jsonl(d / BLOCKS_FILE, map(block_to_record, ds.blocks))
    write_jsonl(d / SNAPSHOTS_FILE, map(snapshot_to_record, ds.snapshots))


# -- cohorts and ground truth -----------------------------------------------

def read_cohorts(path) -> dict:
    """Map cohort name -> set of txids from a ``{cohort, txid}`` JSONL file."""
    cohorts = {}
    for lineno, obj, err in iter_jsonl(path):
        if obj is None:
            raise RecordError(f"{Path(path).name}:{lineno}: {err}")
        try:
            name, txid = _require(obj, "cohort", "txid")
        except RecordError as exc:
            raise RecordError(f"{Path(path).name}:{lineno}: {exc}") from None
        cohorts.setdefault(str(name), set()).add(str(txid))
    return cohorts


def write_cohort(path, name: str, txids) -> None:
    write_jsonl(path, ({"cohort": name, "txid": t} for t in sorted(txids)))


def write_ground_truth(path, accelerated: dict) -> None:
    write_jsonl(path, ({"txid": t, "accelerating_miner": m}
                       for t, m in sorted(accelerated.items())))


def read_ground_truth(path) -> dict:
    out = {}
    for lineno, obj, err in iter_jsonl(path):
        if obj is None:
            raise RecordError(f"{Path(path).name}:{lineno}: {err}")
        txid, miner = _require(obj, "txid", "accelerating_miner")
        out[str(txid)] = str(miner)
    return out
