import json

import pytest
from hypothesis import given, settings, strategies as st, HealthCheck

from txaudit import io as tio
from txaudit.model import Dataset, validate_dataset

from conftest import block, snapshot, tx


def _sample():
    txs = [
        tx("cb", 0, 150, None, (), [("pool-addr", 625_000_000)], coinbase=True),
        tx("a", 500, 100, 10, [("cb", 0)], [("x", 1), ("y", 2)]),
        tx("b", 250, 125, 20, (), [("ü-addr", 3)]),
    ]
    blocks = [block(7, ["a"], "Pool", addrs=["pool-addr"]), block(8, ["b"], "Unknown")]
    return Dataset(txs, blocks, [snapshot(5, ["b", "a"]), snapshot(15, [])])


def test_round_trip_objects(tmp_path):
    ds = _sample()
    tio.write_dataset(ds, tmp_path)
    back = tio.read_dataset(tmp_path)
    assert back.transactions == ds.transactions
    assert back.blocks == ds.blocks
    assert back.snapshots == ds.snapshots
    assert back.issues == ()


def test_canonical_files_round_trip_byte_identical(tmp_path):
    tio.write_dataset(_sample(), tmp_path / "one")
    tio.write_dataset(tio.read_dataset(tmp_path / "one"), tmp_path / "two")
    for name in (tio.TRANSACTIONS_FILE, tio.BLOCKS_FILE, tio.SNAPSHOTS_FILE):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_unknown_fields_ignored(tmp_path):
    (tmp_path / tio.TRANSACTIONS_FILE).write_text(
        json.dumps({"txid": "a", "vsize": 10, "fee": 5, "colour": "blue"}) + "\n")
    ds = tio.read_dataset(tmp_path)
    assert ds.issues == () and ds.transactions[0].txid == "a"


def test_bad_records_reported_with_line_numbers(tmp_path):
    lines = [
        json.dumps({"txid": "a", "vsize": 10, "fee": 5}),
        "{not json",
        json.dumps({"txid": "b", "fee": 5}),
        "",
        json.dumps({"txid": "c", "vsize": 0, "fee": 5}),
        json.dumps([1, 2]),
        json.dumps({"txid": "d", "vsize": "10", "fee": 5}),
    ]
    (tmp_path / tio.TRANSACTIONS_FILE).write_text("\n".join(lines) + "\n")
    ds = tio.read_dataset(tmp_path)
    got = {(v.kind, v.identifier) for v in ds.issues}
    assert got == {
        ("unreadable-record", "transactions.jsonl:2"),
        ("invalid-record", "transactions.jsonl:3"),
        ("invalid-record", "transactions.jsonl:5"),
        ("unreadable-record", "transactions.jsonl:6"),
        ("invalid-record", "transactions.jsonl:7"),
    }
    assert [t.txid for t in ds.transactions] == ["a"]
    # surfaced by validation rather than raised
    assert len(validate_dataset(ds)) == 5


def test_missing_block_field(tmp_path):
    (tmp_path / tio.BLOCKS_FILE).write_text(json.dumps({"height": 1, "miner_id": "m"}) + "\n")
    ds = tio.read_dataset(tmp_path)
    assert ds.issues[0].kind == "invalid-record"
    assert "block_hash" in ds.issues[0].detail


def test_empty_directory_is_an_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        tio.read_dataset(tmp_path)


def test_cohort_and_ground_truth_files(tmp_path):
    tio.write_cohort(tmp_path / "c.jsonl", "scam", ["b", "a"])
    with open(tmp_path / "c.jsonl", "a") as fh:
        fh.write(json.dumps({"cohort": "other", "txid": "z"}) + "\n")
    assert tio.read_cohorts(tmp_path / "c.jsonl") == {"scam": {"a", "b"}, "other": {"z"}}
    tio.write_ground_truth(tmp_path / "g.jsonl", {"t2": "M", "t1": "N"})
    assert (tmp_path / "g.jsonl").read_text().splitlines()[0] == \
        '{"txid":"t1","accelerating_miner":"N"}'
    assert tio.read_ground_truth(tmp_path / "g.jsonl") == {"t1": "N", "t2": "M"}


def test_cohort_file_errors_carry_line(tmp_path):
    (tmp_path / "c.jsonl").write_text('{"cohort":"x","txid":"a"}\n{"cohort":"x"}\n')
    with pytest.raises(tio.RecordError, match="c.jsonl:2"):
        tio.read_cohorts(tmp_path / "c.jsonl")


_ids = st.text("0123456789abcdef", min_size=1, max_size=8)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture], max_examples=40)
@given(st.lists(st.tuples(_ids, st.integers(0, 10**9), st.integers(1, 10**5),
                          st.none() | st.integers(0, 2**40)), max_size=15, unique_by=lambda t: t[0]))
def test_transaction_records_round_trip(tmp_path, rows):
    txs = [tx(i, f, v, a) for i, f, v, a in rows]
    for t in txs:
        assert tio.record_to_tx(json.loads(tio.dumps(tio.tx_to_record(t)))) == t
