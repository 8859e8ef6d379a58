import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowdetect import dataflow as D
from flowdetect.errors import ConfigError, IncompatibleVersionError, IntegrityError, SchemaError, SequenceTooShortError
from flowdetect.synthetic import generate_flows


def rec(label=1, protocol=6, l7=0.0, in_bytes=100, **kw):
    base = dict(
        src_addr="10.0.0.1", src_port=1234, dst_addr="10.0.0.2", dst_port=80, protocol=protocol, l7_proto=l7,
        in_bytes=in_bytes, out_bytes=0, in_pkts=1, out_pkts=0, tcp_flags=2, flow_duration_ms=0,
        label=label, attack_name="Benign" if label == 0 else "DDoS",
    )
    base.update(kw)
    return D.FlowRecord(**base)


HEADER = ",".join(D.COLUMNS)


def write(tmp_path, lines, name="flows.csv"):
    path = tmp_path / name
    path.write_text("\n".join([HEADER, *lines]) + "\n")
    return path


def good_line(i=0, label=1):
    return f"192.168.100.147,{1000 + i},192.168.100.3,80,6,7.0,{60 + i},0,1,0,2,{i},{label},{'DDoS' if label else 'Benign'}"


# --- load_csv -------------------------------------------------------------


def test_empty_file_with_header(tmp_path):
    loaded = D.load_csv(write(tmp_path, []))
    assert loaded.records == [] and loaded.skipped == []


def test_malformed_row_skipped_with_line_number(tmp_path):
    lines = [good_line(i) for i in range(10)]
    lines[4] = lines[4].replace(",2,4,", ",2,notanumber,")
    loaded = D.load_csv(write(tmp_path, lines))
    assert len(loaded.records) == 9
    assert len(loaded.skipped) == 1
    assert loaded.skipped[0].line == 6  # header is line 1
    assert [r.src_port for r in loaded.records][:5] == [1000, 1001, 1002, 1003, 1005]


@pytest.mark.parametrize(
    "bad",
    [
        "1.1.1.1,80,2.2.2.2,80,6,7.0,-5,0,1,0,2,0,1,DDoS",  # negative counter
        "1.1.1.1,70000,2.2.2.2,80,6,7.0,5,0,1,0,2,0,1,DDoS",  # port out of range
        "1.1.1.1,80,2.2.2.2,80,6,7.0,5,0,1,0,2,0,3,DDoS",  # label not binary
        "1.1.1.1,80,2.2.2.2,80,6,7.0,5,0,1,0,2,0,1",  # short row
    ],
)
def test_invalid_rows_rejected(tmp_path, bad):
    loaded = D.load_csv(write(tmp_path, [good_line(), bad]))
    assert len(loaded.records) == 1 and len(loaded.skipped) == 1


def test_missing_column(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text(HEADER.replace(",TCP_FLAGS", "") + "\n")
    with pytest.raises(SchemaError, match="TCP_FLAGS"):
        D.load_csv(path)


def test_csv_roundtrip(tmp_path):
    records = generate_flows(200, seed=3)
    D.write_csv(records, tmp_path / "r.csv")
    loaded = D.load_csv(tmp_path / "r.csv")
    assert loaded.records == records


# --- preprocessing --------------------------------------------------------


def test_constant_column_dropped():
    stats = D.fit_preprocessor([rec(in_bytes=b) for b in (10, 20, 30)])
    assert "OUT_BYTES" in stats.dropped and "PROTOCOL" in stats.dropped
    assert stats.feature_names == ["IN_BYTES"]
    assert np.all(stats.std > 0)


def test_single_record_zscore_by_hand():
    stats = D.fit_preprocessor([rec(in_bytes=b) for b in (100, 200, 300)])
    table = D.transform([rec(in_bytes=300)], stats)
    # mean 200, population std sqrt(20000/3) -> z = 100 / sqrt(20000/3) = sqrt(3/2)
    assert table.matrix[0, 0] == pytest.approx(math.sqrt(1.5), rel=1e-14)


def test_training_split_is_standardized():
    records = generate_flows(3000, seed=1)
    stats = D.fit_preprocessor(records)
    table = D.transform(records, stats)
    assert np.all(np.abs(table.matrix.mean(axis=0)) < 1e-6)
    np.testing.assert_allclose(table.matrix.std(axis=0), 1.0, atol=1e-6)
    assert not np.isnan(table.matrix).any()


def test_zscore_idempotent():
    records = generate_flows(2000, seed=2)
    table = D.transform(records, D.fit_preprocessor(records))
    mean, std, keep = D.column_stats(table.matrix)
    assert keep.all()
    again = (table.matrix - mean) / std
    np.testing.assert_allclose(again, table.matrix, atol=1e-9, rtol=0)


def test_frequency_rank_codes_and_unknown():
    train = [rec(protocol=17)] * 3 + [rec(protocol=6)] * 2 + [rec(protocol=1)] * 2
    stats = D.fit_preprocessor([r for r in train])
    assert stats.vocab["PROTOCOL"] == {17.0: 1, 1.0: 2, 6.0: 3}
    raw = D.raw_features([rec(protocol=58)], stats.vocab)
    assert raw[0, 0] == 0


def test_transform_deterministic_and_labels():
    records = generate_flows(500, seed=4)
    stats = D.fit_preprocessor(records)
    a, b = D.transform(records, stats), D.transform(records, stats)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    np.testing.assert_array_equal(a.labels, [r.label for r in records])


def test_fit_empty():
    with pytest.raises(ConfigError):
        D.fit_preprocessor([])


def test_stats_roundtrip(tmp_path):
    stats = D.fit_preprocessor(generate_flows(500, seed=5))
    D.save_stats(stats, tmp_path / "s.json")
    assert D.load_stats(tmp_path / "s.json") == stats
    d = json.loads((tmp_path / "s.json").read_text())
    d["format_version"] = 99
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(IncompatibleVersionError):
        D.load_stats(tmp_path / "s.json")


# --- splitting ------------------------------------------------------------


def test_split_examples():
    assert [len(s) for s in D.split_chronological(range(10), (0.6, 0.2, 0.2))] == [6, 2, 2]
    assert [len(s) for s in D.split_chronological(range(7), (0.6, 0.2, 0.2))] == [5, 1, 1]


def test_split_errors():
    with pytest.raises(ConfigError):
        D.split_chronological(range(3), (0.8, 0.1, 0.1))
    with pytest.raises(ConfigError):
        D.split_chronological(range(10), (0.5, 0.2, 0.2))
    with pytest.raises(ConfigError):
        D.split_chronological(range(10), (1.0, 0.0, 0.0))


@given(st.integers(3, 5000), st.floats(0.05, 0.45), st.floats(0.05, 0.45))
def test_split_partition(n, a, b):
    ratios = (1 - a - b, a, b)
    n_val, n_test = math.floor(n * a + 1e-9), math.floor(n * b + 1e-9)
    if min(n_val, n_test) == 0:
        with pytest.raises(ConfigError):
            D.split_chronological(list(range(n)), ratios)
        return
    parts = D.split_chronological(list(range(n)), ratios)
    assert [len(p) for p in parts] == [n - n_val - n_test, n_val, n_test]
    assert parts[0] + parts[1] + parts[2] == list(range(n))


def test_stratified_subsample():
    records = generate_flows(5000, seed=6)
    sub = D.stratified_subsample(records, 1000, seed=1)
    assert len(sub) == 1000
    pos = {id(r): i for i, r in enumerate(records)}
    idx = [pos[id(r)] for r in sub]
    assert idx == sorted(idx)
    expected_benign = round(1000 * D.benign_fraction(records))
    assert abs(sum(r.label == 0 for r in sub) - expected_benign) <= 1
    assert D.stratified_subsample(records, 1000, seed=1) == sub


# --- windowing ------------------------------------------------------------


def table(labels, n=2):
    rows = len(labels)
    return D.FeatureTable(np.arange(rows * n, dtype=float).reshape(rows, n), np.array(labels), ["a", "b"][:n])


def test_windows_enumeration():
    ws = D.build_windows(table([0, 0, 0, 0, 0]), T=2, stride=1)
    assert len(ws) == 4
    np.testing.assert_array_equal(ws.starts, [0, 1, 2, 3])
    np.testing.assert_array_equal(ws.sequences[2], table([0] * 5).matrix[2:4])


def test_windows_degenerate():
    t = table([0, 1, 1, 0])
    ws = D.build_windows(t, T=1, stride=1)
    np.testing.assert_array_equal(ws.labels, t.labels)
    np.testing.assert_array_equal(ws.sequences[:, 0, :], t.matrix)


def test_window_label_is_last_row():
    ws = D.build_windows(table([0, 0, 1]), T=2, stride=1)
    np.testing.assert_array_equal(ws.labels, [0, 1])


def test_windows_too_short():
    with pytest.raises(SequenceTooShortError):
        D.build_windows(table([0, 1]), T=3, stride=1)


@given(st.integers(1, 60), st.integers(1, 12), st.integers(1, 7))
def test_window_count_law(rows, T, stride):
    t = table([0] * rows)
    if rows < T:
        with pytest.raises(SequenceTooShortError):
            D.build_windows(t, T, stride)
        return
    ws = D.build_windows(t, T, stride)
    assert len(ws) == (rows - T) // stride + 1 == D.window_count(rows, T, stride)
    for s, seq in zip(ws.starts, ws.sequences):
        np.testing.assert_array_equal(seq, t.matrix[s:s + T])


def test_windows_roundtrip_and_corruption(tmp_path):
    ws = D.build_windows(table([0, 1, 0, 1, 1, 0]), T=3, stride=2)
    D.save_windows(ws, tmp_path / "w.win")
    back = D.load_windows(tmp_path / "w.win")
    assert back.sequences.tobytes() == ws.sequences.tobytes()
    assert back.labels.tolist() == ws.labels.tolist() and back.starts.tolist() == ws.starts.tolist()
    assert (back.T, back.stride, back.feature_names) == (3, 2, ["a", "b"])
    blob = bytearray((tmp_path / "w.win").read_bytes())
    blob[40] ^= 0xFF
    (tmp_path / "w.win").write_bytes(bytes(blob))
    with pytest.raises(IntegrityError):
        D.load_windows(tmp_path / "w.win")


def test_prepared_windows_never_straddle_splits():
    from flowdetect.pipeline import prepare

    prep = prepare(generate_flows(600, seed=7), T=5, stride=1)
    for ws, part in zip((prep.train, prep.val, prep.test), prep.records):
        assert len(ws) == len(part) - 5 + 1
        assert ws.starts.max() + 5 <= len(part)


def test_prepare_deterministic():
    from flowdetect.pipeline import prepare

    records = generate_flows(800, seed=8)
    a = prepare(records, subsample=500, seed=3)
    b = prepare(records, subsample=500, seed=3)
    for x, y in ((a.train, b.train), (a.val, b.val), (a.test, b.test)):
        assert x.sequences.tobytes() == y.sequences.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()
