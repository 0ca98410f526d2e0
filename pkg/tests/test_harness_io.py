import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsrm.exceptions import IngestError, InvalidInput
from rsrm.harness.io import (
    TRACE_KEYS,
    ingest_matrices,
    parse_trace_filename,
    read_trace,
    trace_filename,
    write_matrices,
    write_trace,
)
from rsrm.problems import Dataset, synth_ica, synth_pca, synth_spd


@pytest.mark.parametrize(
    "data",
    [synth_pca(40, 6, 0, r=2), synth_ica(7, 4, 1), synth_spd(9, 3, 20.0, 2)],
    ids=["pca", "ica", "rc"],
)
def test_round_trip_bit_identical(tmp_path, data):
    path = write_matrices(tmp_path / "d.mat", data)
    back = ingest_matrices(path)
    assert back.kind == data.kind and back.r == data.r
    assert np.array_equal(back.samples, data.samples)
    # writing again gives the same bytes
    again = write_matrices(tmp_path / "e.mat", back)
    assert again.read_bytes() == path.read_bytes()


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6))
def test_round_trip_arbitrary_floats(tmp_path_factory, vals):
    data = Dataset("pca", np.array(vals).reshape(2, 3), r=1)
    path = write_matrices(tmp_path_factory.mktemp("rt") / "x.mat", data)
    assert np.array_equal(ingest_matrices(path).samples, data.samples)


def test_single_identity_rc(tmp_path):
    p = tmp_path / "one.mat"
    p.write_text("RSRM-MAT v1 rc 1 3\n1 0 0 0 1 0 0 0 1\n")
    data = ingest_matrices(p, kind="rc")
    assert data.n == 1 and np.array_equal(data.samples[0], np.eye(3))


def test_comments_and_layout_are_free(tmp_path):
    p = tmp_path / "c.mat"
    p.write_text("# produced by hand\nRSRM-MAT v1 pca 2 2 1\n1 2\n\n# second\n3\n4\n")
    np.testing.assert_array_equal(ingest_matrices(p).samples, [[1, 2], [3, 4]])


def test_asymmetric_ica_block_reports_index(tmp_path):
    blocks = [np.eye(2), np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]])]
    p = tmp_path / "bad.mat"
    p.write_text("RSRM-MAT v1 ica 3 2\n" + "\n".join(" ".join(map(str, b.ravel())) for b in blocks) + "\n")
    with pytest.raises(IngestError) as info:
        ingest_matrices(p)
    assert info.value.index == 2
    assert str(info.value).count("sample 2") == 1


def test_indefinite_rc_block_reports_index(tmp_path):
    p = tmp_path / "bad.mat"
    p.write_text("RSRM-MAT v1 rc 2 2\n1 0 0 1\n1 0 0 -1\n")
    with pytest.raises(IngestError) as info:
        ingest_matrices(p)
    assert info.value.index == 1


@pytest.mark.parametrize(
    "text",
    [
        "",
        "MAT v1 pca 1 2\n1 2\n",
        "RSRM-MAT v2 pca 1 2\n1 2\n",
        "RSRM-MAT v1 svd 1 2\n1 2\n",
        "RSRM-MAT v1 pca one 2\n1 2\n",
        "RSRM-MAT v1 pca 0 2\n",
    ],
)
def test_bad_header(tmp_path, text):
    p = tmp_path / "h.mat"
    p.write_text(text)
    with pytest.raises(IngestError):
        ingest_matrices(p)


def test_count_mismatch(tmp_path):
    p = tmp_path / "n.mat"
    p.write_text("RSRM-MAT v1 pca 3 2\n1 2\n3 4\n")
    with pytest.raises(IngestError) as info:
        ingest_matrices(p)
    assert info.value.index == 2
    p.write_text("RSRM-MAT v1 pca 1 2\n1 2\n3 4\n")
    with pytest.raises(IngestError, match="expected 1 blocks"):
        ingest_matrices(p)


def test_bad_tokens(tmp_path):
    p = tmp_path / "t.mat"
    p.write_text("RSRM-MAT v1 pca 2 2\n1 2\n3 x\n")
    with pytest.raises(IngestError) as info:
        ingest_matrices(p)
    assert info.value.index == 1
    p.write_text("RSRM-MAT v1 pca 2 2\nnan 2\n3 4\n")
    with pytest.raises(IngestError) as info:
        ingest_matrices(p)
    assert info.value.index == 0


def test_kind_mismatch(tmp_path):
    path = write_matrices(tmp_path / "d.mat", synth_pca(4, 3, 0, r=1))
    with pytest.raises(IngestError, match="expected 'rc'"):
        ingest_matrices(path, kind="rc")


def test_trace_round_trip(tmp_path):
    rows = [dict(t=i, sfo=10 * i, sec=0.1 * i, f=-1.0 / (i + 1), gap=1.0 / (i + 1), gnorm=0.5, est_err=None) for i in range(4)]
    path = write_trace(tmp_path / "t.jsonl", rows)
    back = read_trace(path)
    assert back == rows
    assert all(list(r) == list(TRACE_KEYS) for r in back)


def test_trace_without_timing(tmp_path):
    rows = [dict(t=0, sfo=100, sec=3.2, f=0.0, gap=0.0, gnorm=0.0, est_err=0.0)]
    path = write_trace(tmp_path / "t.jsonl", rows, timing=False)
    assert json.loads(path.read_text())["sec"] == 0.0


@pytest.mark.parametrize("eta", [1.0, 0.005, 1e-3, 0.1])
def test_trace_filename_round_trip(eta):
    name = trace_filename("rsrm-b5", eta, 7)
    assert parse_trace_filename("/some/dir/" + name) == ("rsrm-b5", eta, 7)


def test_trace_filename_rejects_other_files():
    with pytest.raises(InvalidInput):
        parse_trace_filename("summary.csv")
