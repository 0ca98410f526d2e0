import numpy as np
import pytest

from rsrm.exceptions import PlotError
from rsrm.harness.io import trace_filename, write_trace
from rsrm.harness.plotting import collect_traces, emit_plot, median_band


def _rows(gaps, step=10, dt=0.5):
    return [dict(t=i + 1, sfo=step * i, sec=dt * i, f=g, gap=g, gnorm=1.0, est_err=None) for i, g in enumerate(gaps)]


@pytest.fixture
def trace_dir(tmp_path):
    d = tmp_path / "traces"
    d.mkdir()
    for method in ("rsrm", "rsgd"):
        for eta in (0.1, 0.01):
            for seed in range(3):
                gaps = np.geomspace(1.0, 1e-3 * (seed + 1), 12)
                write_trace(d / trace_filename(method, eta, seed), _rows(gaps))
    return d


def test_flat_trace_gives_horizontal_line(tmp_path):
    p = write_trace(tmp_path / trace_filename("rsrm", 0.1, 0), _rows([0.25] * 8))
    x, med, lo, hi = median_band(collect_traces([str(p)])[("rsrm", 0.1)])
    assert np.all(med == 0.25) and np.all(lo == 0.25) and np.all(hi == 0.25)
    np.testing.assert_array_equal(x, 10 * np.arange(8))
    out, labels, _ = emit_plot([str(p)], out=str(tmp_path / "flat.svg"))
    assert labels == ["rsrm (eta0=0.1)"]


def test_median_band_step_sampling():
    a = _rows([4.0, 2.0, 1.0], step=10)
    b = _rows([8.0, 4.0], step=20)
    x, med, lo, hi = median_band([a, b])
    np.testing.assert_array_equal(x, [0, 10, 20])
    # b is sampled at its last logged value at or before each x
    np.testing.assert_array_equal(med, [6.0, 5.0, 2.5])
    assert np.all(lo <= med) and np.all(med <= hi)


@pytest.mark.parametrize("axis, label", [("sfo", "SFO calls"), ("time", "wall time (s)")])
def test_axis_label_and_series(trace_dir, tmp_path, axis, label):
    out, labels, xlabel = emit_plot([str(trace_dir)], x_axis=axis, out=str(tmp_path / "g.svg"), title="demo")
    assert xlabel == label
    assert len(labels) == 4
    text = (tmp_path / "g.svg").read_text()
    assert f">{label}<" in text and ">demo<" in text


def test_svg_is_byte_stable(trace_dir, tmp_path):
    a = emit_plot([str(trace_dir)], out=str(tmp_path / "a.svg"))[0]
    b = emit_plot([str(trace_dir)], out=str(tmp_path / "b.svg"))[0]
    assert open(a, "rb").read() == open(b, "rb").read()


def test_errors(tmp_path):
    with pytest.raises(PlotError):
        emit_plot([], out=str(tmp_path / "x.svg"))
    empty = tmp_path / trace_filename("rsrm", 0.1, 0)
    empty.write_text("")
    with pytest.raises(PlotError, match="empty trace"):
        emit_plot([str(empty)], out=str(tmp_path / "x.svg"))
    with pytest.raises(PlotError):
        emit_plot([str(empty)], x_axis="iters", out=str(tmp_path / "x.svg"))
    d = tmp_path / "none"
    d.mkdir()
    with pytest.raises(PlotError, match="no trace files"):
        emit_plot([str(d)], out=str(tmp_path / "x.svg"))
