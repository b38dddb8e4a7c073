import pytest

from adda.errors import FormatError
from adda.report import read_metrics, render_report
from adda.trainer import metrics_header


def write_csv(path, rows, n=2):
    lines = [",".join(metrics_header(n))] + rows
    path.write_text("\n".join(lines) + "\n")
    return path


ROW1 = "1,0,1,0.5,0.5,0.5,0.5,16,16,0.25,0.5,2.0,1.5,1.75,0.0,0.0"
ROW2 = "2,0,1,0.6,0.4,0.4,0.6,20,12,,0.5,2.0,1.5,1.75,0.1,0.0"


def test_valid_metrics_render_three_plots(tmp_path):
    path = write_csv(tmp_path / "m.csv", [ROW1, ROW2])
    m = read_metrics(path)
    assert m["p"].shape == (2, 2)
    assert m["acc"][1, 0] != m["acc"][1, 0]  # blank cell reads as NaN
    paths = render_report(path, tmp_path / "plots")
    assert [p.name for p in paths] == ["probabilities.svg", "p_std.svg", "accuracy.svg"]
    assert all(p.read_text().lstrip().startswith("<?xml") for p in paths)


def test_single_epoch_renders(tmp_path):
    path = write_csv(tmp_path / "m.csv", [ROW1])
    assert len(render_report(path, tmp_path / "plots")) == 3


def test_empty_and_header_only(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(FormatError, match="row 1"):
        read_metrics(empty)
    with pytest.raises(FormatError, match="row 2"):
        read_metrics(write_csv(tmp_path / "h.csv", []))


def test_malformed_rows_report_row_number(tmp_path):
    with pytest.raises(FormatError, match="row 3"):
        read_metrics(write_csv(tmp_path / "a.csv", [ROW1, ROW2[:-4]]))
    with pytest.raises(FormatError, match="row 2.*p_0"):
        read_metrics(write_csv(tmp_path / "b.csv", [ROW1.replace("0.5", "x", 1)]))
