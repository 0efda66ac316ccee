import math
import subprocess
import sys

import pytest

from gradphi_plots.render import FigureSpec, SchemaError, main, read_csv, render


@pytest.fixture(scope="session")
def fixture_csvs(tmp_path_factory):
    """Small real runs of the primary CLI, one per figure kind."""
    root = tmp_path_factory.mktemp("runs")
    cmds = [
        ["gap", "--potential", "gaussian", "--N", "6", "--seed", "1",
         "--replicas", "400"],
        ["mix", "--potential", "gaussian", "--N", "8", "--seed", "2",
         "--replicas", "400"],
        ["equilibrium", "--potential", "gaussian", "--N", "8", "--seed", "3",
         "--replicas", "500"],
        ["cutoff", "--potential", "gaussian", "--N-list", "8,10", "--seed", "4",
         "--replicas", "400"],
    ]
    for cmd in cmds:
        res = subprocess.run([sys.executable, "-m", "gradphi.cli", *cmd,
                              "--output-dir", str(root), "--emit-plot-data"],
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
    return {
        "gap_decay": next(root.rglob("gap_decay.csv")),
        "tv_curves": next((root / "mix").rglob("tv_curves.csv")),
        "equilibrium_hist": next(root.rglob("equilibrium_hist.csv")),
        "cutoff_profile": next(root.rglob("cutoff_profile.csv")),
    }


@pytest.mark.parametrize("kind", ["gap_decay", "tv_curves", "equilibrium_hist",
                                  "cutoff_profile"])
def test_each_kind_renders(kind, fixture_csvs, tmp_path):
    out = tmp_path / f"{kind}.png"
    render(FigureSpec(kind, [str(fixture_csvs[kind])], str(out)))
    assert out.exists() and out.stat().st_size > 2000


@pytest.mark.parametrize("kind", ["gap_decay", "tv_curves", "equilibrium_hist",
                                  "cutoff_profile"])
def test_rendering_is_deterministic(kind, fixture_csvs, tmp_path):
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    render(FigureSpec(kind, [str(fixture_csvs[kind])], str(a)))
    render(FigureSpec(kind, [str(fixture_csvs[kind])], str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_tv_marker_position_from_header(fixture_csvs, tmp_path):
    meta, _ = read_csv(fixture_csvs["tv_curves"])
    n = int(float(meta["N"]))
    expected = math.log(n) / (2.0 * (1.0 - math.cos(math.pi / n)))
    marker = render(FigureSpec("tv_curves", [str(fixture_csvs["tv_curves"])],
                               str(tmp_path / "tv.png")))
    assert marker == pytest.approx(expected, rel=1e-12)


def test_empty_csv_clean_error_no_file(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# N=8\ntime,lower,lower_stderr,upper,upper_stderr\n")
    out = tmp_path / "x.png"
    with pytest.raises(SchemaError):
        render(FigureSpec("tv_curves", [str(empty)], str(out)))
    assert not out.exists()


def test_schema_mismatch_lists_missing_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# N=8\ntime,upper\n1.0,0.5\n")
    with pytest.raises(SchemaError) as err:
        render(FigureSpec("tv_curves", [str(bad)], str(tmp_path / "y.png")))
    assert "lower" in str(err.value)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        render(FigureSpec("pie", ["x.csv"], str(tmp_path / "z.png")))


def test_cli_entry(fixture_csvs, tmp_path):
    out = tmp_path / "cli.png"
    rc = main(["--kind", "gap_decay", "--input", str(fixture_csvs["gap_decay"]),
               "--output", str(out)])
    assert rc == 0 and out.exists()
    rc_bad = main(["--kind", "tv_curves", "--input", str(tmp_path / "nope.csv"),
                   "--output", str(tmp_path / "w.png")])
    assert rc_bad == 2
