import json
import math

import pytest

from capres.cli import build_report, canonical_text, main, parse_config, parse_config_text
from capres.errors import MissingArtifact, ParseError, RangeError, UnknownKey
from conftest import BARRIER_Z

BARRIER_CFG = """\
# half-line barrier
problem.potential = piecewise
problem.segments  = 1:2:10
contour.theta  = 0.3
contour.alpha0 = 0.5
discretization.L = 30
discretization.n_points = 601
sweep.eps_min = 1e-3
sweep.steps = 5
dtn.candidates = 2.8, 2.9
dtn.h = 0.05
"""


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("CAPRES_OUTPUT_DIR", str(tmp_path / "runs"))
    return tmp_path / "runs"


@pytest.fixture
def barrier_cfg(tmp_path):
    p = tmp_path / "barrier.cfg"
    p.write_text(BARRIER_CFG)
    return p


def run_dir(outdir):
    (d,) = list(outdir.iterdir())
    return d


def test_defaults_filled(barrier_cfg):
    cfg = parse_config(barrier_cfg)
    assert cfg["contour.alpha0"] == 0.5
    assert cfg["discretization.scheme"] == "FD4"
    assert cfg["eigen.quadrature_points"] == 32
    assert parse_config_text("problem.potential = zero")["contour.alpha0"] == 0.1


def test_digest_ignores_comments_and_spacing():
    a = parse_config_text("contour.theta = 0.2\n# note\nproblem.R1=3")
    b = parse_config_text("problem.R1 =   3   # radius\n\ncontour.theta=0.2")
    assert a.digest == b.digest
    assert canonical_text(a.raw) == "contour.theta=0.2\nproblem.R1=3\n"
    assert a.digest != parse_config_text("contour.theta = 0.21").digest


def test_theta_range():
    with pytest.raises(RangeError, match="sector bound"):
        parse_config_text("contour.theta = 0.5")
    assert 0.5 > math.pi / 8


def test_duplicate_key_names_both_lines():
    with pytest.raises(ParseError, match="lines 1 and 3"):
        parse_config_text("contour.theta = 0.1\n# x\ncontour.theta = 0.2\n")


def test_unknown_and_malformed():
    with pytest.raises(UnknownKey):
        parse_config_text("contour.thetaa = 0.1")
    with pytest.raises(ParseError, match="line 2"):
        parse_config_text("contour.theta = 0.1\nnonsense")
    with pytest.raises(ParseError):
        parse_config_text("contour.theta = abc")


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 1


def test_config_error_exit(tmp_path, outdir, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("contour.theta = 0.5\n")
    assert main(["scaling", "eig", "--config", str(p)]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["kind"] == "RangeError"


def test_contour_check(outdir, capsys):
    assert main(["contour", "check", "--theta", "0.3", "--r1", "3", "--alpha", "0.2"]) == 0
    out = capsys.readouterr().out
    rows = [l.split(",") for l in out.strip().splitlines()[1:5]]
    assert [r[0] for r in rows] == ["(1)", "(2)", "(3)", "(4)"]
    assert max(float(r[1]) for r in rows) < 1e-12


def test_davies_validate_and_cache(outdir, capsys):
    assert main(["davies", "validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    errs = [float(l.split(",")[-1]) for l in lines[1:]]
    assert len(errs) == 12 and max(errs) < 1e-6
    csv_path = run_dir(outdir) / "davies" / "davies.csv"
    mtime = csv_path.stat().st_mtime_ns
    assert main(["davies", "validate"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "cached"
    assert csv_path.stat().st_mtime_ns == mtime
    # every value printed with 17 significant digits round-trips
    first = lines[1].split(",")
    assert float(first[2]) == float(repr(float(first[2])))


def test_dtn_interior_singular(tmp_path, outdir, capsys):
    p = tmp_path / "free.cfg"
    p.write_text("problem.potential = zero\n")
    lam = (math.pi / 2.5) ** 2
    code = main(["dtn", "count", "--config", str(p), "--center", f"{lam + 0.05!r},0", "--radius", "0.05",
                 "--interface", "2.5", "--theta", "0.1"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["kind"] == "InteriorSingular"


def test_report_missing(tmp_path):
    with pytest.raises(MissingArtifact):
        build_report(tmp_path)
    assert main(["report", str(tmp_path)]) == 2


def test_partial_report(barrier_cfg, outdir, capsys):
    assert main(["oracle", "find", "--config", str(barrier_cfg)]) == 0
    capsys.readouterr()
    rep = build_report(run_dir(outdir))
    assert rep["complete"] is False and rep["stages"] == ["oracle"]
    assert len(rep["resonances"]) == 1


def test_full_pipeline_report(barrier_cfg, outdir, capsys, tmp_path):
    cfg = str(barrier_cfg)
    assert main(["oracle", "find", "--config", cfg]) == 0
    assert main(["scaling", "eig", "--config", cfg]) == 0
    assert main(["cap", "sweep", "--config", cfg]) == 0
    z = BARRIER_Z
    assert main(["dtn", "count", "--config", cfg, "--center", f"{z.real!r},{z.imag!r}", "--radius", "0.05"]) == 0
    capsys.readouterr()
    d = run_dir(outdir)
    assert main(["report", str(d), "--json", str(tmp_path / "r1.json")]) == 0
    rep = json.loads((tmp_path / "r1.json").read_text())
    assert rep["complete"] is True
    (row,) = rep["resonances"]
    assert abs(complex(*map(float, row["oracle"])) - z) < 1e-12
    assert abs(complex(*map(float, row["scaling"])) - z) < 1e-4
    assert float(row["abs_z0_minus_ref"]) < 1e-3
    assert row["dtn_count"] == 1 and row["projection_rank"] == 1
    # rerunning gives a bit-identical report
    assert main(["report", str(d), "--json", str(tmp_path / "r2.json")]) == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    manifest = json.loads((d / "manifest.json").read_text())
    assert {"oracle", "scaling", "sweep"} <= set(manifest["stages"])
    assert not (d / ".lock").exists()


def test_force_recomputes(barrier_cfg, outdir, capsys):
    cfg = str(barrier_cfg)
    assert main(["oracle", "find", "--config", cfg]) == 0
    assert main(["oracle", "find", "--config", cfg, "--force"]) == 0
    out = capsys.readouterr().out
    assert "cached" not in out


def test_locked_run_dir(barrier_cfg, outdir, capsys):
    cfg = str(barrier_cfg)
    assert main(["oracle", "find", "--config", cfg]) == 0
    (run_dir(outdir) / ".lock").write_text("999")
    assert main(["scaling", "eig", "--config", cfg]) == 2
    assert "locked" in capsys.readouterr().err
