import json
import math
import textwrap

import pytest

from capax import cli
from capax.config import from_dict, load_config
from capax.errors import ConfigError

COMPARE = """
epsilons = [0.02, 0.05, 0.1]
k_max = 6
[domain]
shape = "sphere"
order = 10
[hole]
shape = "sphere"
order = 10
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def _run(tmp_path, mode, text, *extra):
    cfg = _write(tmp_path, text)
    out = tmp_path / f"out_{mode}"
    code = cli.main([mode, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_newtonian_json(tmp_path):
    code, out = _run(tmp_path, "newtonian", "[hole]\nshape = 'sphere'\norder = 8\n")
    assert code == 0
    rep = json.loads((out / "newtonian.json").read_text())
    assert rep["capacity"] == pytest.approx(4 * math.pi, rel=1e-10)
    assert rep["config_hash"] and rep["mode"] == "newtonian"
    csv = (out / "newtonian.csv").read_text()
    assert csv.startswith(f"# config_hash={rep['config_hash']}\n")


def test_compare_columns_and_values(tmp_path):
    code, out = _run(tmp_path, "compare", COMPARE)
    assert code == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].split(",") == ["epsilon", "direct", "series", "analytic", "rel_err_series_direct",
                                   "rel_err_direct_analytic", "rel_err_series_analytic"]
    for line in lines[2:]:
        e, d, s, a = (float(x) for x in line.split(",")[:4])
        assert a == pytest.approx(4 * math.pi * e / (1 - e), rel=1e-14)
        assert d == pytest.approx(a, rel=1e-10)


def test_determinism_across_jobs(tmp_path):
    cfg = _write(tmp_path, COMPARE)
    outs = []
    for jobs in ("1", "4"):
        out = tmp_path / f"j{jobs}"
        assert cli.main(["compare", "--config", str(cfg), "--out", str(out), "--jobs", jobs]) == 0
        outs.append(out)
    for name in ("compare.csv", "compare.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_json_round_trip(tmp_path):
    cfg = load_config(_write(tmp_path, COMPARE), "series")
    rep = cli.run(cfg, tmp_path / "o")
    assert json.loads((tmp_path / "o" / "series.json").read_text()) == rep
    assert json.loads(cli.json_text(rep)) == rep


def test_eigen_report_schema(tmp_path):
    code, out = _run(tmp_path, "eigen", """
        epsilons = [0.01, 0.02]
        [hole]
        shape = "sphere"
        order = 10
        [eigen]
        scenario = "ball"
        l = 0
        n = 1
        """)
    assert code == 0
    rep = json.loads((out / "eigen.json").read_text())
    assert {"eigenvalue", "multiplicity", "blocks", "predictions", "oracle"} <= set(rep)
    assert rep["eigenvalue"] == pytest.approx(math.pi ** 2)
    assert rep["blocks"][0]["mu"][0] == pytest.approx(2 * math.pi ** 2, rel=1e-8)
    assert len(rep["oracle"]) == 2 and rep["oracle"][0]["rel_shift_error"] < 0.03


def test_eigen_custom(tmp_path):
    code, out = _run(tmp_path, "eigen", """
        epsilons = [0.01]
        [hole]
        shape = "ellipsoid"
        axes = [2.0, 1.0, 1.0]
        order = 10
        [eigen]
        scenario = "custom"
        eigenvalue = 7.0
        basis = [[[0, 0, 0, 1.0]], [[1, 0, 0, 1.0]]]
        """)
    assert code == 0
    rep = json.loads((out / "eigen.json").read_text())
    assert sorted(b["order"] for b in rep["blocks"]) == [0, 1]
    assert rep["oracle"] is None


def test_converge_icosphere_order(tmp_path):
    code, out = _run(tmp_path, "converge", """
        [hole]
        shape = "icosphere"
        [converge]
        quantity = "newtonian"
        levels = [1, 2, 3]
        """)
    assert code == 0
    rep = json.loads((out / "converge.json").read_text())
    assert rep["declared_order"] == 2
    assert rep["observed_order"][-1] >= 2 - 0.5
    rows = (out / "converge.csv").read_text().splitlines()[2:]
    assert [r.split(",")[0] for r in rows] == ["1", "2", "3"]


def test_converge_ellipsoid_area_monotone(tmp_path):
    code, out = _run(tmp_path, "converge", """
        [hole]
        shape = "ellipsoid"
        axes = [2.0, 1.0, 1.0]
        [converge]
        quantity = "area"
        levels = [4, 6, 8]
        """)
    assert code == 0
    rows = [r.split(",") for r in (out / "converge.csv").read_text().splitlines()[2:]]
    errs = [float(r[-1]) for r in rows]
    assert errs[0] > errs[1] > errs[2]


def test_richardson_table_on_model_sequence():
    h = [0.5, 0.25, 0.125, 0.0625]
    vals = [1.0 + 3 * x ** 2 for x in h]
    rows = cli.richardson_table([1, 2, 3, 4], vals, h)
    assert rows[2][3] == pytest.approx(2.0, abs=1e-9)
    assert rows[3][2] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("text,flag", [
    ("bogus = 1\n", None),
    ("[hole]\nshape = 'torus'\n", None),
    ("epsilons = [0.7]\n", None),
    ("epsilons = []\n", None),
    ("[converge]\nlevels = [4]\n", "converge"),
    ("mode = 'series'\n", "direct"),
    ("[functions]\nu_a = [[20, 0, 0, 1.0]]\n", None),
    ("[hole]\nshape = 'mesh'\npath = 'missing.off'\n", "newtonian"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, flag):
    code, _ = _run(tmp_path, flag or "direct", text)
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_field_level_messages():
    with pytest.raises(ConfigError, match=r"\[hole\].radius"):
        from_dict({"hole": {"radius": -1.0}}, "newtonian")
    with pytest.raises(ConfigError, match="need at least 2 refinement levels"):
        from_dict({"converge": {"levels": [3]}}, "converge")


def test_epsilon_range():
    cfg = from_dict({"epsilons": {"start": 0.01, "stop": 0.08, "num": 4, "spacing": "log"}}, "direct")
    assert cfg.epsilons[0] == pytest.approx(0.01) and cfg.epsilons[-1] == pytest.approx(0.08)
    assert len(cfg.epsilons) == 4


def test_hash_ignores_jobs():
    a = from_dict({}, "direct", {"jobs": 1})
    b = from_dict({}, "direct", {"jobs": 4})
    c = from_dict({"k_max": 5}, "direct")
    assert a.hash() == b.hash() != c.hash()


def test_numerical_failure_exit_3(tmp_path, capsys, monkeypatch):
    import capax.direct_solver as ds

    monkeypatch.setattr(ds, "RESIDUAL_TOL", -1.0)
    code, _ = _run(tmp_path, "direct", COMPARE)
    assert code == 3
    err = capsys.readouterr().err
    assert "numerical failure" in err and "cond" in err


def test_plot_flag(tmp_path):
    pytest.importorskip("matplotlib")
    code, out = _run(tmp_path, "series", COMPARE, "--plot")
    assert code == 0
    assert (out / "series.png").stat().st_size > 0


def test_run_subcommand_uses_config_mode(tmp_path):
    code, out = _run(tmp_path, "run", "mode = 'newtonian'\n[hole]\norder = 6\n")
    assert code == 0 and (out / "newtonian.json").exists()
