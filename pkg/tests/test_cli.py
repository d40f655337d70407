import json
import math
import textwrap
from pathlib import Path

import pytest

from scatterlab import cli, scenarios

ROOT = Path(__file__).resolve().parents[1]


def write_ini(tmp_path, text, name="scen.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def run(args, capsys):
    code = cli.main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_deviation_report(tmp_path, capsys):
    ini = write_ini(tmp_path, """
        [scenario.dev]
        kind = deviation
        phi = 1.0
        dim = 2
    """)
    code, out, _ = run(["run", ini, "--output-dir", tmp_path / "out"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "out/dev/report.json").read_text())
    assert report["results"]["delta"] == pytest.approx(2 * math.sinh(1.0), rel=1e-14)
    assert report["status"] == "pass"
    assert "status: ok" in (tmp_path / "out/dev/summary.txt").read_text()


def test_explicit_matrices(tmp_path, capsys):
    ini = write_ini(tmp_path, """
        [scenario.aniso]
        kind = deviation
        g = 1,0;0,1
        h = 0.25,0;0,4
    """)
    code, _, _ = run(["run", ini, "--output-dir", tmp_path], capsys)
    assert code == 0
    report = json.loads((tmp_path / "aniso/report.json").read_text())
    assert report["results"]["delta"] == pytest.approx(1.5, rel=1e-14)
    assert report["results"]["rho"] == pytest.approx(1.0, rel=1e-14)


def test_empty_file_nothing_to_do(tmp_path, capsys):
    ini = write_ini(tmp_path, "# no scenarios\n")
    code, out, _ = run(["run", ini], capsys)
    assert code == 0 and "nothing to do" in out


def test_syntax_error_has_line_number(tmp_path, capsys):
    ini = write_ini(tmp_path, "[scenario.a]\nkind = deviation\nthis line is junk\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and "line 3" in err


def test_unknown_parameter_points_at_line(tmp_path, capsys):
    ini = write_ini(tmp_path, "[scenario.a]\nkind = deviation\nphi = 1\nbogus = 3\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and ":4:" in err and "bogus" in err


def test_bad_value_points_at_line(tmp_path, capsys):
    ini = write_ini(tmp_path, "[scenario.a]\nkind = deviation\n\nphi = one\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and ":4:" in err and "phi" in err


def test_unknown_fixture_lists_available(tmp_path, capsys):
    ini = write_ini(tmp_path, "[scenario.a]\nfixture = nope\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and "cigar-flow" in err


def test_bad_section_name(tmp_path, capsys):
    ini = write_ini(tmp_path, "[job]\nkind = deviation\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and "scenario.<id>" in err


def test_stochastic_kind_needs_seed(tmp_path, capsys):
    ini = write_ini(tmp_path, "[scenario.b]\nkind = bismut\nx = 1,0\n")
    code, _, err = run(["run", ini], capsys)
    assert code == 2 and "seed" in err


def test_missing_file(tmp_path, capsys):
    code, _, err = run(["run", tmp_path / "absent.ini"], capsys)
    assert code == 2 and "cannot read" in err


def test_bad_threads(tmp_path, capsys):
    ini = write_ini(tmp_path, "")
    code, _, _ = run(["run", ini, "--threads", "0"], capsys)
    assert code == 2


def test_failed_theorem_check_exit_one(tmp_path, capsys, monkeypatch):
    def failing(p, threads=1):
        return scenarios.ScenarioResult({}, [scenarios.Check("forced", False, True)])

    monkeypatch.setitem(scenarios.RUNNERS, "deviation", failing)
    ini = write_ini(tmp_path, "[scenario.a]\nkind = deviation\nphi = 1\n")
    code, _, err = run(["run", ini, "--output-dir", tmp_path], capsys)
    assert code == 1 and "forced" in err
    assert json.loads((tmp_path / "a/report.json").read_text())["status"] == "fail"


def test_list_fixtures(capsys):
    code, out, _ = run(["list-fixtures"], capsys)
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert len(rows) >= 10
    assert all(any(tag in r for tag in ("closed form", "numerical", "quadrature", "trivial", "divergence", "algebraic"))
               for r in rows)


def test_schema_file_is_current(capsys):
    code, out, _ = run(["schema"], capsys)
    assert code == 0
    assert json.loads(out) == scenarios.schema_document()
    assert json.loads((ROOT / "scenario_schema.json").read_text()) == scenarios.schema_document()


def test_every_runnable_fixture_resolves():
    for name, fx in scenarios.FIXTURES.items():
        if fx.kind is None:
            continue
        params = scenarios.resolve({"fixture": name, "seed": "1"} if fx.kind in ("bismut", "gradient-bound")
                                   else {"fixture": name})
        assert params["kind"] == fx.kind


def test_rerun_is_bit_identical(tmp_path, capsys):
    ini = write_ini(tmp_path, """
        [scenario.mc]
        fixture = gaussian-bismut-e2
        n_paths = 2000
        dt = 1e-3
        seed = 2024

        [scenario.flow]
        fixture = einstein-hyperbolic-flow

        [scenario.disc]
        fixture = discrete-conformal-1d
        n = 40
    """)
    assert run(["run", ini, "--output-dir", tmp_path / "a"], capsys)[0] == 0
    assert run(["run", ini, "--output-dir", tmp_path / "b", "--threads", "2"], capsys)[0] == 0
    for sid in ("mc", "flow", "disc"):
        files = sorted(p.name for p in (tmp_path / "a" / sid).iterdir())
        assert "report.json" in files
        for name in files:
            assert (tmp_path / "a" / sid / name).read_bytes() == (tmp_path / "b" / sid / name).read_bytes()


def test_json_nonfinite_values_are_strings():
    assert cli.to_jsonable({"a": math.inf, "b": [math.nan, -math.inf]}) == {"a": "inf", "b": ["nan", "-inf"]}


def test_criterion_scenario_verdicts(tmp_path, capsys):
    ini = write_ini(tmp_path, """
        [scenario.gauss]
        fixture = conformal-gaussian-e2

        [scenario.const]
        fixture = conformal-constant-e2
    """)
    code, _, _ = run(["run", ini, "--output-dir", tmp_path], capsys)
    assert code == 0
    gauss = json.loads((tmp_path / "gauss/report.json").read_text())
    text = json.dumps(gauss["results"])
    assert "theorem-main-g" in text and "theorem-main-h" in text
    const = (tmp_path / "const/summary.txt").read_text()
    assert "diverged" in const
