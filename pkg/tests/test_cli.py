import json
import subprocess
import sys

import pytest

from subdiff import cli
from subdiff.analysis import GUARD_MODES


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_round_trip():
    cfg = cli.RunConfig(scheme="fraccn", alpha=0.4, sigma=1.2, gamma="5/3", N_list=[128, 256], M=512, example=2).validate()
    again = cli.RunConfig.loads(cfg.dumps())
    assert again == cfg
    assert cli.RunConfig.from_dict(json.loads(again.dumps())).to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "patch",
    [{"N_list": []}, {"N_list": [10, 30]}, {"alpha": 1.5}, {"scheme": "bdf"}, {"gamma": "1/2"}, {"guard": "maybe"}, {"unknown": 1}],
)
def test_config_rejects(patch):
    data = cli.RunConfig().to_dict()
    data.update(patch)
    with pytest.raises(cli.UsageError):
        cli.RunConfig.from_dict(data)


def test_guard_flag_values():
    assert cli.RunConfig(guard=True).validate().guard == "proxy"
    assert cli.RunConfig(guard=False).validate().guard == "off"
    for g in GUARD_MODES:
        assert cli.RunConfig(guard=g).validate().guard == g


def test_parse_gamma():
    assert cli.parse_gamma("5/3") == cli.Fraction(5, 3)
    assert cli.parse_gamma("2.5") == cli.Fraction(5, 2)
    with pytest.raises(cli.UsageError):
        cli.parse_gamma("abc")


def test_convergence_command(capsys, tmp_path):
    cfgfile = tmp_path / "run.json"
    code, out, _ = run(
        capsys, "convergence", "--scheme", "l1", "--alpha", "0.5", "--sigma", "1.5", "--gamma", "1",
        "--example", "1", "--N", "25,50", "--M", "256", "--no-guard", "--norm", "plain", "--save-config", str(cfgfile),
    )
    assert code == 0
    assert "| 25 |" in out and "predicted order" in out
    saved = json.loads(cfgfile.read_text())
    assert saved["N_list"] == [25, 50] and saved["guard"] == "off"


def test_config_file_and_flags_win(capsys, tmp_path):
    cfgfile = tmp_path / "c.json"
    cfg = cli.RunConfig(N_list=[20, 40], M=128, guard="off", format="csv")
    cfgfile.write_text(cfg.dumps())
    code, out, _ = run(capsys, "convergence", "--config", str(cfgfile), "--M", "64")
    assert code == 0
    assert out.splitlines()[1].split(",")[1] == "64"


def test_csv_output_is_deterministic(capsys, tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(cli.RunConfig(N_list=[20, 40], M=64, guard="off", format="csv").dumps())
    outs = []
    for i in range(2):
        target = tmp_path / f"r{i}.csv"
        assert run(capsys, "convergence", "--config", str(cfgfile), "--output", str(target))[0] == 0
        outs.append(target.read_bytes())
    assert outs[0] == outs[1]
    assert b"e-0" in outs[0]


def test_usage_errors(capsys):
    assert run(capsys, "convergence", "--N", "")[0] == 1
    assert run(capsys, "convergence", "--N", "10,25")[0] == 1
    assert run(capsys, "reproduce", "12")[0] == 1
    assert run(capsys, "kernels", "--gamma", "3", "--N", "4", "--T0", "0.9")[0] == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 1


def test_bad_config_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "convergence", "--config", str(bad))[0] == 1
    assert run(capsys, "convergence", "--config", str(tmp_path / "missing.json"))[0] == 1


def test_kernels_command(capsys):
    code, out, _ = run(capsys, "kernels", "--scheme", "l1", "--alpha", "0.5", "--gamma", "2", "--N", "64")
    assert code == 0
    rep = json.loads(out)
    assert rep["identity_deviation"] < 1e-12
    assert rep["assumptions_ok"]


def test_kernels_adversarial_mesh(capsys, tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("0\n0.8\n0.9\n1.0\n")
    code, out, _ = run(capsys, "kernels", "--scheme", "fraccn", "--alpha", "0.5", "--mesh-file", str(f))
    assert code == 0
    rep = json.loads(out)
    assert rep["rho_max"] == pytest.approx(8.0)


def test_kernels_dump_rows(capsys):
    code, out, _ = run(capsys, "kernels", "--gamma", "1", "--N", "8", "--dump-row", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "A,n,j,value" and len(lines) == 4
    code, out, _ = run(capsys, "kernels", "--gamma", "1", "--N", "8", "--dump-p-row", "2")
    assert code == 0 and out.startswith("P,n,j,value")


def test_mesh_command(capsys, tmp_path):
    target = tmp_path / "mesh.csv"
    code, out, _ = run(capsys, "mesh", "--gamma", "5/3", "--N", "64", "--output", str(target))
    assert code == 0
    assert json.loads(out)["N"] == 64
    assert len(target.read_text().splitlines()) == 65


def test_solve_command(capsys, tmp_path):
    from subdiff.solver import StepRestrictionWarning

    target = tmp_path / "sol.csv"
    with pytest.warns(StepRestrictionWarning):  # advisory only
        code, out, _ = run(
        capsys, "solve", "--scheme", "fraccn", "--alpha", "0.4", "--sigma", "1.2", "--gamma", "5/3",
            "--example", "2", "--N", "16", "--M", "32", "--output", str(target),
        )
    assert code == 0
    assert json.loads(out)["error"] > 0
    assert len(target.read_text().splitlines()) == 17


def test_bounds_command(capsys):
    code, out, _ = run(capsys, "bounds", "--alpha", "0.9", "--N", "16", "--M", "16", "--samples", "2")
    assert code == 0
    rep = json.loads(out)
    assert rep["l1"]["violations"] == 0 and rep["fraccn"]["violations"] == 0


def test_reproduce_small(capsys, tmp_path):
    code, out, _ = run(
        capsys, "reproduce", "1", "--columns", "1", "--n-max", "200", "--M", "256", "--no-guard", "--output", str(tmp_path)
    )
    assert code == 0
    assert (tmp_path / "table1.md").exists() and (tmp_path / "table1.csv").exists()
    assert "published_order" in out


def test_reproduce_workers_keep_order():
    serial = cli.reproduce_table(2, columns=[0, 1], n_max=200, M=128, guard="off")
    parallel = cli.reproduce_table(2, columns=[0, 1], n_max=200, M=128, guard="off", workers=2)
    assert [r.to_csv() for r in serial] == [r.to_csv() for r in parallel]


def test_numeric_failure_exit_code(monkeypatch, capsys):
    from subdiff.spatial import ZeroPivotError

    def boom(args):
        raise ZeroPivotError("pivot")

    monkeypatch.setattr(cli, "cmd_mesh", boom)
    parser = cli.build_parser
    monkeypatch.setattr(cli, "build_parser", lambda: _with_func(parser(), "mesh", boom))
    assert run(capsys, "mesh")[0] == 2


def _with_func(parser, name, func):
    for action in parser._subparsers._group_actions:
        action.choices[name].set_defaults(func=func)
    return parser


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "subdiff", "mesh", "--N", "8"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["N"] == 8
