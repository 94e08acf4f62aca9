import json
import os

import pytest

from carnot_tame.cli import main
from carnot_tame.config import config_from_dict, override, parse_config
from carnot_tame.errors import ParseError, ValidationError

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
TAMED = os.path.join(FIXTURES, "tamed.toml")
UNTAMED = os.path.join(FIXTURES, "untamed.toml")
SPECTRUM = os.path.join(FIXTURES, "spectrum.toml")


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def load(out_dir, command):
    with open(os.path.join(out_dir, f"{command}.json")) as fh:
        return json.load(fh)


def test_describe_group(tmp_path, capsys):
    code, out, _ = run(["describe-group", "--config", TAMED, "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc == load(tmp_path, "describe-group")
    assert doc["schema_version"] == 1 and doc["command"] == "describe-group"


def test_certify_tamed_and_untamed(tmp_path, capsys):
    assert main(["certify", "--config", TAMED, "--out", str(tmp_path / "t")]) == 0
    assert main(["scan-v2", "--config", UNTAMED, "--out", str(tmp_path / "u")]) == 0
    capsys.readouterr()
    t = load(tmp_path / "t", "certify")
    u = load(tmp_path / "u", "scan-v2")
    assert t["payload"]["all_satisfied"]
    assert u["payload"]["divergence"]["verdict"] == "not diverging"
    assert (tmp_path / "u" / "scan-v2.csv").exists()


def test_outputs_are_deterministic(tmp_path, capsys):
    args = ["check-norm", "--config", TAMED, "--out", str(tmp_path)]
    main(args)
    first = (tmp_path / "check-norm.json").read_text()
    main(args)
    assert (tmp_path / "check-norm.json").read_text() == first
    capsys.readouterr()


def test_seed_override_changes_output(tmp_path, capsys):
    main(["check-norm", "--config", TAMED, "--out", str(tmp_path / "a")])
    main(["check-norm", "--config", TAMED, "--out", str(tmp_path / "b"), "--seed", "8"])
    capsys.readouterr()
    a, b = load(tmp_path / "a", "check-norm"), load(tmp_path / "b", "check-norm")
    assert a["config"]["seed"] == 7 and b["config"]["seed"] == 8
    assert a["payload"] != b["payload"]


def test_small_spectrum_and_dump(tmp_path, capsys):
    dump = tmp_path / "H.txt"
    code, _, _ = run(["spectrum", "--config", SPECTRUM, "--out", str(tmp_path), "--grid", "10,10,10",
                      "--k", "3", "--dump-matrix", str(dump)], capsys)
    assert code == 0
    res = load(tmp_path, "spectrum")["payload"]
    assert len(res["eigenvalues"]) == 3
    assert dump.exists() and dump.stat().st_size > 0


def test_usage_errors_exit_2(capsys):
    assert main(["nonsense"]) == 2
    assert main(["certify"]) == 2
    capsys.readouterr()


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('group = { kind = "heisenberg" }\nnorm = { kind = "kaplan_gh" }\n'
                   'taming = { kind = "none" }\nouter = { kind = "power", p = 2.0 }\nseed = 1\n')
    code, _, err = run(["check-norm", "--config", str(bad), "--out", str(tmp_path)], capsys)
    assert code == 1 and "norm.kind" in err
    noseed = tmp_path / "noseed.toml"
    noseed.write_text(UNTAMED_TEXT)
    code, _, err = run(["certify", "--config", str(noseed), "--out", str(tmp_path)], capsys)
    assert code == 1 and "seed" in err
    code, _, _ = run(["certify", "--config", str(tmp_path / "missing.toml")], capsys)
    assert code == 1


UNTAMED_TEXT = ('group = { kind = "heisenberg" }\nnorm = { kind = "type2", a = 16.0 }\n'
                'taming = { kind = "none" }\nouter = { kind = "power", p = 2.0 }\n')


def test_parse_and_validate():
    with pytest.raises(ParseError):
        parse_config("seed = = 1")
    with pytest.raises(ValidationError) as exc:
        config_from_dict({"seed": 1, "taming": {"kind": "additive_power", "sigma": -1.0}})
    assert "taming" in str(exc.value)
    cfg = parse_config(UNTAMED_TEXT + "seed = 3\n")
    cfg2 = override(cfg, seed=4, **{"chain.steps": 2000})
    assert cfg2.seed == 4 and cfg2.section("chain")["steps"] == 2000
    assert cfg.seed == 3
    with pytest.raises(ValidationError):
        override(cfg, **{"chain.burn_in": 10_000})


@pytest.mark.parametrize("command,extra", [
    ("check-derivatives", []),
    ("sample", ["--steps", "1500"]),
    ("perturb", []),
])
def test_remaining_commands_run(tmp_path, capsys, command, extra):
    code, out, err = run([command, "--config", TAMED, "--out", str(tmp_path)] + extra, capsys)
    assert code == 0, err
    assert json.loads(out)["command"] == command
