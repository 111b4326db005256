import json
import subprocess
import sys

import pytest

from nn_costmodel.cli import fmt_count, main, styling_enabled

FIXTURE = """
model "recurrent" {
    bits { w = 8; i = 8; a = 8; b = 8; }
    quant = uniform;
    layer "rnn" rnn { n_i = 100; n_h = 100; n_s = 100; }
    layer "lstm" lstm { n_i = 100; n_h = 100; n_s = 100; }
    layer "gru" gru { n_i = 100; n_h = 100; n_s = 100; }
}
"""

SMALL = """
model "small" {
    bits { w = 4; i = 4; a = 4; b = 4; }
    quant = uniform;
    layer "fc" dense { n_i = 4; n_n = 3; }
    layer "cell" lstm { n_i = 2; n_h = 3; n_s = 2; }
    layer "res" esn { N_r = 4; n_i = 2; n_o = 1; n_s = 2; s_p = 0.5; quant = apot(2); }
}
"""

PLAN = """
sweep "dense" {
    metric = rm;
    layer "base" dense { n_i = 100; n_n = 100; bits { w = 8; i = 8; a = 8; b = 8; } quant = uniform; }
    axis "n_i" { start = 100; stop = 1500; step = 700; }
    axis "n_n" { start = 100; stop = 1500; step = 700; }
}
"""


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, text in {"fixture.nn": FIXTURE, "small.nn": SMALL, "plan.nn": PLAN}.items():
        paths[name] = tmp_path / name
        paths[name].write_text(text)
    return paths


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_fixture(files, capsys):
    code, out, err = run(capsys, "analyze", files["fixture.nn"], "--format", "json")
    assert code == 0
    report = json.loads(out)
    rm = {layer["name"]: layer["rm"] for layer in report["layers"]}
    assert rm == {"rnn": 2_000_000, "lstm": 8_030_000, "gru": 6_030_000}
    assert report["totals"]["rm"] == 16_060_000


def test_analyze_text_rendering(files, capsys):
    code, out, _ = run(capsys, "analyze", files["fixture.nn"], "--format", "text")
    assert code == 0
    assert "8,030,000" in out
    assert "1.4725e+09" in out
    assert "\033[" not in out


def test_analyze_csv(files, capsys):
    _, out, _ = run(capsys, "analyze", files["fixture.nn"], "--format", "csv")
    lines = out.splitlines()
    assert lines[0] == "layer,kind,rm,bop,nabs"
    assert lines[2].startswith("lstm,lstm,8030000,")
    assert lines[-1].startswith("total,,16060000,")


def test_exact_bop_matches_oracle(tmp_path, capsys):
    path = tmp_path / "d.nn"
    path.write_text(SMALL.replace('    layer "cell"', '#').replace('    layer "res"', '#'))
    _, out, _ = run(capsys, "analyze", path, "--bop-mode", "exact", "--format", "json")
    bop = json.loads(out)["layers"][0]["bop"]
    _, out, _ = run(capsys, "validate", path, "--format", "json")
    check = json.loads(out)["layers"][0]["checks"][1]
    assert check["metric"] == "bop" and check["oracle"] == bop


def test_output_file(files, tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "analyze", files["fixture.nn"], "-o", target)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["model"] == "recurrent"


@pytest.mark.parametrize("text, code, category", [
    (FIXTURE.replace("n_i = 100; n_h = 100; n_s = 100; }\n    layer \"lstm\"", "n_i = 1 }\n    layer \"lstm\""),
     3, "syntax error"),
    ('model "m" { bits { w=8; i=8; a=8; b=8; } quant = pot; layer "c" conv1d '
     '{ n_i = 1; n_f = 1; n_k = 100; n_s = 50; } }', 4, "invalid"),
    ('{"model": {"name": "m", "layers": [', 3, "syntax error"),
])
def test_error_exit_codes(tmp_path, capsys, text, code, category):
    path = tmp_path / ("m.json" if text.startswith("{") else "m.nn")
    path.write_text(text)
    got, out, err = run(capsys, "analyze", path)
    assert got == code
    assert out == ""
    assert len(err.strip().splitlines()) == 1
    assert err.startswith(f"nn-costmodel: {category}: ")


def test_layer_attributed_validation_error(tmp_path, capsys):
    path = tmp_path / "m.nn"
    path.write_text('model "m" { bits { w=8; i=8; a=8; b=8; } quant = pot; layer "short" conv1d '
                    '{ n_i = 1; n_f = 1; n_k = 100; n_s = 50; } }')
    code, _, err = run(capsys, "analyze", path)
    assert code == 4
    assert "layer 'short'" in err and "output size < 1" in err


def test_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", tmp_path / "absent.nn")
    assert code == 2
    assert err.startswith("nn-costmodel: file not found:")


def test_usage_error_exits_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["analyze"])
    assert info.value.code == 2


def test_validate(files, capsys):
    code, out, _ = run(capsys, "validate", files["small.nn"], "--seed", "7", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["ok"] and data["seed"] == 7
    for layer in data["layers"]:
        rm = next(c for c in layer["checks"] if c["metric"] == "rm")
        assert rm["delta"] == 0


def test_validate_size_guard(files, capsys):
    code, _, err = run(capsys, "validate", files["fixture.nn"])
    assert code == 5
    assert "oracle" in err


def test_sweep_csv_and_json(files, capsys):
    code, out, _ = run(capsys, "sweep", files["plan.nn"], "--format", "csv")
    assert code == 0
    assert out.splitlines()[-1] == "1500,1500,rm,2250000"
    _, out, _ = run(capsys, "sweep", files["plan.nn"], "--format", "json")
    assert "timestamp" in json.loads(out)["metadata"]
    _, out, _ = run(capsys, "sweep", files["plan.nn"], "--format", "json", "--no-timestamp")
    assert "timestamp" not in json.loads(out)["metadata"]


def test_compare_bitwidth(capsys):
    code, out, _ = run(capsys, "compare", "--axis", "bw", "--from", "8", "--to", "4", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["layers"][0]["reduction_percent"] == 40.0
    assert all(35 <= layer["reduction_percent"] <= 45 for layer in data["layers"])
    assert "fixture" in data


def test_compare_bad_range(capsys):
    code, _, err = run(capsys, "compare", "--axis", "bw", "--from", "4", "--to", "8")
    assert code == 4
    assert "hi > lo" in err


def test_compare_schemes(files, capsys):
    code, out, _ = run(capsys, "compare", files["fixture.nn"], "--schemes", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["schemes"][0] == "pot" and data["x_w"][-1] == 7
    assert [layer["name"] for layer in data["layers"]] == ["rnn", "lstm", "gru"]


def test_gates(files, tmp_path, capsys):
    code, out, _ = run(capsys, "gates", files["small.nn"], "--era", "lut4", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["era"] == "lut4"
    assert data["total"]["gates"]["total_gates"] == sum(
        layer["gates"]["total_gates"] for layer in data["layers"])
    _, out, _ = run(capsys, "gates", files["small.nn"], "--pipeline-depth", "2", "--format", "json")
    assert json.loads(out)["total"]["gates"]["flip_flops"] > 0
    table = tmp_path / "t.clb"
    table.write_text('clb_table "t" { era = mine; total_min = 10; total_max = 20; typical = 15; }')
    _, out, _ = run(capsys, "gates", files["small.nn"], "--table", table, "--format", "json")
    assert json.loads(out)["era"] == "mine"


def test_number_formatting():
    assert fmt_count(1_890_000) == "1,890,000"
    assert fmt_count(10 ** 9) == "1,000,000,000"
    assert fmt_count(1_472_480_000) == "1.4725e+09"
    assert fmt_count(None) == "n/a"


def test_no_color_env(monkeypatch):
    class Tty:
        def isatty(self):
            return True

    assert styling_enabled(Tty())
    monkeypatch.setenv("NN_COSTMODEL_NO_COLOR", "1")
    assert not styling_enabled(Tty())


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "nn_costmodel", "analyze", str(files["fixture.nn"])],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["model"] == "recurrent"  # piped output defaults to JSON
