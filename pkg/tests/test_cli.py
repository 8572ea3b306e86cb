import json
import math
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from qcirc import cli
from qcirc.errors import InputError
from qcirc.goldens import fixture_path

DATA = Path(__file__).parent / "data"


def fx(name):
    return str(fixture_path(name))


def run(*args):
    r = CliRunner().invoke(cli.cli, [str(a) for a in args], catch_exceptions=False)
    return r


def _summary(text):
    out = {}
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(" ")
            out[k] = v
    return out


def _csv(text):
    rows = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = rows[0].split(",")
    return header, [r.split(",") for r in rows[1:]]


def test_analyze_fig1():
    r = run("analyze", fx("fig1"))
    assert r.exit_code == 0
    doc = json.loads(r.output)
    assert len(doc["modes"]) == 2
    g = doc["couplings"]
    assert g and all("g" in c for c in g)


def test_analyze_lc_frequency():
    doc = json.loads(run("analyze", fx("lc")).output)
    # 100 fF and 10 nH resonate at 1/(2 pi sqrt(LC)) = 5.033 GHz
    assert doc["modes"][0]["omega"] == pytest.approx(1 / (2 * math.pi * math.sqrt(1e-13 * 1e-8)) / 1e9, rel=1e-3)


def test_bad_netlist_exit_code_and_position():
    r = CliRunner().invoke(cli.cli, ["analyze", fx("bad")])
    assert r.exit_code == 2
    assert "NetlistSyntaxError" in r.output and "line" in r.output


def test_missing_file_is_input_error():
    r = CliRunner().invoke(cli.cli, ["analyze", "nope.json"])
    assert r.exit_code == 2


def test_graph_matrices_json_and_csv():
    doc = json.loads(run("--tree", "1,2", "graph", fx("fig20")).output)
    FC = np.array(doc["fcut"]["matrix"]) if isinstance(doc["fcut"], dict) else np.array(doc["fcut"])
    FL = np.array(doc["floop"]["matrix"]) if isinstance(doc["floop"], dict) else np.array(doc["floop"])
    assert not (FL @ FC.T).any()
    r = run("--format", "csv", "graph", fx("fig20"))
    assert "# fcut" in r.output and "# floop" in r.output


def test_spectrum_cpb_sweep():
    r = run("--basis", "charge", "--cutoff", "41", "spectrum", fx("cpb"), "--sweep", "ng=0:1:11", "--levels", "2")
    assert r.exit_code == 0, r.output
    header, rows = _csv(r.output)
    assert header[:3] == ["ng", "E0", "E1"]
    vals = {float(x[0]): float(x[2]) - float(x[1]) for x in rows}
    assert vals[0.5] == pytest.approx(1.0, rel=0.15)


def test_spectrum_fluxonium_is_flux_periodic():
    r = run("--cutoff", "40", "spectrum", fx("fluxonium"), "--sweep", "flux=0:2pi:3", "--levels", "3")
    assert r.exit_code == 0, r.output
    _, rows = _csv(r.output)
    E = np.array([[float(v) for v in row[1:4]] for row in rows])
    assert np.allclose(E[0], E[2], atol=1e-6)


def test_spectrum_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["--basis", "charge", "--cutoff", "21"]
    assert run(*base, "spectrum", fx("cpb"), "--sweep", "ng=0:1:9", "--out", a).exit_code == 0
    assert run(*base, "--jobs", "2", "spectrum", fx("cpb"), "--sweep", "ng=0:1:9", "--out", b).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["command"] == "spectrum"
    assert [len(v) for v in man["inputs"].values()] == [64]


def test_analyze_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("analyze", fx("fig7b"), "--out", a)
    run("analyze", fx("fig7b"), "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_truncate_pauli_output():
    r = run("truncate", fx("transmon"), "--levels", "2", "--level-basis", "eigen")
    assert r.exit_code == 0, r.output
    doc = json.loads(r.output)
    assert "Z" in json.dumps(doc)


def test_simulate_x_gate_two_level():
    r = run("simulate", fx("fig12"), DATA / "xpulse.json", "--target-gate", "X")
    assert r.exit_code == 0, r.output
    assert float(_summary(r.output)["fidelity"]) > 1 - 1e-6


def test_simulate_iswap():
    r = run("simulate", fx("fig7a"), DATA / "iswap.json", "--experiment", "swap")
    assert r.exit_code == 0, r.output
    s = _summary(r.output)
    assert s["gate"] == "ISWAP" and float(s["fidelity"]) > 1 - 1e-6


def test_simulate_t1_and_ramsey():
    s = _summary(run("simulate", fx("transmon"), DATA / "xpulse.json", DATA / "t1_noise.json", "--experiment", "t1").output)
    assert float(s["Gamma1_fit"]) == pytest.approx(float(s["Gamma1_input"]), rel=5e-3)
    s = _summary(run("simulate", fx("transmon"), DATA / "xpulse.json", DATA / "ramsey_noise.json", "--experiment", "ramsey", "--detuning", "0.5").output)
    assert float(s["delta_fit"]) == pytest.approx(0.5, rel=1e-2)
    assert float(s["Gamma2_fit"]) == pytest.approx(float(s["Gamma2_input"]), rel=1e-2)


def test_fixtures_command():
    r = CliRunner().invoke(cli.cli, ["fixtures"])
    assert r.exit_code == 0
    last = r.output.strip().splitlines()[-1]
    counts = dict(zip(last.split()[1::2], map(int, last.split()[2::2])))
    assert counts["FAIL"] == 0 and counts["PASS"] > 0
    assert "fig20" in CliRunner().invoke(cli.cli, ["fixtures", "--list"]).output


@pytest.mark.parametrize(
    "text, value",
    [("1", 1.0), ("-2.5", -2.5), ("pi", math.pi), ("2pi", 2 * math.pi), ("-pi/2", -math.pi / 2), ("π/4", math.pi / 4), ("1e-3", 1e-3)],
)
def test_parse_value(text, value):
    assert cli.parse_value(text) == pytest.approx(value)


def test_parse_sweep():
    name, grid = cli.parse_sweep("flux=0:pi:5")
    assert name == "flux" and np.allclose(grid, np.linspace(0, math.pi, 5))
    with pytest.raises(InputError):
        cli.parse_sweep("flux")


def test_non_converged_points_exit_one():
    r = CliRunner().invoke(cli.cli, ["--cutoff", "4", "spectrum", fx("fluxonium"), "--max-dim", "8", "--sweep", "flux=0:pi:2"])
    assert r.exit_code == 1
    assert "NonConvergedPoint" in r.output
    header, rows = _csv(r.output.split("warning")[0])
    k = header.index("converged")
    assert [row[k] for row in rows] == ["false", "false"]
