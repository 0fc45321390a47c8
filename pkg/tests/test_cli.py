import json
import math

import pytest

from artifact.cli import EXIT_FAIL, EXIT_OK, EXIT_REJECT, UsageError, main, parse_config_text


def _run(tmp_path, text, *extra, name="run.cfg", out="out"):
    cfg = tmp_path / name
    cfg.write_text(text)
    return main(["--config", str(cfg), "--out", str(tmp_path / out), *extra])


DISK_Q0 = """\
scenario = disk
r = 2
q = [0]
spacing = 0.05
exhaustion_levels = 2
"""


def test_plane_q_zero_rejected(tmp_path, capsys):
    code = _run(tmp_path, "scenario = plane\nr = 3\nq = [0]\n")
    assert code == EXIT_REJECT
    err = capsys.readouterr().err
    assert "Toda(q, g) is empty" in err


def test_disk_q_zero(tmp_path):
    assert _run(tmp_path, DISK_Q0) == EXIT_OK
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["base_deviation"] <= 2e-3
    man = json.loads((out / "manifest.json").read_text())
    assert man["checks"]["converged"] and man["checks"]["residual_ok"]
    assert man["config"]["solver"]["spacing"] == 0.05
    head = (out / "solution.csv").read_text().splitlines()[0]
    assert head == "i,j,x,y,w_1"


def test_manifests_deterministic(tmp_path):
    assert _run(tmp_path, DISK_Q0, "--seed", "3", out="a") == EXIT_OK
    assert _run(tmp_path, DISK_Q0, "--seed", "3", out="b") == EXIT_OK
    for f in ("manifest.json", "report.json", "solution.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("text", [
    DISK_Q0,
    "scenario = disk\nr = 3\nq = [0, 1]\nspacing = 0.05\nexhaustion_levels = 2\nemit_plot_data = true\n",
    "scenario = finite_zeros\nr = 2\nq = [0, 1]\nspacing = 0.05\n",
    "scenario = plane\nr = 3\nq = [1]\nspacing = 0.1\ntruncation_radius = 4.0\n",
], ids=["disk_q0", "disk_z", "finite_zeros", "plane"])
def test_emitted_solutions_validate(tmp_path, text):
    assert _run(tmp_path, text) == EXIT_OK
    sol = tmp_path / "out" / "solution.csv"
    assert main(["--validate", str(sol), "--out", str(tmp_path / "val")]) == EXIT_OK
    rep = json.loads((tmp_path / "val" / "validation.json").read_text())
    assert rep["residual_ok"]


def test_plot_data_columns(tmp_path):
    text = "scenario = disk\nr = 3\nq = [0, 1]\nspacing = 0.05\nexhaustion_levels = 2\nemit_plot_data = true\n"
    assert _run(tmp_path, text) == EXIT_OK
    head = (tmp_path / "out" / "plot_data.csv").read_text().splitlines()[0]
    assert head == "i,j,x,y,w_1,commutator,pullback_curvature"


def test_validate_only_via_config(tmp_path):
    assert _run(tmp_path, DISK_Q0) == EXIT_OK
    sol = tmp_path / "out" / "solution.csv"
    code = _run(tmp_path, f"scenario = validate_only\nsolution = {sol}\n", name="v.cfg", out="val")
    assert code == EXIT_OK
    assert not (tmp_path / "val" / "solution.csv").exists()


def test_validate_detects_tampering(tmp_path):
    assert _run(tmp_path, DISK_Q0) == EXIT_OK
    sol = tmp_path / "out" / "solution.csv"
    lines = sol.read_text().splitlines()
    mid = len(lines) // 2
    cells = lines[mid].split(",")
    cells[-1] = repr(float(cells[-1]) + 0.5)
    lines[mid] = ",".join(cells)
    sol.write_text("\n".join(lines) + "\n")
    assert main(["--validate", str(sol), "--out", str(tmp_path / "val")]) == EXIT_FAIL


def test_radial_scenario(tmp_path):
    text = "scenario = radial\nr = 3\nq = [0, 1]\nrho_max = 0.9\n"
    assert _run(tmp_path, text) == EXIT_OK
    rows = (tmp_path / "out" / "profile.csv").read_text().splitlines()
    assert rows[0] == "rho,w_1"
    assert float(rows[1].split(",")[0]) == 0.0


def test_radial_needs_monomial(tmp_path):
    assert _run(tmp_path, "scenario = radial\nr = 3\nq = [1, 1]\n") == EXIT_REJECT


@pytest.mark.parametrize("text, fragment", [
    ("scenario = disk\nbogus = 1\n", "2: key 'bogus': unknown key"),
    ("r = 2\nr = 3\n", "duplicate key 'r' (first on line 1)"),
    ("scenario = disk\njust words\n", "2: expected key = value"),
    ("scenario = torus\n", "key 'scenario'"),
    ("r = 2.5\n", "needs an integer"),
    ("spacing = -1\n", "spacing must be positive"),
])
def test_config_errors(text, fragment):
    with pytest.raises(UsageError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        parse_config_text(text, "run.cfg")


def test_config_comments_and_json_values():
    cfg = parse_config_text("# header\nscenario = plane  # trailing\nq = [1, [0, 2]]\nr = 4\n"
                            "metric = euclidean\nouter_tol = 1e-8\n")
    assert cfg.scenario == "plane" and cfg.metric == "euclidean"
    assert cfg.differential().coeffs == (1, 2j)
    assert math.isclose(cfg.solver.outer_tol, 1e-8)


def test_bad_arguments(tmp_path, capsys):
    assert main([]) == EXIT_REJECT
    assert main(["--validate", str(tmp_path / "missing.csv")]) == EXIT_REJECT
    assert main(["--config", str(tmp_path / "missing.cfg")]) == EXIT_REJECT
    assert main(["--bogus"]) == EXIT_REJECT
    assert _run(tmp_path, DISK_Q0, "--threads", "0") == EXIT_REJECT
    bad = tmp_path / "junk" / "solution.csv"
    bad.parent.mkdir()
    bad.write_text("i,j\n1,2\n")
    (bad.parent / "manifest.json").write_text("{}")
    assert main(["--validate", str(bad)]) == EXIT_REJECT
    capsys.readouterr()


def test_disk_rejects_euclidean(tmp_path):
    assert _run(tmp_path, "scenario = disk\nmetric = euclidean\nq = [1]\n") == EXIT_REJECT
