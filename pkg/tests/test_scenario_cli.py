"""Scenario loading, validation, and the command line surface."""

import json
from pathlib import Path

import numpy as np
import pytest

from annihilate.cli import main
from annihilate.scenario import ScenarioError, load_scenario, scenario_from_dict

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

def test_load_minimal_two_particle_file():
    sc = load_scenario(SCENARIOS / "two_particles.toml")
    assert sc.name == "two_particles"
    state = sc.build_state()
    assert state.n == 2 and state.b.tolist() == [1, 1]
    assert sc.pair.V.family == "log" and sc.pair.W.family == "zero"


def test_coincident_opposite_pair_rejected(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text(
        'name = "bad"\n[kernels]\nV = "log"\nW = "reglog(0.1)"\n'
        "[initial]\npositions = [0.0, 0.0]\ncharges = [1, -1]\n[sim]\nT = 1.0\n")
    with pytest.raises(ScenarioError, match="separation"):
        load_scenario(bad)


def test_unsorted_positions_rejected(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text(
        'name = "bad"\n[kernels]\nV = "log"\nW = "zero"\n'
        "[initial]\npositions = [1.0, 0.0]\ncharges = [1, 1]\n[sim]\nT = 1.0\n")
    with pytest.raises(ScenarioError, match="strictly increasing"):
        load_scenario(bad)


def test_parse_error_reports_location(tmp_path):
    bad = tmp_path / "broken.toml"
    bad.write_text("name = [unclosed\n")
    with pytest.raises(ScenarioError, match="TOML parse error"):
        load_scenario(bad)


def test_singular_kernel_rejected_in_w_slot(tmp_path):
    bad = tmp_path / "roles.toml"
    bad.write_text(
        'name = "roles"\n[kernels]\nV = "reglog(0.1)"\nW = "zero"\n'
        "[initial]\npositions = [0.0, 1.0]\ncharges = [1, 1]\n[sim]\nT = 1.0\n")
    with pytest.raises(ScenarioError, match="diverge"):
        load_scenario(bad)
    rc = main(["validate", "--scenario", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 1


def test_block_quantile_expansion():
    sc = scenario_from_dict(dict(
        kernels={"V": "log", "W": "zero"},
        initial={"blocks": [dict(sign=1, mass=1.0, profile="uniform",
                                 support=[2.0, 6.0])]},
        sim=dict(T=1.0)))
    st = sc.build_state(4)
    # uniform quantiles at (i - 1/2)/4 of [2, 6]
    assert st.x == pytest.approx([2.5, 3.5, 4.5, 5.5], abs=1e-12)
    # cosine block: median sits at the center of the support
    sc2 = scenario_from_dict(dict(
        kernels={"V": "log", "W": "zero"},
        initial={"blocks": [dict(sign=1, mass=1.0, profile="cosine",
                                 support=[-1.0, 3.0])]},
        sim=dict(T=1.0)))
    st2 = sc2.build_state(5)
    assert st2.x[2] == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(st2.x) > 0)


def test_two_block_expansion_is_block_ordered():
    sc = load_scenario(SCENARIOS / "two_block_annihilation.toml")
    st = sc.build_state(20)
    assert st.n == 20
    assert st.b.tolist() == [1] * 10 + [-1] * 10
    assert np.all(np.diff(st.x) > 0)


def test_incompatible_n_rejected():
    sc = scenario_from_dict(dict(
        kernels={"V": "log", "W": "reglog(0.2)"},
        initial={"blocks": [dict(sign=1, mass=0.5, profile="uniform", support=[-2, -1]),
                            dict(sign=-1, mass=0.5, profile="uniform", support=[1, 2])]},
        sim=dict(T=1.0)))
    with pytest.raises(ScenarioError, match="not a positive integer"):
        sc.build_state(7)


def test_overlapping_blocks_rejected():
    with pytest.raises(ScenarioError, match="overlap"):
        scenario_from_dict(dict(
            kernels={"V": "log", "W": "reglog(0.2)"},
            initial={"blocks": [dict(sign=1, mass=0.5, profile="uniform", support=[-1, 0.5]),
                                dict(sign=-1, mass=0.5, profile="uniform", support=[0, 1])]},
            sim=dict(T=1.0)))


def test_continuum_initial_matches_block_masses():
    sc = load_scenario(SCENARIOS / "two_block_annihilation.toml")
    dens = sc.continuum_initial()
    assert dens.mass("+") == pytest.approx(0.5, abs=1e-13)
    assert dens.mass("-") == pytest.approx(0.5, abs=1e-13)


# ---------------------------------------------------------------------------
# CLI commands
# ---------------------------------------------------------------------------

def test_cli_run_artifacts_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        rc = main(["run", "--scenario", str(SCENARIOS / "quartet.toml"),
                   "--out", str(out), "--no-plots"])
        assert rc == 0
    for name in ("trajectory.csv", "events.json", "measures.csv", "manifest.json"):
        assert (out1 / name).exists()
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    header = (out1 / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,x_1") and header.endswith("E_n,M2,M4")
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["tool"] == "annihilate" and manifest["command"] == "run"
    events = json.loads((out1 / "events.json").read_text())
    assert len(events) == 2 and all("t_k" in e and "pairs" in e for e in events)


def test_cli_run_renders_figures(tmp_path):
    out = tmp_path / "figs"
    rc = main(["run", "--scenario", str(SCENARIOS / "two_particles.toml"),
               "--out", str(out), "--plots"])
    assert rc == 0
    assert (out / "figures" / "trajectory.png").stat().st_size > 0
    assert (out / "figures" / "energy.png").stat().st_size > 0


def test_cli_continuum(tmp_path):
    out = tmp_path / "cont"
    rc = main(["continuum", "--scenario", str(SCENARIOS / "two_block_annihilation.toml"),
               "--out", str(out), "--no-plots"])
    assert rc == 0
    lines = (out / "continuum.csv").read_text().splitlines()
    assert lines[0] == "t,x,rho_plus,rho_minus,kappa"
    assert len(lines) > 1000
    # rerun is byte-identical
    out2 = tmp_path / "cont2"
    assert main(["continuum", "--scenario", str(SCENARIOS / "two_block_annihilation.toml"),
                 "--out", str(out2), "--no-plots"]) == 0
    assert (out / "continuum.csv").read_bytes() == (out2 / "continuum.csv").read_bytes()


def test_cli_continuum_single_species(tmp_path):
    out = tmp_path / "gas"
    rc = main(["continuum", "--scenario", str(SCENARIOS / "log_gas.toml"),
               "--out", str(out), "--no-plots"])
    assert rc == 0
    assert (out / "continuum.csv").exists()


def test_cli_converge_continuum_reference(tmp_path):
    scenario = tmp_path / "ladder.toml"
    scenario.write_text(
        'name = "ladder_fv"\nn_list = [8, 16]\n'
        '[kernels]\nV = "log"\nW = "zero"\n'
        "[initial]\n[[initial.blocks]]\nsign = 1\nmass = 1.0\n"
        'profile = "uniform"\nsupport = [-1.0, 1.0]\n'
        "[sim]\nT = 0.25\ntol_step = 1e-7\nrecord_every = 100\n"
        "[continuum]\nx_min = -3.0\nx_max = 3.0\ncells = 128\ncfl = 0.4\n")
    out = tmp_path / "fv"
    rc = main(["converge", "--scenario", str(scenario), "--out", str(out),
               "--no-plots", "--reference", "continuum"])
    assert rc == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert len(lines) == 3           # header + one row per n
    assert all(line.split(",")[1] == "continuum" for line in lines[1:])


def test_cli_converge_rows_and_jobs_determinism(tmp_path):
    scenario = tmp_path / "ladder.toml"
    scenario.write_text(
        'name = "ladder"\nn_list = [8, 16, 32, 64]\n'
        '[kernels]\nV = "log"\nW = "zero"\n'
        "[initial]\n[[initial.blocks]]\nsign = 1\nmass = 1.0\n"
        'profile = "uniform"\nsupport = [-1.0, 1.0]\n'
        "[sim]\nT = 0.25\ntol_step = 1e-7\nrecord_every = 100\n")
    out1, out2 = tmp_path / "j1", tmp_path / "j2"
    rc = main(["converge", "--scenario", str(scenario), "--out", str(out1),
               "--no-plots", "--jobs", "1"])
    assert rc == 0
    rc = main(["converge", "--scenario", str(scenario), "--out", str(out2),
               "--no-plots", "--jobs", "2"])
    assert rc == 0
    b1 = (out1 / "convergence.csv").read_bytes()
    assert b1 == (out2 / "convergence.csv").read_bytes()
    lines = b1.decode().splitlines()
    # n_list of length 4: header + one row per consecutive pair = 4 lines
    assert len(lines) == 4
    assert lines[0] == "n,reference,sup_distance,ratio"
    dist_lines = (out1 / "distances.csv").read_text().splitlines()
    assert dist_lines[0] == "n,reference,t,distance"
    assert len(dist_lines) == 1 + 3 * 16     # 3 ladder pairs x 16 checkpoints
    assert (out1 / "distances.csv").read_bytes() == (out2 / "distances.csv").read_bytes()


def test_cli_check(tmp_path):
    out = tmp_path / "check"
    rc = main(["check", "--scenario", str(SCENARIOS / "quartet.toml"),
               "--out", str(out), "--no-plots"])
    assert rc == 0
    payload = json.loads((out / "checks.json").read_text())
    names = {r["name"] for r in payload}
    assert {"energy_monotone", "energy_dissipation", "moment_drift_m2",
            "moment_drift_m4", "metric_bound_chain", "block_count_monotone",
            "weak_form_residual"} <= names
    controls = [r for r in payload if r["expected_fail"]]
    assert controls and all(not r["passed"] for r in controls)
    regular = [r for r in payload if not r["expected_fail"]]
    assert all(r["passed"] for r in regular)


def test_cli_validate_good_and_bad(tmp_path, capsys):
    rc = main(["validate", "--scenario", str(SCENARIOS / "attracting_pair.toml"),
               "--out", str(tmp_path / "v"), "--no-plots"])
    assert rc == 0
    payload = json.loads((tmp_path / "v" / "validation.json").read_text())
    assert payload["kernel_assumptions"]["passed"]

    bad = tmp_path / "bad.toml"
    bad.write_text(
        'name = "bad"\n[kernels]\nV = "log"\nW = "reglog(0.1)"\n'
        "[initial]\npositions = [0.0, 0.0]\ncharges = [1, -1]\n[sim]\nT = 1.0\n")
    rc = main(["validate", "--scenario", str(bad), "--out", str(tmp_path / "v2")])
    assert rc == 1


def test_cli_missing_scenario(tmp_path):
    rc = main(["run", "--scenario", str(tmp_path / "nope.toml"),
               "--out", str(tmp_path / "x"), "--no-plots"])
    assert rc == 2


def test_cli_seed_override(tmp_path):
    out = tmp_path / "seeded"
    rc = main(["check", "--scenario", str(SCENARIOS / "quartet.toml"),
               "--out", str(out), "--no-plots", "--seed", "99"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 99


def test_manifest_scenario_roundtrips_through_loader(tmp_path):
    out = tmp_path / "rt"
    rc = main(["run", "--scenario", str(SCENARIOS / "two_block_annihilation.toml"),
               "--out", str(out), "--no-plots"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    sc = scenario_from_dict(manifest["scenario"])
    assert sc.name == "two_block_annihilation"
    ref = load_scenario(SCENARIOS / "two_block_annihilation.toml")
    assert np.array_equal(sc.build_state(20).x, ref.build_state(20).x)


def test_log_env_smoke(tmp_path, monkeypatch):
    monkeypatch.setenv("ANNIHILATE_LOG", "DEBUG")
    rc = main(["validate", "--scenario", str(SCENARIOS / "two_particles.toml"),
               "--out", str(tmp_path / "log"), "--no-plots"])
    assert rc == 0
