from importlib import resources

import pytest

from sqkdsim import cli
from sqkdsim.report import Expectation, evaluate_expectations
from sqkdsim.scenario import (
    ScenarioError,
    describe_attack,
    list_attacks,
    load_scenario,
)

SCENARIOS = resources.files("sqkdsim") / "scenarios"


def scenario_path(name: str) -> str:
    return str(SCENARIOS / name)


def write(tmp_path, text, name="case.scn"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestScenarioParsing:
    def test_bundled_scenario_loads(self):
        sc = load_scenario(scenario_path("tagging-reflect.scn"))
        assert sc.name == "tagging-reflect"
        assert sc.config.rounds == 100_000
        assert sc.attack_name == "tagging"
        assert any(e.metric == "eve_fidelity" for e in sc.expectations)

    def test_all_bundled_scenarios_parse(self):
        names = [p.name for p in SCENARIOS.iterdir() if p.name.endswith(".scn")]
        assert len(names) == 11
        for name in names:
            sc = load_scenario(scenario_path(name))
            sc.build_attack()

    def test_unknown_section(self, tmp_path):
        path = write(tmp_path, "[prtcl]\nrounds = 10\n")
        with pytest.raises(ScenarioError, match="unknown section"):
            load_scenario(path)

    def test_unknown_key(self, tmp_path):
        path = write(tmp_path, "[protocol]\nround_count = 10\n")
        with pytest.raises(ScenarioError, match="unknown key"):
            load_scenario(path)

    def test_bad_expectation_syntax(self, tmp_path):
        path = write(tmp_path, "[expectations]\nctrl_errors = 0 within 3\n")
        with pytest.raises(ScenarioError, match="abs|sigma"):
            load_scenario(path)

    def test_bad_number(self, tmp_path):
        path = write(tmp_path, "[protocol]\nrounds = many\n")
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_invalid_config_caught(self, tmp_path):
        path = write(tmp_path, "[protocol]\ntransmission = 1.5\n")
        with pytest.raises(ScenarioError, match="transmission"):
            load_scenario(path)

    def test_counters_flag_switches_detector_model(self, tmp_path):
        path = write(tmp_path, "[strengthening]\ncounters = true\n")
        assert load_scenario(path).config.detector_model == "counter"

    def test_missing_file(self):
        with pytest.raises(ScenarioError):
            load_scenario("/nonexistent/nowhere.scn")


class TestAttackRegistry:
    def test_list(self):
        assert list_attacks() == ["identity", "pns", "usd-b92", "tagging",
                                  "constrained-random", "general"]

    def test_describe_known(self):
        text = describe_attack("pns")
        assert "two-photon" in text

    def test_describe_unknown_suggests(self):
        with pytest.raises(ScenarioError, match="did you mean"):
            describe_attack("taging")

    def test_general_requires_files(self, tmp_path):
        path = write(tmp_path, "[attack]\nname = general\n")
        sc = load_scenario(path)
        with pytest.raises(ScenarioError, match="outbound_file"):
            sc.build_attack()


class TestExpectations:
    def test_unknown_metric_raises(self):
        from sqkdsim.protocol import ProtocolConfig, run_protocol
        from sqkdsim.attacks import identity_attack
        rep = run_protocol(ProtocolConfig(rounds=100, n_max=2),
                           identity_attack(), backend="numpy")
        with pytest.raises(KeyError, match="unknown metric"):
            evaluate_expectations(rep, [Expectation("nope", 0, "abs", 0)])

    def test_sigma_band(self):
        from sqkdsim.protocol import ProtocolConfig, run_protocol
        from sqkdsim.attacks import identity_attack
        rep = run_protocol(ProtocolConfig(rounds=100, n_max=2),
                           identity_attack(), backend="numpy")
        rows = evaluate_expectations(
            rep, [Expectation("sifted_agreement", 1.0, "sigma", 0.01)])
        assert rows[0].passed and rows[0].deviation_sigmas == 0.0


class TestCli:
    def test_run_writes_reports_and_passes(self, tmp_path):
        code = cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                         "--out-dir", str(tmp_path), "--backend", "numpy"])
        assert code == 0
        report = tmp_path / "classical-alice-ideal.report.txt"
        assert report.exists()
        assert (tmp_path / "classical-alice-ideal.summary.txt").exists()
        text = report.read_text()
        assert "[metrics]" in text and "[rounds]" in text

    def test_reports_are_byte_identical_across_runs_and_jobs(self, tmp_path):
        blobs = []
        for sub, jobs in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / sub
            code = cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                             "--out-dir", str(out), "--jobs", jobs,
                             "--backend", "numpy"])
            assert code == 0
            blobs.append((out / "classical-alice-ideal.report.txt").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]

    def test_reports_identical_across_backends(self, tmp_path):
        from sqkdsim.kernels import NUMBA_AVAILABLE
        if not NUMBA_AVAILABLE:
            pytest.skip("numba not importable")
        blobs = []
        for sub, backend in (("nb", "numba"), ("np", "numpy")):
            out = tmp_path / sub
            assert cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                             "--out-dir", str(out), "--backend", backend]) == 0
            blobs.append((out / "classical-alice-ideal.report.txt").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_override_changes_rounds(self, tmp_path):
        cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                  "--out-dir", str(tmp_path / "x"), "--backend", "numpy"])
        cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                  "--seed", "4242", "--out-dir", str(tmp_path / "y"),
                  "--backend", "numpy"])
        a = (tmp_path / "x" / "classical-alice-ideal.report.txt").read_bytes()
        b = (tmp_path / "y" / "classical-alice-ideal.report.txt").read_bytes()
        assert a != b

    def test_rounds_override(self, tmp_path):
        code = cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                         "--rounds", "500", "--out-dir", str(tmp_path),
                         "--backend", "numpy"])
        assert code == 0
        text = (tmp_path / "classical-alice-ideal.report.txt").read_text()
        assert "rounds = 500" in text

    def test_csv_format(self, tmp_path):
        code = cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                         "--format", "csv", "--out-dir", str(tmp_path),
                         "--backend", "numpy"])
        assert code == 0
        assert (tmp_path / "classical-alice-ideal.metrics.csv").exists()
        assert (tmp_path / "classical-alice-ideal.comparison.csv").exists()
        assert (tmp_path / "classical-alice-ideal.rounds.csv").exists()

    def test_round_log_never(self, tmp_path):
        cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                  "--round-log", "never", "--out-dir", str(tmp_path),
                  "--backend", "numpy"])
        text = (tmp_path / "classical-alice-ideal.report.txt").read_text()
        assert "[rounds]" not in text

    def test_failed_expectation_exits_one(self, tmp_path):
        path = write(tmp_path, "\n".join([
            "[protocol]", "rounds = 200", "n_max = 2",
            "[attack]", "name = identity",
            "[expectations]", "losses = 100 abs 0", ""]))
        code = cli.main(["run", path, "--out-dir", str(tmp_path),
                         "--backend", "numpy"])
        assert code == 1

    def test_parse_error_exits_two(self, tmp_path):
        path = write(tmp_path, "[protocol]\nrounds = banana\n")
        assert cli.main(["run", path, "--out-dir", str(tmp_path)]) == 2

    def test_unknown_attack_exits_two(self, tmp_path):
        path = write(tmp_path, "[attack]\nname = warp-drive\n")
        assert cli.main(["run", path, "--out-dir", str(tmp_path)]) == 2

    def test_unknown_expected_metric_exits_two(self, tmp_path):
        path = write(tmp_path, "\n".join([
            "[protocol]", "rounds = 100", "n_max = 2",
            "[expectations]", "warp_factor = 9 abs 0", ""]))
        assert cli.main(["run", path, "--out-dir", str(tmp_path),
                         "--backend", "numpy"]) == 2

    def test_out_dir_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env-out"))
        code = cli.main(["run", scenario_path("classical-alice-ideal.scn"),
                         "--rounds", "200", "--backend", "numpy"])
        assert code == 0
        assert (tmp_path / "env-out" / "classical-alice-ideal.report.txt").exists()

    def test_attacks_list_and_describe(self, capsys):
        assert cli.main(["attacks", "list"]) == 0
        out = capsys.readouterr().out
        assert "tagging" in out and "constrained-random" in out
        assert cli.main(["attacks", "describe", "usd-b92"]) == 0
        assert cli.main(["attacks", "describe", "unknown"]) == 2

    def test_verify_thresholds(self, capsys):
        assert cli.main(["verify", "thresholds"]) == 0
        out = capsys.readouterr().out
        assert "pass" in out and "FAIL" not in out

    def test_verify_fock(self, capsys):
        assert cli.main(["verify", "fock", "--seed", "3"]) == 0
