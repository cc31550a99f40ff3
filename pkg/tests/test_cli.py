"""Command-line interface: exit codes, report shapes, artifacts, determinism."""

import json
from importlib import resources

import jsonschema
import pytest
from referencing import Registry, Resource

from csviu import cli

SCALAR_DOC = {
    "n": 1, "r": 1, "p": 1,
    "A": [[0.5]], "sigma_x": [[0.2]], "sigma_bar_x": [[0.3]],
    "sigma": [[0.1]], "C": [[1.0]],
}
# sigma_x = 0 puts the model in the exact domain of the discounted closed form
NO_SX_DOC = dict(SCALAR_DOC, sigma_x=[[0.0]])
# A = 0 with huge state-proportional noise overflows most paths within ~120 stages
EXPLOSIVE_DOC = dict(SCALAR_DOC, A=[[0.0]], sigma_x=[[1.0]], sigma_bar_x=[[40.0]],
                     sigma=[[1.0]])
TWO_DIM_DOC = {
    "n": 2, "r": 2, "p": 1,
    "A": [[0.5, 0.1], [0.0, 0.3]],
    "sigma_x": [[0.1, 0.0], [0.0, 0.1]],
    "sigma_bar_x": [[0.2, 0.0], [0.0, 0.2]],
    "sigma": [[0.05, 0.0], [0.0, 0.05]],
    "C": [[1.0, 1.0]],
}

H2_SCALAR_09 = 0.6484149855907785
VARPI_SCALAR_09 = 0.07204610951008648
POWER_SCALAR = 0.05 / 0.66


@pytest.fixture(autouse=True)
def _clear_thread_env(monkeypatch):
    monkeypatch.delenv("CSVIU_THREADS", raising=False)


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_models")
    paths = {}
    for name, doc in (("scalar", SCALAR_DOC), ("no_sx", NO_SX_DOC),
                      ("explosive", EXPLOSIVE_DOC), ("two_dim", TWO_DIM_DOC)):
        path = base / f"{name}.json"
        path.write_text(json.dumps(doc))
        paths[name] = str(path)
    gain = base / "gain.json"
    gain.write_text(json.dumps([[-0.5]]))
    paths["gain"] = str(gain)
    malformed = base / "malformed.json"
    malformed.write_text("{not json")
    paths["malformed"] = str(malformed)
    paths["missing"] = str(base / "does_not_exist.json")
    return paths


@pytest.fixture
def run(capsys):
    def _run(argv):
        code = cli.main(argv)
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _run


@pytest.fixture(scope="module")
def schema_validator():
    schema_dir = resources.files("csviu") / "schemas"
    common = Resource.from_contents(
        json.loads((schema_dir / "common.schema.json").read_text())
    )
    registry = common @ Registry()

    def _validator(name):
        schema = json.loads((schema_dir / f"{name}.schema.json").read_text())
        return jsonschema.Draft202012Validator(schema, registry=registry)

    return _validator


class TestExitCodes:
    def test_analyze_succeeds(self, run, models):
        code, out, _ = run(["analyze", models["scalar"], "--alpha", "0.9"])
        assert code == 0
        assert json.loads(out)["command"] == "analyze"

    def test_analyze_not_stable_is_still_a_computed_answer(self, run, models):
        code, out, _ = run(["analyze", models["scalar"], "--alpha", "3.0"])
        assert code == 0
        report = json.loads(out)
        assert report["stability"]["verdict"] == "not_stable"
        assert report["lyapunov"] is None

    def test_norm_at_unstable_alpha_is_numerical_failure(self, run, models):
        code, out, err = run(["norm", models["scalar"], "--alpha", "3.0"])
        assert code == 3
        assert out == ""
        assert "no PSD solution" in err

    def test_decay_check_at_unstable_alpha_is_numerical_failure(self, run, models):
        code, out, err = run(["simulate", models["scalar"], "--paths", "100",
                              "--horizon", "10", "--seed", "3", "--alpha", "3.0",
                              "--check-decay"])
        assert code == 3
        assert out == ""
        assert err.startswith("error:")

    def test_excess_aborted_paths_fail_after_reporting(self, run, models):
        code, out, err = run(["simulate", models["explosive"], "--paths", "300",
                              "--horizon", "120", "--seed", "7", "--alpha", "0.5"])
        assert code == 3
        # the report is still printed so the surviving-path estimates are usable
        report = json.loads(out)
        assert report["aborted_paths"] == 276
        assert report["abort_fraction"] == pytest.approx(0.92)
        assert "276 of 300 paths aborted" in err

    def test_input_errors_exit_two(self, run, models):
        cases = [
            ["analyze", models["scalar"], "--alpha", "-1.0"],
            ["simulate", models["scalar"], "--paths", "0", "--horizon", "10",
             "--seed", "3", "--alpha", "0.9"],
            ["analyze", models["missing"], "--alpha", "0.9"],
            ["analyze", models["malformed"], "--alpha", "0.9"],
            ["simulate", models["scalar"], "--paths", "10", "--horizon", "5",
             "--seed", "3", "--alpha", "0.9", "--dump"],
            ["norm", models["scalar"], "--alpha", "1.2", "--kappa", "5",
             "--x0", "1,2"],
        ]
        for argv in cases:
            code, out, err = run(argv)
            assert code == 2, argv
            assert out == ""
            assert err.startswith("error:")

    @pytest.mark.parametrize(
        "argv",
        [
            ["norm", "model.json", "--alpha", "-1.0"],
            ["norm", "model.json"],
            ["simulate", "model.json", "--paths", "10", "--horizon", "5",
             "--seed", "3"],
            ["simulate", "model.json", "--paths", "10", "--horizon", "5",
             "--seed", "3", "--alpha", "0.9", "--noise", "bogus"],
            ["no-such-command"],
        ],
        ids=["negative-alpha", "no-mode", "missing-alpha", "bad-noise", "unknown"],
    )
    def test_usage_errors_raise_parser_exit(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 2
        capsys.readouterr()


class TestAnalyzeReport:
    def test_report_content_and_schema(self, run, models, schema_validator):
        code, out, _ = run(["analyze", models["scalar"], "--alpha", "0.9"])
        assert code == 0
        report = json.loads(out)
        schema_validator("analyze").validate(report)
        assert report["stability"]["verdict"] == "alpha_stable"
        assert report["detectability"]["detectable"] is True
        assert report["alpha_bar"] == pytest.approx(2.0, rel=1e-6)
        lyap = report["lyapunov"]
        assert lyap["varpi_L"] == pytest.approx(VARPI_SCALAR_09)
        assert lyap["L"] == [[pytest.approx(1.4409221902017293)]]

    def test_not_stable_report_validates(self, run, models, schema_validator):
        _, out, _ = run(["analyze", models["scalar"], "--alpha", "3.0"])
        schema_validator("analyze").validate(json.loads(out))

    def test_provided_gain_short_circuits_search(self, run, models, schema_validator):
        code, out, _ = run(["analyze", models["scalar"], "--alpha", "0.9",
                            "--G", models["gain"]])
        assert code == 0
        report = json.loads(out)
        schema_validator("analyze").validate(report)
        det = report["detectability"]
        assert det["G"] == [[-0.5]]
        # A + GC = 0, so the closed loop keeps only the alpha-weighted noise term
        assert det["closed_loop_radius"] == pytest.approx(0.9 * 0.3**2)
        assert det["detectable"] is True


class TestNormReport:
    def test_discounted_closed_forms(self, run, models, schema_validator):
        code, out, _ = run(["norm", models["scalar"], "--alpha", "0.9"])
        assert code == 0
        report = json.loads(out)
        schema_validator("norm").validate(report)
        norms = report["norms"]
        assert norms["h2_discounted"] == pytest.approx(H2_SCALAR_09)
        assert norms["varpi_L"] == pytest.approx(VARPI_SCALAR_09)
        assert norms["energy_offset_g0"] == pytest.approx(norms["h2_discounted"])
        assert norms["power_norm"] is None
        assert norms["counter_bound"] is None
        assert "counter_bound_value" not in norms

    def test_power_norm_report(self, run, models, schema_validator):
        code, out, _ = run(["norm", models["scalar"], "--power"])
        assert code == 0
        report = json.loads(out)
        schema_validator("norm").validate(report)
        assert report["power_norm"] == pytest.approx(POWER_SCALAR)
        assert "norms" not in report

    def test_counter_bound_block(self, run, models, schema_validator):
        code, out, _ = run(["norm", models["scalar"], "--alpha", "1.2",
                            "--kappa", "10", "--x0", "1.0"])
        assert code == 0
        report = json.loads(out)
        schema_validator("norm").validate(report)
        norms = report["norms"]
        assert norms["counter_bound"]["c0"] == pytest.approx(1.0 / 0.592)
        assert norms["counter_bound"]["c1"] == pytest.approx(
            1.2 * (0.05 / 0.592) / 0.2
        )
        assert norms["counter_bound_value"] == pytest.approx(33.729069708108106)

    def test_counter_bound_value_requires_kappa(self, run, models):
        _, out, _ = run(["norm", models["scalar"], "--alpha", "1.2"])
        norms = json.loads(out)["norms"]
        assert norms["counter_bound"] is not None
        assert "counter_bound_value" not in norms


class TestSweep:
    def test_alias_stdout_is_identical(self, run, models):
        _, out_norm, _ = run(["norm", models["scalar"], "--sweep", "0.5,0.9,1.5"])
        _, out_alias, _ = run(["sweep", models["scalar"], "--alphas", "0.5,0.9,1.5"])
        assert out_alias == out_norm

    def test_default_grid(self, run, models, schema_validator):
        code, out, _ = run(["norm", models["scalar"], "--sweep"])
        assert code == 0
        report = json.loads(out)
        schema_validator("norm").validate(report)
        rows = report["sweep"]
        assert [r["alpha"] for r in rows] == [0.5, 0.9, 0.99, 0.999, 1.0, 1.05]
        assert all(r["status"] == "ok" for r in rows)
        # at alpha = 1/2 the discount factor alpha/(1-alpha) is exactly one
        assert rows[0]["h2_discounted"] == pytest.approx(rows[0]["varpi_L"])

    def test_not_stable_rows_carry_nulls(self, run, models, schema_validator):
        code, out, _ = run(["norm", models["scalar"], "--sweep", "0.9,3.0"])
        assert code == 0
        report = json.loads(out)
        schema_validator("norm").validate(report)
        ok_row, bad_row = report["sweep"]
        assert ok_row["status"] == "ok"
        assert bad_row["status"] == "not_stable"
        assert bad_row["spectral_radius"] == pytest.approx(3.0 * 0.34)
        for field in ("varpi_L", "h2_discounted", "abel_gap", "dist_to_L1"):
            assert bad_row[field] is None


class TestSimulateReport:
    def test_closed_form_attached_for_zero_start(self, run, models, schema_validator):
        code, out, _ = run(["simulate", models["scalar"], "--paths", "200",
                            "--horizon", "20", "--seed", "3", "--alpha", "0.9"])
        assert code == 0
        report = json.loads(out)
        schema_validator("simulate").validate(report)
        abel = report["estimates"]["abel"]
        assert abel["closed_form"] == pytest.approx(H2_SCALAR_09)
        assert abel["z_score"] == pytest.approx(
            (abel["value"] - abel["closed_form"]) / abel["std_error"]
        )
        # both noise channels active: the closed form undershoots the true energy
        assert 3.0 < abel["z_score"] < 10.0
        assert report["aborted_paths"] == 0
        assert report["abort_fraction"] == 0.0

    def test_closed_form_matches_exact_variant(self, run, models):
        code, out, _ = run(["simulate", models["no_sx"], "--paths", "2000",
                            "--horizon", "40", "--seed", "101", "--alpha", "0.9"])
        assert code == 0
        abel = json.loads(out)["estimates"]["abel"]
        assert abs(abel["z_score"]) < 3.0

    def test_no_closed_form_for_nonzero_start(self, run, models):
        _, out, _ = run(["simulate", models["scalar"], "--paths", "100",
                         "--horizon", "10", "--seed", "3", "--alpha", "0.9",
                         "--x0", "1.0"])
        abel = json.loads(out)["estimates"]["abel"]
        assert "closed_form" not in abel
        assert "z_score" not in abel

    def test_cesaro_block_only_at_alpha_one(self, run, models, schema_validator):
        code, out, _ = run(["simulate", models["scalar"], "--paths", "200",
                            "--horizon", "20", "--seed", "3", "--alpha", "1.0"])
        assert code == 0
        report = json.loads(out)
        schema_validator("simulate").validate(report)
        assert "closed_form" not in report["estimates"]["abel"]
        cesaro = report["estimates"]["cesaro"]
        assert cesaro["closed_form"] == pytest.approx(POWER_SCALAR)
        assert cesaro["z_score"] > 3.0

        _, out, _ = run(["simulate", models["scalar"], "--paths", "100",
                         "--horizon", "10", "--seed", "3", "--alpha", "0.9"])
        assert "cesaro" not in json.loads(out)["estimates"]

    def test_manifest_echoes_run_configuration(self, run, models):
        _, out, _ = run(["simulate", models["scalar"], "--paths", "50",
                         "--horizon", "5", "--seed", "3", "--alpha", "0.9",
                         "--noise", "uniform"])
        config = json.loads(out)["manifest"]["config"]
        assert config["paths"] == 50
        assert config["horizon"] == 5
        assert config["seed"] == 3
        assert config["alpha"] == 0.9
        assert config["noise_kind"] == "uniform"
        assert config["x0"] == [0.0]
        assert config["Q"] == "C^T C"

    def test_diagnostic_blocks(self, run, models, schema_validator):
        code, out, _ = run(["simulate", models["scalar"], "--paths", "400",
                            "--horizon", "15", "--seed", "19", "--alpha", "0.9",
                            "--x0", "1.0", "--validate-representation",
                            "--check-decay"])
        assert code == 0
        report = json.loads(out)
        schema_validator("simulate").validate(report)
        rep = report["representation"]
        assert set(rep) == {"lhs", "rhs", "gap", "std_error", "z", "n_paths",
                            "sign_noise_term", "corrected_gap",
                            "corrected_std_error"}
        decay = report["decay"]
        assert len(decay) == 16
        assert set(decay[0]) == {"k", "energy", "std_error", "level", "bound",
                                 "violated"}


class TestDeterminismAndThreads:
    SIM = ["--paths", "500", "--horizon", "15", "--seed", "11", "--alpha", "0.9"]

    def test_repeated_runs_are_byte_identical(self, run, models):
        _, first, _ = run(["simulate", models["scalar"], *self.SIM])
        _, second, _ = run(["simulate", models["scalar"], *self.SIM])
        assert second == first

    def test_thread_count_does_not_change_output(self, run, models):
        _, one, _ = run(["simulate", models["scalar"], *self.SIM, "--threads", "1"])
        _, three, _ = run(["simulate", models["scalar"], *self.SIM, "--threads", "3"])
        assert three == one

    def test_env_var_overrides_flag(self, run, models, monkeypatch):
        _, baseline, _ = run(["simulate", models["scalar"], *self.SIM,
                              "--threads", "1"])
        monkeypatch.setenv("CSVIU_THREADS", "2")
        code, overridden, _ = run(["simulate", models["scalar"], *self.SIM,
                                   "--threads", "1"])
        assert code == 0
        assert overridden == baseline

    def test_env_var_clamps_to_at_least_one_thread(self, run, models, monkeypatch):
        _, baseline, _ = run(["simulate", models["scalar"], *self.SIM])
        monkeypatch.setenv("CSVIU_THREADS", "0")
        code, clamped, _ = run(["simulate", models["scalar"], *self.SIM])
        assert code == 0
        assert clamped == baseline

    def test_env_var_must_be_an_integer(self, run, models, monkeypatch):
        monkeypatch.setenv("CSVIU_THREADS", "abc")
        code, out, err = run(["simulate", models["scalar"], *self.SIM])
        assert code == 2
        assert out == ""
        assert "CSVIU_THREADS" in err

    def test_thread_flag_must_be_positive(self, run, models):
        code, _, err = run(["simulate", models["scalar"], *self.SIM,
                            "--threads", "0"])
        assert code == 2
        assert "threads" in err


class TestArtifacts:
    def test_analyze_writes_manifest_and_report(self, run, models, tmp_path):
        outdir = tmp_path / "analysis"
        _, out, _ = run(["analyze", models["scalar"], "--alpha", "0.9",
                         "--output-dir", str(outdir)])
        assert sorted(p.name for p in outdir.iterdir()) == [
            "manifest.json", "report.json",
        ]
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert set(manifest) == {"command", "model_path", "config",
                                 "tool_version", "output_dir", "timestamp"}
        assert manifest["command"] == "analyze"
        assert manifest["model_path"] == models["scalar"]
        filed = json.loads((outdir / "report.json").read_text())
        printed = json.loads(out)
        assert filed.pop("manifest_file") == "manifest.json"
        assert filed == printed

    def test_sweep_csv_layout(self, run, models, tmp_path):
        outdir = tmp_path / "sweep"
        _, out, _ = run(["norm", models["scalar"], "--sweep", "0.5,0.9",
                         "--output-dir", str(outdir)])
        lines = (outdir / "sweep.csv").read_text().splitlines()
        assert lines[0] == "# manifest: manifest.json"
        assert lines[1] == ("alpha,status,spectral_radius,varpi_L,"
                            "h2_discounted,abel_gap,dist_to_L1")
        assert len(lines) == 2 + len(json.loads(out)["sweep"])

    def test_simulate_dump_and_decay_tables(self, run, models, tmp_path):
        outdir = tmp_path / "sim"
        code, _, _ = run(["simulate", models["scalar"], "--paths", "20",
                          "--horizon", "5", "--seed", "3", "--alpha", "0.9",
                          "--x0", "1.0", "--check-decay", "--dump",
                          "--output-dir", str(outdir)])
        assert code == 0
        assert sorted(p.name for p in outdir.iterdir()) == [
            "decay.csv", "manifest.json", "report.json", "trajectories.csv",
        ]
        traj = (outdir / "trajectories.csv").read_text().splitlines()
        assert traj[0] == "# manifest: manifest.json"
        assert traj[1] == "path,k,x0,y0"
        assert traj[2] == "0,0,1.0,1.0"
        # 20 paths, six stages each (k = 0..5), after the comment and header
        assert len(traj) == 2 + 20 * 6
        decay = (outdir / "decay.csv").read_text().splitlines()
        assert decay[0] == "# manifest: manifest.json"
        assert decay[1] == "k,energy,std_error,level,bound,violated"

    def test_vector_columns_and_start_broadcast(self, run, models, tmp_path):
        outdir = tmp_path / "two_dim"
        _, out, _ = run(["simulate", models["two_dim"], "--paths", "10",
                         "--horizon", "4", "--seed", "5", "--alpha", "0.9",
                         "--x0", "1.0", "--dump", "--output-dir", str(outdir)])
        assert json.loads(out)["manifest"]["config"]["x0"] == [1.0, 1.0]
        traj = (outdir / "trajectories.csv").read_text().splitlines()
        assert traj[1] == "path,k,x0,x1,y0"
        assert traj[2] == "0,0,1.0,1.0,2.0"
