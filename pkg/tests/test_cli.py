import json

from fkmerton import cli

FAST = ["--n-t", "11", "--n-y", "21", "--n-max", "4"]


def run(args):
    return cli.main(list(args))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestConfigResolution:
    def test_defaults(self):
        cfg = cli.resolve_config(cli._build_parser().parse_args(["solve"]))
        assert cfg["model"]["preset"] == "paper-example"
        assert cfg["numerics"]["n_t"] == 201
        assert cfg["numerics"]["n_y"] == [401]
        assert cfg["mc"]["paths"] == 100_000

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"numerics": {"n_t": 31, "tol": 1e-9}}))
        args = cli._build_parser().parse_args(
            ["solve", "--config", str(path), "--n-t", "41"])
        cfg = cli.resolve_config(args)
        assert cfg["numerics"]["n_t"] == 41      # flag wins
        assert cfg["numerics"]["tol"] == 1e-9    # file survives
        assert cfg["numerics"]["n_max"] == 20    # default fills the rest

    def test_inline_model_replaces_preset_default(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"model": {
            "d": 1, "m": 1, "T": 1.0, "gamma": 0.6, "rho": 0.4, "beta": 0.8,
            "r": "0.01", "mu": ["0.03"], "sigma": [["0.4"]], "F": ["-y1"],
            "name": "inline"}}))
        args = cli._build_parser().parse_args(["solve", "--config", str(path)])
        cfg = cli.resolve_config(args)
        assert "preset" not in cfg["model"]
        model = cli.build_model(cfg)
        assert model.name == "inline" and model.gamma == 0.6

    def test_gamma_flag_reaches_preset_override(self):
        args = cli._build_parser().parse_args(["solve", "--gamma", "0.5"])
        model = cli.build_model(cli.resolve_config(args))
        assert model.gamma == 0.5


class TestExitCodes:
    def test_success(self, tmp_path):
        assert run(["solve", "--out", str(tmp_path)] + FAST) == 0

    def test_malformed_json_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["solve", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "config error" in err and "line 1" in err

    def test_unknown_preset_is_config_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": {"preset": "nope"}}))
        assert run(["solve", "--config", str(cfg)]) == 1

    def test_bad_expression_is_config_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": {
            "d": 1, "m": 1, "T": 1.0, "gamma": 0.75, "rho": 0.5, "beta": 1.0,
            "r": "0.01", "mu": ["bogus(y)"], "sigma": [["0.5"]], "F": ["0"]}}))
        assert run(["solve", "--config", str(cfg)]) == 1

    def test_singular_volatility_is_numerical_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": {
            "d": 1, "m": 1, "T": 1.0, "gamma": 0.75, "rho": 0.5, "beta": 1.0,
            "r": "0.01", "mu": ["0.02"], "sigma": [["y1 - y1"]], "F": ["0"]}}))
        assert run(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_violated_inequality_exits_three(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "value_gap_rows", lambda result: [
            {"n": 1, "gap": 1.0, "bound": 0.5, "ok": False}])
        code = run(["report", "--out", str(tmp_path)] + FAST)
        assert code == 3
        assert read_json(tmp_path / "report.json")["inequalities_ok"] is False


class TestSolveArtifacts:
    def test_artifact_set_and_manifest(self, tmp_path):
        run(["solve", "--out", str(tmp_path)] + FAST)
        names = {p.name for p in tmp_path.iterdir()}
        assert {"h.csv", "deltas.csv", "residual.csv", "manifest.json"} <= names
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["command"] == "solve"
        assert manifest["results"]["n_done"] == 4
        assert manifest["config"]["numerics"]["n_t"] == 11
        assert manifest["artifacts"] == sorted(manifest["artifacts"])

    def test_deltas_csv_layout(self, tmp_path):
        run(["solve", "--out", str(tmp_path)] + FAST)
        lines = (tmp_path / "deltas.csv").read_text().splitlines()
        assert lines[0] == "n,delta,metric"
        assert len(lines) == 5
        n, delta, metric = lines[1].split(",")
        assert n == "1" and float(delta) > 0

    def test_manifest_round_trip_reproduces_csv(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        run(["solve", "--out", str(first)] + FAST)
        run(["solve", "--config", str(first / "manifest.json"),
             "--out", str(second)])
        for name in ("h.csv", "deltas.csv", "residual.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_outdir_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path / "from_env"))
        run(["solve"] + FAST)
        assert (tmp_path / "from_env" / "h.csv").exists()


class TestOtherCommands:
    def test_bounds_artifacts(self, tmp_path):
        assert run(["bounds", "--preset", "merton-constant",
                    "--out", str(tmp_path)]) == 0
        ledger = read_json(tmp_path / "ledger.json")
        assert ledger["ledger"]["D_star"] == 0.0
        assert 0 < ledger["ledger"]["lambda"] < 1
        assert len(ledger["rates"]) == 20
        lines = (tmp_path / "ledger.csv").read_text().splitlines()
        assert lines[0] == "quantity,value"

    def test_bounds_fixed_zeta(self, tmp_path):
        run(["bounds", "--preset", "merton-constant", "--zeta", "1",
             "--out", str(tmp_path)])
        assert read_json(tmp_path / "ledger.json")["ledger"]["zeta"] == 1.0

    def test_strategy_table_shape(self, tmp_path):
        run(["strategy", "--out", str(tmp_path)] + FAST)
        lines = (tmp_path / "strategy.csv").read_text().splitlines()
        assert lines[0] == "t,y1,pi_1,c,a_star,b_1"
        assert len(lines) == 1 + 11 * 21

    def test_simulate_artifacts(self, tmp_path):
        assert run(["simulate", "--out", str(tmp_path), "--paths", "400",
                    "--step", "0.05"] + FAST) == 0
        est = read_json(tmp_path / "j_estimate.json")
        assert est["n_paths"] == 400
        assert est["baseline"]["optimal_not_worse"] is True
        lines = (tmp_path / "paths_summary.csv").read_text().splitlines()
        assert lines[0] == "t,mean,q05,q25,q50,q75,q95"

    def test_mc_check_artifacts(self, tmp_path):
        assert run(["mc-check", "--out", str(tmp_path), "--paths", "2000",
                    "--step", "0.02", "--points", "2"] + FAST) == 0
        lines = (tmp_path / "mc_check.csv").read_text().splitlines()
        assert lines[0] == "t,y,pde,mc,stderr,z"
        assert len(lines) == 3
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["results"]["max_abs_z"] < 6.0

    def test_report_artifacts_and_checks(self, tmp_path):
        assert run(["report", "--out", str(tmp_path)] + FAST) == 0
        report = read_json(tmp_path / "report.json")
        assert report["inequalities_ok"] is True
        assert len(report["value_gap_check"]) == 4
        assert report["accuracy_milestones"]["delta_5"]["observed"] is None
        for image in ("h_surface.png", "delta_convergence.png"):
            assert (tmp_path / image).stat().st_size > 1000

    def test_mc_check_thread_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["mc-check", "--paths", "20000", "--step", "0.02",
                "--points", "2", "--seed", "11"] + FAST
        run(base + ["--threads", "1", "--out", str(a)])
        run(base + ["--threads", "8", "--out", str(b)])
        assert (a / "mc_check.csv").read_bytes() == (b / "mc_check.csv").read_bytes()

    def test_simulate_thread_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        base = ["simulate", "--paths", "20000", "--step", "0.02",
                "--seed", "11"] + FAST
        run(base + ["--threads", "1", "--out", str(a)])
        run(base + ["--threads", "8", "--out", str(b)])
        assert (a / "paths_summary.csv").read_bytes() == \
            (b / "paths_summary.csv").read_bytes()
        assert read_json(a / "j_estimate.json") == read_json(b / "j_estimate.json")
