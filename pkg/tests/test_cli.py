import json
import subprocess
import sys

import pytest

from perkpz import cli
from perkpz.records import loads


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def one(capsys, *argv, fmt="csv"):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return loads(out, fmt)


class TestExitCodes:
    def test_cdf_ok(self, capsys):
        (r,) = one(capsys, "cdf", "--m", "1", "--gamma", "0", "--tau", "1", "--beta", "0.5", "--p", "1")
        assert 0.0 <= r.value_re <= 1.0
        assert r.inputs["beta"] == [0.5]

    @pytest.mark.parametrize("argv", [
        ["cdf", "--gamma", "0", "--tau", "1"],                       # missing --beta
        ["cdf", "--gamma", "0", "--tau", "1", "--beta", "x"],        # not a number
        ["cdf", "--bogus"],
        ["nosuch"],
        ["cdf", "--m", "2", "--gamma", "0", "--tau", "1", "--beta", "0"],
        ["cdf", "--gamma", "0", "--tau", "1", "--beta", "0", "--p", "-1"],
        ["cdf", "--gamma", "0", "--tau", "1", "--beta", "0", "--nodes", "15"],
        ["mc", "--case", "2", "--t", "0.5", "--h", "0"],               # Case 2 needs --rho
        ["tasep", "--a", "4", "--runs", "1000"],
        ["verify", "--suite", "nosuch"],
    ])
    def test_usage(self, capsys, argv):
        assert run(capsys, *argv)[0] == cli.EXIT_USAGE

    def test_numerical_failure(self, capsys):
        code, _, err = run(capsys, "conditional", "--x", "0", "--t", "0.5", "--h", "-20", "--ell", "4", "--p", "2")
        assert code == cli.EXIT_NUMERIC
        assert "numerical" in err

    def test_module_entry_point(self):
        p = subprocess.run([sys.executable, "-m", "perkpz", "limit", "--case", "1", "--x", "0", "--t", "0.5",
                            "--h", "0"], capture_output=True, text=True)
        assert p.returncode == 0
        assert loads(p.stdout, "csv")[0].value_re == pytest.approx(0.25, abs=1e-9)


class TestCdf:
    def test_batch_order(self, capsys, tmp_path):
        betas = [0.1 * k - 0.5 for k in range(10)]
        f = tmp_path / "pts.csv"
        f.write_text("gamma,tau,beta\n" + "".join(f"0,1,{b}\n" for b in betas))
        recs = one(capsys, "cdf", "--batch", str(f))
        assert [r.inputs["beta"][0] for r in recs] == betas
        vals = [r.value_re for r in recs]
        assert vals == sorted(vals)

    def test_batch_bad_row(self, capsys, tmp_path):
        f = tmp_path / "pts.csv"
        f.write_text("gamma,tau,beta\n0,1,0.5\n0,oops,0.5\n")
        code, _, err = run(capsys, "cdf", "--batch", str(f))
        assert code == cli.EXIT_USAGE and ":3:" in err

    def test_batch_two_levels(self, capsys, tmp_path):
        f = tmp_path / "pts.csv"
        f.write_text("gamma,tau,beta,p\n0;0.3,0.5;1,0.2;0.5,1\n")
        (r,) = one(capsys, "cdf", "--batch", str(f))
        assert r.inputs["tau"] == [0.5, 1.0]

    def test_node_doubling_halves_proxy(self, capsys):
        # two levels: quadrature error dominates the proxy at 64 nodes
        argv = ["cdf", "--gamma", "0,0.3", "--tau", "0.5,1", "--beta", "0.2,0.5"]
        (a,) = one(capsys, *argv, "--nodes", "64")
        (b,) = one(capsys, *argv, "--nodes", "128")
        assert b.quad_proxy <= 0.5 * a.quad_proxy

    def test_plot_data(self, capsys):
        recs = one(capsys, "cdf", "--plot-data", "cdf", "--grid=-2:2:5")
        assert [r.inputs["x"] for r in recs] == [-2.0, -1.0, 0.0, 1.0, 2.0]
        assert all(0 <= r.value_re <= 1 for r in recs)
        recs = one(capsys, "cdf", "--plot-data", "density-tail", "--grid", "1:3:3")
        assert all(r.details["asymptotic"] > 0 for r in recs)

    def test_json_format(self, capsys):
        (r,) = one(capsys, "cdf", "--gamma", "0", "--tau", "1", "--beta", "0", "--format", "json", fmt="json")
        assert r.command == "cdf"


class TestOtherCommands:
    def test_mc_case_three(self, capsys):
        (r,) = one(capsys, "mc", "--case", "3", "--t", "0.5", "--h", "0", "--paths", "100000", "--seed", "7")
        assert abs(r.value_re - 0.5) <= 3 * r.se
        assert r.seed == 7 and r.n_paths == 100000

    def test_c_of_rho_forms(self, capsys):
        (r,) = one(capsys, "specfun", "--fn", "c_of_rho", "--rho", "1")
        assert r.details["difference"] < 1e-12
        assert r.details["theta_form"] == pytest.approx(r.details["poisson_dual_form"], abs=1e-12)

    def test_specfun_polylog(self, capsys):
        (r,) = one(capsys, "specfun", "--fn", "polylog", "--s", "1.5", "--z", "0.5")
        direct = sum(0.5**k / k**1.5 for k in range(1, 80))
        assert r.value_re == pytest.approx(direct, abs=1e-12)
        assert run(capsys, "specfun", "--fn", "polylog", "--s", "2")[0] == cli.EXIT_USAGE

    def test_conditional(self, capsys):
        (r,) = one(capsys, "conditional", "--x", "0", "--t", "0.5", "--h", "0", "--ell", "4", "--p", "2")
        assert 0 <= r.value_re <= 1
        assert set(r.details["numerator_terms"]) == {"P1", "P2", "P1hat", "P2hat"}

    def test_tasep(self, capsys):
        (r,) = one(capsys, "tasep", "--a", "8", "--runs", "1000", "--beta", "10")
        assert r.value_re == 1.0

    def test_verify_identities(self, capsys):
        code, out, err = run(capsys, "verify", "--suite", "identities")
        assert code == 0, err
        assert "FAIL" not in err and "[PASS]" in err


class TestConfigAndSeed:
    ARGS = ["mc", "--case", "1", "--t", "0.5", "--h", "0", "--paths", "2000"]

    def test_config_fills_and_flags_win(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 3, "paths": 1000, "format": "json"}))
        (r,) = one(capsys, *self.ARGS, "--config", str(cfg), fmt="json")
        assert r.seed == 3 and r.n_paths == 2000

    def test_config_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"sed": 3}))
        assert run(capsys, *self.ARGS, "--config", str(cfg))[0] == cli.EXIT_USAGE

    def test_config_missing_file(self, capsys, tmp_path):
        assert run(capsys, *self.ARGS, "--config", str(tmp_path / "none.json"))[0] == cli.EXIT_USAGE

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "99")
        (r,) = one(capsys, *self.ARGS)
        assert r.seed == 99
        monkeypatch.delenv(cli.SEED_ENV)
        (r,) = one(capsys, *self.ARGS)
        assert r.seed == cli.DEFAULT_SEED

    @pytest.mark.parametrize("argv", [
        ARGS + ["--seed", "5"],
        ["tasep", "--a", "8", "--runs", "1000", "--seed", "5"],
    ])
    def test_byte_identical_files(self, capsys, tmp_path, argv):
        blobs = []
        for k in range(2):
            out = tmp_path / f"o{k}.csv"
            assert cli.main(argv + ["--output", str(out)]) == 0
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_timing_opt_in(self, capsys):
        (r,) = one(capsys, *self.ARGS)
        assert r.wall_time is None
        (r,) = one(capsys, *self.ARGS, "--timing")
        assert r.wall_time > 0
