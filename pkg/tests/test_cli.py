"""Command-line interface: parsing, config, output contracts, exit codes."""

import io
import json
import math

import pytest

from packetlab.cli import run

# the wide default photon window includes sparse near-pole bins; their
# Stirling warning is by design and not under test here
pytestmark = pytest.mark.filterwarnings(
    "ignore::packetlab.errors.AccuracyWarning"
)

TWO_SQRT_TWO = 2.8284271247461903
SC_K = 0.9428090415820635


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def record(*argv):
    code, out, err = run_cli(*argv)
    assert code == 0, f"exit {code}, stderr: {err!r}"
    return json.loads(out)


class TestChsh:
    def test_singlet_closed_form(self):
        rec = record("chsh")
        assert rec["command"] == "chsh"
        assert rec["K"] == pytest.approx(TWO_SQRT_TWO, rel=1e-12)
        assert len(rec["settings"]) == 4

    def test_semiclassical_closed_form(self):
        rec = record("chsh", "--model", "sc")
        assert rec["K"] == pytest.approx(SC_K, rel=1e-12)

    def test_custom_angles(self):
        rec = record("chsh", "--angles-deg", "0,30,60,90")
        e = lambda d: -math.cos(math.radians(d))
        expected = abs(e(30) + e(90) + e(30) - e(30))
        assert rec["K"] == pytest.approx(expected, rel=1e-12)

    def test_monte_carlo_estimate(self):
        rec = record("chsh", "--mc", "200000")
        assert rec["samples_per_setting"] == 200000
        assert abs(rec["K_mc"] - rec["K"]) < rec["three_sigma"]

    def test_seed_moves_estimate_not_closed_form(self):
        r0 = record("chsh", "--mc", "5000", "--seed", "0")
        r1 = record("chsh", "--mc", "5000", "--seed", "1")
        assert r0["K"] == r1["K"]
        assert r0["K_mc"] != r1["K_mc"]

    def test_sharded_estimate_stays_consistent(self):
        rec = record("chsh", "--mc", "50000", "--shards", "4")
        assert abs(rec["K_mc"] - rec["K"]) < rec["three_sigma"]


class TestBell:
    def test_default_table(self):
        rec = record("bell")
        joint = rec["joint"]
        total = joint["pp"] + joint["pm"] + joint["mp"] + joint["mm"]
        assert total == pytest.approx(1.0, abs=1e-12)
        assert rec["expectation"] == pytest.approx(
            -math.cos(math.radians(45.0)), rel=1e-12
        )
        assert rec["marginal_b_plus"] == pytest.approx(0.5, abs=1e-12)
        assert rec["marginal_b_minus"] == pytest.approx(0.5, abs=1e-12)

    def test_vector_flags_renormalize_with_warning(self):
        code, out, err = run_cli("bell", "--a", "0,0,2", "--b", "0,0,1")
        assert code == 0
        assert "direction a renormalized from |v| = 2" in err
        rec = json.loads(out)
        assert rec["expectation"] == pytest.approx(-1.0, abs=1e-12)

    def test_angles_and_vectors_conflict(self):
        code, _, err = run_cli(
            "bell", "--angles-deg", "0,45", "--a", "1,0,0", "--b", "1,0,0"
        )
        assert code == 1
        assert "not both" in err

    def test_missing_partner_vector(self):
        code, _, err = run_cli("bell", "--a", "1,0,0")
        assert code == 1
        assert "missing direction vectors: b" in err


class TestConfig:
    def test_config_mirrors_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "sc"}))
        rec = record("chsh", "--config", str(cfg))
        assert rec["K"] == pytest.approx(SC_K, rel=1e-12)

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "sc"}))
        rec = record("chsh", "--config", str(cfg), "--model", "qm")
        assert rec["K"] == pytest.approx(TWO_SQRT_TWO, rel=1e-12)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "sc", "bogus": 1}))
        code, _, err = run_cli("chsh", "--config", str(cfg))
        assert code == 1
        assert "unknown config keys: bogus" in err

    def test_config_must_be_object(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        code, _, err = run_cli("chsh", "--config", str(cfg))
        assert code == 1
        assert "JSON object" in err

    def test_invalid_json_reported(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        code, _, err = run_cli("chsh", "--config", str(cfg))
        assert code == 1
        assert "not valid JSON" in err

    def test_missing_file_reported(self, tmp_path):
        code, _, err = run_cli("chsh", "--config", str(tmp_path / "nope.json"))
        assert code == 1
        assert "cannot read config" in err


class TestOutputContracts:
    def test_identical_runs_are_byte_identical(self):
        _, first, _ = run_cli("bell", "--angles-deg", "10,70")
        _, second, _ = run_cli("bell", "--angles-deg", "10,70")
        assert first == second

    def test_record_layout(self):
        _, out, _ = run_cli("chsh", "--seed", "3")
        assert out.startswith('{"command": "chsh", "seed": 3, "params": ')
        assert out.endswith("\n")

    def test_out_file_matches_stdout(self, tmp_path):
        path = tmp_path / "rec.json"
        _, stdout_text, _ = run_cli("vonlaue")
        code, piped, _ = run_cli("vonlaue", "--out", str(path))
        assert code == 0
        assert piped == ""
        written = json.loads(path.read_text())
        reference = json.loads(stdout_text)
        # the record mirrors its own parameters, so only `out` may differ
        assert written["params"].pop("out") == str(path)
        assert reference["params"].pop("out") is None
        assert written == reference

    def test_unwritable_out_reported(self, tmp_path):
        code, _, err = run_cli("vonlaue", "--out", str(tmp_path / "no" / "x.json"))
        assert code == 1
        assert "cannot write output" in err

    def test_csv_gate_names_the_csv_commands(self):
        code, _, err = run_cli("chsh", "--format", "csv")
        assert code == 1
        assert "csv output is only available for cavity, condspace, counts" in err

    def test_counts_csv(self):
        code, out, _ = run_cli(
            "counts", "--sbar", "0.5", "--g", "2", "--format", "csv"
        )
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "m,W"
        weights = [float(line.split(",")[1]) for line in lines[1:]]
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)

    def test_cavity_csv(self):
        code, out, _ = run_cli(
            "cavity", "--bins", "16", "--format", "csv"
        )
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "nu,x,g,count,energy_density"
        assert len(lines) == 17

    def test_condspace_csv(self):
        code, out, _ = run_cli("condspace", "--format", "csv")
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "x,conditional,density"
        assert len(lines) == 162


class TestExitCodes:
    def test_domain_error_exits_two(self):
        code, _, err = run_cli("actionprob", "--width-ratio", "1")
        assert code == 2
        assert err.startswith("error:")

    def test_bad_flag_value_exits_one(self):
        code, _, err = run_cli("sample", "--n", "0")
        assert code == 1
        assert "must be a positive integer" in err

    def test_counts_needs_exactly_one_mean(self):
        code, _, err = run_cli("counts")
        assert code == 1
        assert "exactly one of --mbar or --sbar" in err
        code, _, err = run_cli("counts", "--mbar", "1", "--sbar", "1")
        assert code == 1

    def test_unknown_command_exits_one(self):
        code, *_ = run_cli("bogus")
        assert code == 1

    def test_missing_command_exits_one(self):
        code, *_ = run_cli()
        assert code == 1

    def test_help_exits_zero(self, capsys):
        assert run_cli("--help")[0] == 0
        assert run_cli("counts", "--help")[0] == 0
        capsys.readouterr()


class TestPacketAliases:
    def test_spread_alias_is_byte_identical(self):
        _, prefixed, _ = run_cli("packet", "spread")
        _, bare, _ = run_cli("spread")
        assert bare == prefixed
        assert json.loads(bare)["command"] == "packet spread"

    def test_accum_alias_is_byte_identical(self):
        _, prefixed, _ = run_cli("packet", "accum")
        _, bare, _ = run_cli("accum")
        assert bare == prefixed

    def test_remaining_aliases_run(self):
        assert run_cli("coherence")[0] == 0
        assert run_cli("sterngerlach")[0] == 0


class TestCommandValues:
    def test_spread_benchmark_defaults(self):
        rec = record("packet", "spread", "--full-length", "4e-15")
        assert rec["direction"] == "longitudinal"
        assert rec["final_width"] == pytest.approx(0.023, rel=0.1)
        assert rec["final_full_length"] == 2.0 * rec["final_width"]

    def test_accum_benchmark_defaults(self):
        rec = record("packet", "accum")
        assert rec["t_accumulate_s"] == pytest.approx(997927160605.7142, rel=1e-12)

    def test_vonlaue_default_ratio(self):
        rec = record("vonlaue")
        assert rec["packet_product_over_field_dof"] == pytest.approx(1.0, rel=1e-10)

    def test_counts_variance_fields_agree(self):
        rec = record("counts", "--stat", "bose", "--g", "3", "--mbar", "1.5")
        assert rec["variance"] == pytest.approx(
            rec["distribution_variance"], rel=1e-9
        )
        assert rec["m_bar"] == pytest.approx(1.5, rel=1e-12)

    def test_counts_monte_carlo_variance(self):
        rec = record(
            "counts", "--stat", "bose", "--g", "3", "--mbar", "1.0",
            "--mc", "200000",
        )
        assert abs(rec["mc_variance"] - rec["variance"]) < rec["variance_three_sigma"]

    def test_cavity_stefan_boltzmann(self):
        rec = record("cavity", "--bins", "400")
        assert rec["stefan_boltzmann_ratio"] == pytest.approx(1.0, abs=5e-3)

    def test_cavity_entropy_flag(self):
        rec = record("cavity", "--temperature", "1000", "--entropy")
        assert rec["ds_de_times_t"] == pytest.approx(1.0, abs=0.01)

    def test_lhv_semiclassical_family(self):
        rec = record("lhv", "--family", "semiclassical", "--settings", "200")
        assert rec["canonical_K"] == pytest.approx(SC_K, rel=1e-9)
        assert rec["max_K"] <= rec["bound"] + 1e-9
        assert rec["satisfied"] is True

    def test_lhv_sign_family_hits_classical_bound(self):
        rec = record(
            "lhv", "--family", "sign", "--models", "5", "--settings", "50"
        )
        assert rec["bound"] == 2.0
        assert rec["max_K"] <= 2.0 + 1e-9
        assert rec["satisfied"] is True

    def test_nosignal_small_run(self):
        rec = record("nosignal", "--trials", "20", "--max-dim", "5")
        assert rec["max_deviation"] < 1e-10


class TestRegress:
    def test_green_and_deterministic(self):
        _, first, _ = run_cli("regress")
        _, second, _ = run_cli("regress")
        assert first == second
        rec = json.loads(first)
        assert rec["all_ok"] is True
        assert rec["failures"] == 0
        assert rec["total"] == len(rec["checks"])

    def test_seed_choice_stays_green(self):
        rec = record("regress", "--seed", "1")
        assert rec["all_ok"] is True

    def test_shards_do_not_change_checks(self):
        base = record("regress")
        sharded = record("regress", "--shards", "4")
        assert sharded["checks"] == base["checks"]
