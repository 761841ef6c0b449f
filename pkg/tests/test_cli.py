"""Tests for CLI functionality."""

import csv
import io
import json
import math

import pytest
from typer.testing import CliRunner

from torusbloch.bloch import solve_bands
from torusbloch.cli import app
from torusbloch.dual_lattice import SequenceWeightedL1, enumerate_sublevel
from torusbloch.io import problem_from_dict, write_sublevel_csv

SQRT2 = math.sqrt(2.0)


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def flat(text):
    """Collapse rich line wrapping."""
    return " ".join(text.split())


class TestCLI:
    """Test the CLI interface."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def test_cli_help(self):
        """Test CLI help lists every command."""
        result = self.runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("enumerate", "compactness", "bands", "mean-value", "ergodic"):
            assert command in result.output

    def test_bands_command_help(self):
        """Test bands help mentions the grid and worker options."""
        result = self.runner.invoke(app, ["bands", "--help"])
        assert result.exit_code == 0
        assert "--theta-grid" in result.output
        assert "--workers" in result.output

    def test_malformed_input(self, tmp_path):
        """Test invalid JSON exits with code 2."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        result = self.runner.invoke(app, ["enumerate", "--input", str(path), "--d", "1"])
        assert result.exit_code == 2
        assert "Error" in result.output

    def test_undecodable_input(self, tmp_path):
        """Test bytes that are not UTF-8 exit with code 2."""
        path = tmp_path / "latin.json"
        path.write_bytes(b'{"scheme": "periodic_l1", "m": 1, "note": "\xff\xfe"}')
        result = self.runner.invoke(app, ["enumerate", "--input", str(path), "--d", "1"])
        assert result.exit_code == 2
        assert "UTF-8" in result.output

    def test_missing_input_file(self, tmp_path):
        """Test a missing input file exits with code 2."""
        result = self.runner.invoke(app, ["enumerate", "--input", str(tmp_path / "absent.json"), "--d", "1"])
        assert result.exit_code == 2


class TestEnumerateCommand:
    """Test the enumerate command."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def test_periodic_sublevel(self, tmp_path):
        """Test d = 6 pi on T^1 lists k = -3..3."""
        weight = tmp_path / "w.json"
        weight.write_text(json.dumps({"scheme": "periodic_l1", "m": 1}))
        out = tmp_path / "k.csv"
        result = self.runner.invoke(app, ["enumerate", "-i", str(weight), "--d", "6pi", "-o", str(out)])
        assert result.exit_code == 0
        rows = read_rows(out)
        assert rows[0] == ["k_1", "gamma", "exact"]
        assert [int(r[0]) for r in rows[1:]] == [-3, -2, -1, 0, 1, 2, 3]
        assert all(r[2] == "true" for r in rows[1:])
        assert "7" in result.output

    def test_matches_library_output(self, tmp_path):
        """Test the CSV equals the library writer byte for byte."""
        weight = tmp_path / "w.json"
        weight.write_text(json.dumps({"scheme": "weighted_l1", "alpha_rule": {"scale": 1.0, "exponent": 1.0}}))
        out = tmp_path / "k.csv"
        result = self.runner.invoke(app, ["enumerate", "-i", str(weight), "--d", "6pi", "-o", str(out)])
        assert result.exit_code == 0

        expected = io.StringIO()
        rule = SequenceWeightedL1(1.0, 1.0)
        sublevel = enumerate_sublevel(rule, 6 * math.pi)
        write_sublevel_csv(expected, sublevel, rule.values(sublevel.as_array()))
        assert len(sublevel) == 15
        assert out.read_text() == expected.getvalue()

    def test_rank_deficient_needs_window(self, tmp_path):
        """Test a singular Lambda Lambda^T without --window exits with code 3."""
        weight = tmp_path / "w.json"
        weight.write_text(json.dumps({"scheme": "quasi_euclidean", "lambda": [[1.0], [SQRT2]]}))
        result = self.runner.invoke(app, ["enumerate", "-i", str(weight), "--d", "6pi"])
        assert result.exit_code == 3
        assert "--window" in flat(result.output)

    def test_rank_deficient_window(self, tmp_path):
        """Test a window gives a non-exact listing."""
        weight = tmp_path / "w.json"
        weight.write_text(json.dumps({"scheme": "quasi_euclidean", "lambda": [[1.0], [SQRT2]]}))
        out = tmp_path / "k.csv"
        result = self.runner.invoke(
            app, ["enumerate", "-i", str(weight), "--d", "1", "--window", "3", "-o", str(out)]
        )
        assert result.exit_code == 0
        rows = read_rows(out)
        assert len(rows) > 1
        assert all(r[3] == "false" for r in rows[1:])

    def test_bad_level(self, tmp_path):
        """Test an unparsable --d exits with code 3."""
        weight = tmp_path / "w.json"
        weight.write_text(json.dumps({"scheme": "periodic_l1", "m": 1}))
        result = self.runner.invoke(app, ["enumerate", "-i", str(weight), "--d", "six"])
        assert result.exit_code == 3


class TestCompactnessCommand:
    """Test the compactness command."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def run(self, tmp_path, weight, levels):
        path = tmp_path / "w.json"
        path.write_text(json.dumps(weight))
        out = tmp_path / "report.json"
        result = self.runner.invoke(app, ["compactness", "-i", str(path), "--levels", levels, "-o", str(out)])
        assert result.exit_code == 0, result.output
        return json.loads(out.read_text()), result

    def test_periodic_certified(self, tmp_path):
        """Test the periodic weight is certified with exact counts."""
        report, result = self.run(tmp_path, {"scheme": "periodic_l1", "m": 2}, "2pi,4pi")
        assert report["verdict"] == "CERTIFIED_FINITE"
        assert [entry["exact_count"] for entry in report["levels"]] == [5, 13]
        assert "CERTIFIED_FINITE" in result.output

    def test_constant_sequence_evidence(self, tmp_path):
        """Test constant weights on Z^N_c show growing window counts."""
        weight = {"scheme": "weighted_l1", "alpha_rule": {"scale": 1.0, "exponent": 0.0}}
        report, _ = self.run(tmp_path, weight, "2pi")
        assert report["verdict"] == "EVIDENCE_INFINITE"
        assert report["growth"] == [11, 21, 41, 81]
        assert report["levels"][0]["exact_count"] is None

    def test_growing_sequence_certified(self, tmp_path):
        """Test alpha_l = l makes every sublevel set finite."""
        weight = {"scheme": "weighted_l1", "alpha_rule": {"scale": 1.0, "exponent": 1.0}}
        report, _ = self.run(tmp_path, weight, "2pi,4pi")
        assert report["verdict"] == "CERTIFIED_FINITE"
        assert [entry["exact_count"] for entry in report["levels"]] == [3, 7]

    def test_t_spectrum(self, tmp_path):
        """Test the leading T eigenvalues are reported in descending order."""
        report, _ = self.run(tmp_path, {"scheme": "periodic_l1", "m": 1}, "2pi")
        spectrum = report["t_spectrum"]
        assert spectrum["window"] == 40
        assert spectrum["values"][0] == 1.0
        assert spectrum["values"][1] == pytest.approx(1 / math.sqrt(1 + 4 * math.pi**2))
        assert len(spectrum["values"]) == 10
        assert spectrum["values"] == sorted(spectrum["values"], reverse=True)

    def test_descending_levels_rejected(self, tmp_path):
        """Test levels must be ascending."""
        path = tmp_path / "w.json"
        path.write_text(json.dumps({"scheme": "periodic_l1", "m": 1}))
        result = self.runner.invoke(app, ["compactness", "-i", str(path), "--levels", "4pi,2pi"])
        assert result.exit_code == 3


class TestBandsCommand:
    """Test the bands command."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def problem(self, tmp_path, doc):
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_free_bands(self, tmp_path):
        """Test the free ground band on an 11-point grid."""
        path = self.problem(tmp_path, {"lambda": [[1.0]], "truncation": {"d": 2 * math.pi * 8}})
        out = tmp_path / "bands.csv"
        result = self.runner.invoke(
            app,
            ["bands", "-i", path, "--theta-grid", "0:1:11", "--eigs", "3", "--workers", "1", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        rows = read_rows(out)
        assert rows[0] == ["theta_1", "lambda_0", "lambda_1", "lambda_2"]
        assert len(rows) == 12
        for row in rows[1:]:
            theta = float(row[0])
            expected = 4 * math.pi**2 * min((k + theta) ** 2 for k in range(-8, 9))
            assert float(row[1]) == pytest.approx(expected, abs=1e-10)

    def test_mathieu_column(self, tmp_path):
        """Test the lambda_0 column equals the library eigensolve at theta = 0 and 1/2."""
        doc = {
            "lambda": [[1.0]],
            "V": {"dim": 1, "real": True, "coeffs": [{"k": [1], "re": 1.0}, {"k": [-1], "re": 1.0}]},
            "truncation": {"d": 2 * math.pi * 32},
        }
        out = tmp_path / "bands.csv"
        result = self.runner.invoke(
            app, ["bands", "-i", self.problem(tmp_path, doc), "--theta-grid", "0:0.5:2", "-p", "1", "-o", str(out)]
        )
        assert result.exit_code == 0
        problem = problem_from_dict(doc)
        for row in read_rows(out)[1:]:
            expected = solve_bands(problem.with_theta([float(row[0])]), 1).eigenvalues[0]
            assert float(row[1]) == pytest.approx(expected, rel=1e-12)

    def test_duplicate_thetas(self, tmp_path):
        """Test a repeated Bloch frequency produces identical rows."""
        doc = {
            "lambda": [[1.0]],
            "V": {"dim": 1, "real": True, "coeffs": [{"k": [1], "re": 1.0}, {"k": [-1], "re": 1.0}]},
            "truncation": {"K": [[k] for k in range(-10, 11)]},
        }
        path = self.problem(tmp_path, doc)
        out = tmp_path / "bands.csv"
        result = self.runner.invoke(
            app, ["bands", "-i", path, "--theta-grid", "0.3:0.3:2", "--eigs", "2", "-p", "1", "-o", str(out)]
        )
        assert result.exit_code == 0
        rows = read_rows(out)
        assert rows[1] == rows[2]

    def test_default_theta(self, tmp_path):
        """Test the problem's own theta is used without --theta-grid."""
        doc = {"lambda": [[1.0]], "theta": [0.5], "truncation": {"K": [[-1], [0], [1]]}}
        out = tmp_path / "bands.csv"
        result = self.runner.invoke(app, ["bands", "-i", self.problem(tmp_path, doc), "--eigs", "1", "-o", str(out)])
        assert result.exit_code == 0
        rows = read_rows(out)
        assert len(rows) == 2
        assert float(rows[1][1]) == pytest.approx(math.pi**2, rel=1e-14)

    @pytest.mark.slow
    def test_workers_byte_identical(self, tmp_path):
        """Test one worker and a two-worker pool write byte-identical CSV files."""
        doc = {
            "lambda": [[1.0]],
            "V": {"dim": 1, "real": True, "coeffs": [{"k": [1], "re": 1.0}, {"k": [-1], "re": 1.0}]},
            "truncation": {"d": 2 * math.pi * 32},
        }
        path = self.problem(tmp_path, doc)
        outputs = []
        for workers in ("1", "2"):
            out = tmp_path / f"bands_{workers}.csv"
            result = self.runner.invoke(
                app, ["bands", "-i", path, "--theta-grid", "0:1:9", "--eigs", "3", "-p", workers, "-o", str(out)]
            )
            assert result.exit_code == 0, result.output
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert outputs[0].count(b"\n") == 10

    def test_uncertified_warning(self, tmp_path):
        """Test a singular Lambda Lambda^T is solved with a warning."""
        doc = {"lambda": [[1.0], [SQRT2]], "truncation": {"K": [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]}}
        out = tmp_path / "bands.csv"
        result = self.runner.invoke(app, ["bands", "-i", self.problem(tmp_path, doc), "--eigs", "2", "-o", str(out)])
        assert result.exit_code == 0
        assert "Warning" in result.output

    def test_not_elliptic(self, tmp_path):
        """Test a negative coefficient field exits with code 4 and reports a0."""
        doc = {
            "lambda": [[1.0]],
            "A": {"dim": 1, "n": 1, "coeffs": [{"k": [0], "re": [[-1.0]]}]},
            "truncation": {"K": [[0]]},
        }
        result = self.runner.invoke(app, ["bands", "-i", self.problem(tmp_path, doc), "--eigs", "1"])
        assert result.exit_code == 4
        assert "a0" in result.output

    def test_too_many_bands(self, tmp_path):
        """Test asking for more bands than |K| exits with code 3."""
        doc = {"lambda": [[1.0]], "truncation": {"K": [[-1], [0], [1]]}}
        result = self.runner.invoke(app, ["bands", "-i", self.problem(tmp_path, doc), "--eigs", "5", "-p", "1"])
        assert result.exit_code == 3


class TestMeanValueCommand:
    """Test the mean-value command."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def files(self, tmp_path, field, omega0=0.0):
        field_path = tmp_path / "field.json"
        field_path.write_text(json.dumps(field))
        dynamics_path = tmp_path / "dynamics.json"
        dynamics_path.write_text(json.dumps({"lambda": [[SQRT2]], "omega0": [omega0]}))
        return str(field_path), str(dynamics_path)

    def test_constant_field(self, tmp_path):
        """Test a constant field has zero error at every t."""
        field, dynamics = self.files(tmp_path, {"dim": 1, "real": True, "coeffs": [{"k": [0], "re": 2.5}]})
        out = tmp_path / "mv.csv"
        result = self.runner.invoke(
            app, ["mean-value", "-i", field, "--dynamics", dynamics, "--t-list", "1,10", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        rows = read_rows(out)
        assert rows[0] == ["t", "estimate", "reference", "abs_error"]
        assert [r[3] for r in rows[1:]] == ["0", "0"]

    def test_single_mode(self, tmp_path):
        """Test exp(2 pi i omega) averages to sin(phi)/phi in its real part."""
        field, dynamics = self.files(tmp_path, {"dim": 1, "coeffs": [{"k": [1], "re": 1.0}]})
        out = tmp_path / "mv.csv"
        result = self.runner.invoke(
            app, ["mean-value", "-i", field, "--dynamics", dynamics, "--t-list", "25,50", "-o", str(out)]
        )
        assert result.exit_code == 0
        assert "complex" in result.output
        for row in read_rows(out)[1:]:
            phase = 2 * math.pi * SQRT2 * float(row[0])
            assert float(row[1]) == pytest.approx(math.sin(phase) / phase, abs=1e-8)
            assert float(row[2]) == 0.0

    def test_identity_deformation(self, tmp_path):
        """Test the identity deformation reproduces the undeformed table."""
        cosine = {"dim": 1, "real": True, "coeffs": [{"k": [1], "re": 0.5}, {"k": [-1], "re": 0.5}]}
        field, dynamics = self.files(tmp_path, cosine, omega0=0.3)
        deformation = tmp_path / "deformation.json"
        deformation.write_text(
            json.dumps(
                {
                    "lambda": [[SQRT2]],
                    "omega0": [0.3],
                    "G": {"dim": 1, "n": 1, "coeffs": []},
                    "nu_lower": 1.0,
                    "M": 1.0,
                }
            )
        )
        plain, deformed = tmp_path / "plain.csv", tmp_path / "deformed.csv"
        args = ["mean-value", "-i", field, "--t-list", "10,20"]
        assert self.runner.invoke(app, args + ["--dynamics", dynamics, "-o", str(plain)]).exit_code == 0
        assert self.runner.invoke(app, args + ["--deformation", str(deformation), "-o", str(deformed)]).exit_code == 0
        assert plain.read_text() == deformed.read_text()

    def test_deformation_below_jacobian_bound(self, tmp_path):
        """Test nu_lower above the sampled Jacobian exits with code 4."""
        cosine = {"dim": 1, "real": True, "coeffs": [{"k": [1], "re": 0.5}, {"k": [-1], "re": 0.5}]}
        field, _ = self.files(tmp_path, cosine)
        deformation = tmp_path / "deformation.json"
        deformation.write_text(
            json.dumps(
                {
                    "n": 1,
                    "m": 1,
                    "lambda": [[SQRT2]],
                    "G": {"dim": 1, "n": 1, "coeffs": [{"k": [1], "re": [[0.25]]}, {"k": [-1], "re": [[0.25]]}]},
                    "nu_lower": 0.9,
                    "M": 2.0,
                }
            )
        )
        result = self.runner.invoke(
            app, ["mean-value", "-i", field, "--deformation", str(deformation), "--t-list", "10"]
        )
        assert result.exit_code == 4
        assert "Error" in result.output

    def test_needs_exactly_one_flow(self, tmp_path):
        """Test --dynamics and --deformation are mutually exclusive and one is required."""
        field, dynamics = self.files(tmp_path, {"dim": 1, "coeffs": []})
        result = self.runner.invoke(app, ["mean-value", "-i", field, "--t-list", "1"])
        assert result.exit_code == 3
        result = self.runner.invoke(
            app, ["mean-value", "-i", field, "--t-list", "1", "--dynamics", dynamics, "--deformation", dynamics]
        )
        assert result.exit_code == 3

    def test_nonpositive_horizon(self, tmp_path):
        """Test t must be positive."""
        field, dynamics = self.files(tmp_path, {"dim": 1, "coeffs": []})
        result = self.runner.invoke(app, ["mean-value", "-i", field, "--dynamics", dynamics, "--t-list", "0"])
        assert result.exit_code == 3


class TestErgodicCommand:
    """Test the ergodic command."""

    def setup_method(self):
        """Set up test fixtures."""
        self.runner = CliRunner()

    def test_rational_obstruction(self, tmp_path):
        """Test Lambda^T = (1, 1/2) reports k = (1, -2)."""
        path = tmp_path / "flow.json"
        path.write_text(json.dumps({"lambda": [[1.0], [0.5]]}))
        out = tmp_path / "ergodic.json"
        result = self.runner.invoke(app, ["ergodic", "-i", str(path), "--window", "10", "-o", str(out)])
        assert result.exit_code == 0
        payload = json.loads(out.read_text())
        assert payload["status"] == "OBSTRUCTION"
        assert payload["obstruction"] == [1, -2]
        assert payload["window"] == 10

    def test_irrational_flow(self, tmp_path):
        """Test Lambda^T = (1, sqrt 2) has no obstruction."""
        path = tmp_path / "flow.json"
        path.write_text(json.dumps({"lambda": [[1.0], [SQRT2]]}))
        out = tmp_path / "ergodic.json"
        result = self.runner.invoke(app, ["ergodic", "-i", str(path), "--window", "20", "-o", str(out)])
        assert result.exit_code == 0
        payload = json.loads(out.read_text())
        assert payload["status"] == "NO_OBSTRUCTION_FOUND"
        assert payload["obstruction"] is None
        assert payload["min_norm"] > 1e-9
