"""
Integration Tests for the bwsnn command line

End-to-end runs through `main` with real files in a temp directory.
"""

import gzip
import json
import struct

import numpy as np
import pytest

from src.cli import main
from src.ingest import decode_input, write_input

pytestmark = pytest.mark.integration


@pytest.fixture
def five_conv(networks_dir):
    return str(networks_dir / "five_conv.yaml")


@pytest.fixture
def weights(tmp_path, five_conv):
    path = tmp_path / "five_conv.bwsn"
    assert main(["mkweights", "--network", five_conv, "--seed", "3", "-o", str(path)]) == 0
    return path


@pytest.fixture
def image_file(tmp_path, rng):
    return write_input(tmp_path / "image.bwin", rng.random((3, 16, 16)))


class TestSimulate:
    def test_zero_input_never_fires(self, tmp_path, five_conv, weights):
        """Test a zero image never fires and takes T*256 + 15 cycles."""
        out = tmp_path / "results.json"
        code = main(["simulate", "--network", five_conv, "--weights", str(weights), "-T", "5", "-o", str(out)])
        assert code == 0
        results = json.loads(out.read_text())
        assert results["schema_version"] == "1"
        assert results["kind"] == "simulation"
        sample = results["samples"][0]
        assert sample["counts"] == [0] * 6
        assert sample["cycle_stats"]["total_cycles"] == 5 * 256 + 15
        assert results["predicted_latency"]["cycles"] == 5 * 256 + 15
        assert results["oracle"] == "not run"

    def test_identical_runs_are_byte_identical(self, tmp_path, five_conv, weights, image_file):
        """Test two identical runs write identical bytes."""
        args = ["simulate", "--network", five_conv, "--weights", str(weights), "--input", str(image_file),
                "-T", "8", "--encoder", "bernoulli", "--seed", "5"]
        assert main(args + ["-o", str(tmp_path / "a.json")]) == 0
        assert main(args + ["-o", str(tmp_path / "b.json")]) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_stdout_json(self, five_conv, weights, image_file, capsys):
        """Test results go to stdout without -o."""
        code = main(["simulate", "--network", five_conv, "--weights", str(weights),
                     "--input", str(image_file), "-T", "2"])
        assert code == 0
        results = json.loads(capsys.readouterr().out)
        assert len(results["samples"]) == 1
        assert 0 <= results["samples"][0]["class"] < 6

    def test_trace_outputs(self, tmp_path, networks_dir):
        """Test the spike trace in JSON and the event log in CSV."""
        net = str(networks_dir / "skip_connect.yaml")
        image = tmp_path / "small.bwin"
        write_input(image, np.full((2, 8, 8), 0.5))
        out, trace = tmp_path / "results.json", tmp_path / "trace.csv"
        code = main(["simulate", "--network", net, "--input", str(image), "-T", "2", "--trace",
                     "--trace-csv", str(trace), "-o", str(out)])
        assert code == 0
        steps = json.loads(out.read_text())["samples"][0]["trace"]
        assert len(steps) == 2 and len(steps[0]) == 3
        lines = trace.read_text().splitlines()
        assert lines[0] == "cycle,layer,event,position,value"
        assert lines[1].startswith("0,0,fetch,0:0:0,")

    def test_idx_batch_with_labels(self, tmp_path, five_conv, weights, rng):
        """Test an IDX batch with labels reports per-sample classes and accuracy."""
        images = rng.integers(0, 256, size=(4, 3, 16, 16)).astype(np.uint8)
        labels = np.array([0, 1, 2, 3], dtype=np.uint8)
        image_path, label_path = tmp_path / "images-idx4-ubyte.gz", tmp_path / "labels-idx1-ubyte"
        with gzip.open(image_path, "wb") as f:
            f.write(bytes([0, 0, 0x08, 4]) + struct.pack(">4I", *images.shape) + images.tobytes())
        label_path.write_bytes(bytes([0, 0, 0x08, 1]) + struct.pack(">I", 4) + labels.tobytes())
        out = tmp_path / "results.json"
        code = main(["check", "--network", five_conv, "--weights", str(weights), "--input", str(image_path),
                     "--labels", str(label_path), "--index", "1", "--count", "3", "-T", "3", "-o", str(out)])
        assert code == 0
        results = json.loads(out.read_text())
        assert [s["index"] for s in results["samples"]] == [1, 2, 3]
        assert [s["label"] for s in results["samples"]] == [1, 2, 3]
        assert 0.0 <= results["accuracy"]["simulator"] <= 1.0
        assert results["accuracy"]["simulator"] == results["accuracy"]["oracle"]


class TestCheck:
    @pytest.mark.parametrize("name", ["skip_connect", "branch", "mixed_kinds"])
    def test_oracle_match(self, tmp_path, networks_dir, name, capsys):
        """Test check agrees with the reference on shipped topologies."""
        net = str(networks_dir / f"{name}.yaml")
        code = main(["check", "--network", net, "-T", "3", "--seed", "1", "-o", str(tmp_path / "r.json")])
        assert code == 0
        assert "oracle: match" in capsys.readouterr().out

    def test_reset_mode_override(self, tmp_path, networks_dir):
        """Test --reset-mode reaches every layer."""
        out = tmp_path / "r.json"
        net = str(networks_dir / "mixed_kinds.yaml")
        assert main(["simulate", "--check", "--network", net, "-T", "2", "--reset-mode", "to_zero", "-o", str(out)]) == 0
        assert json.loads(out.read_text())["reset_mode"] == "to_zero"


class TestErrors:
    """Exit codes of failing runs."""

    def test_malformed_config(self, tmp_path):
        """Test an unparsable config exits with 2."""
        bad = tmp_path / "bad.yaml"
        bad.write_text("layers: [\n")
        assert main(["simulate", "--network", str(bad), "-T", "1"]) == 2

    def test_unknown_config_key(self, tmp_path):
        """Test an unknown config key exits with 2."""
        bad = tmp_path / "bad.yaml"
        bad.write_text("input: {C: 1, H: 4, W: 4}\nlayers:\n  - {kind: conv, I: 1, K: 1, stripe: 2}\n")
        assert main(["area", "--network", str(bad)]) == 2

    def test_missing_weight_file(self, tmp_path, five_conv):
        """Test a missing weight file exits with 3."""
        assert main(["simulate", "--network", five_conv, "--weights", str(tmp_path / "absent.bwsn"), "-T", "1"]) == 3

    def test_weights_for_another_network(self, networks_dir, weights):
        """Test weights for another network exit with 4."""
        net = str(networks_dir / "skip_connect.yaml")
        assert main(["simulate", "--network", net, "--weights", str(weights), "-T", "1"]) == 4

    def test_illegal_network(self, tmp_path):
        """Test an illegal network exits with 4."""
        bad = tmp_path / "tiny.yaml"
        bad.write_text("input: {C: 1, H: 2, W: 2}\nlayers:\n  - {kind: conv, I: 3, K: 1}\n")
        assert main(["area", "--network", str(bad)]) == 4

    def test_image_shape_mismatch(self, tmp_path, five_conv):
        """Test an image of the wrong shape exits with 4."""
        image = write_input(tmp_path / "image.bwin", np.zeros((1, 28, 28)))
        assert main(["simulate", "--network", five_conv, "--input", str(image), "-T", "1"]) == 4

    def test_negative_time_steps(self, five_conv):
        """Test negative T exits with 2."""
        assert main(["simulate", "--network", five_conv, "-T", "-1"]) == 2


class TestArea:
    def test_json(self, five_conv, capsys):
        """Test the area report and latency as JSON."""
        assert main(["area", "--network", five_conv, "-T", "37"]) == 0
        results = json.loads(capsys.readouterr().out)
        assert results["report"]["totals"]["total_um2"] == 2080455
        assert results["latency"]["cycles"] == 9487

    def test_csv_to_file(self, tmp_path, five_conv):
        """Test the area report as CSV with one row per layer and a total."""
        out = tmp_path / "area.csv"
        assert main(["area", "--network", five_conv, "--format", "csv", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("entry,pe_area_um2")
        assert len(lines) == 1 + 5 + 1
        assert lines[-1].startswith("total,")

    def test_normalized(self, five_conv, capsys):
        """Test --normalize 45 quarters the 90 nm area."""
        assert main(["area", "--network", five_conv, "--normalize", "45"]) == 0
        totals = json.loads(capsys.readouterr().out)["report"]["totals"]
        assert totals["total_um2"] == pytest.approx(2080455 / 4)


class TestOtherCommands:
    def test_sweep(self, tmp_path, sweeps_dir):
        """Test sweep entries are sorted by area."""
        out = tmp_path / "sweep.json"
        assert main(["sweep", str(sweeps_dir / "channel_width.yaml"), "--workers", "2", "-o", str(out)]) == 0
        entries = json.loads(out.read_text())["entries"]
        assert entries
        assert [e["total_um2"] for e in entries] == sorted(e["total_um2"] for e in entries)

    def test_sweep_csv_budget(self, sweeps_dir, capsys):
        """Test a sweep under budget as CSV."""
        assert main(["sweep", str(sweeps_dir / "five_conv.yaml"), "--budget", "3e6", "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("five_conv:")

    def test_encode(self, tmp_path, image_file):
        """Test encode writes T binary frames."""
        out = tmp_path / "spikes.bwin"
        assert main(["encode", "--input", str(image_file), "-T", "6", "-o", str(out)]) == 0
        stream = decode_input(out.read_bytes())
        assert stream.shape == (6, 3, 16, 16)
        assert set(np.unique(stream)) <= {0.0, 1.0}

    def test_mkweights_ones(self, tmp_path, networks_dir):
        """Test mkweights writes an all-ones weight file."""
        out = tmp_path / "ones.bwsn"
        assert main(["mkweights", "--network", str(networks_dir / "mixed_kinds.yaml"), "--mode", "ones", "-o", str(out)]) == 0
        assert out.read_bytes()[:4] == b"BWSN"

    def test_validate(self, networks_dir, sweeps_dir, capsys):
        """Test validate passes on shipped configs."""
        assert main(["validate", "--networks", str(networks_dir), "--sweeps", str(sweeps_dir)]) == 0
        assert "CONFIG VALIDATION REPORT" in capsys.readouterr().out

    def test_validate_missing_path(self, tmp_path, networks_dir):
        """Test validate exits with 3 for a missing directory."""
        assert main(["validate", "--networks", str(networks_dir), "--sweeps", str(tmp_path / "absent")]) == 3
