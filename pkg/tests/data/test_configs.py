"""
Data Quality Tests for the shipped network and sweep configs

Every file under config/ must parse, build a legal graph (or an
enumerable family) and stay consistent with the reference numbers.
"""

from pathlib import Path

import pytest
import yaml

from src.costmodel import enumerate_family, load_sweep_family
from src.models import NetworkConfig
from src.netmodel import build_graph, load_network_config, validate
from src.utils.validate_configs import ConfigValidator

pytestmark = pytest.mark.data

CONFIG_ROOT = Path(__file__).resolve().parent.parent.parent / "config"
NETWORK_FILES = sorted((CONFIG_ROOT / "networks").glob("*.yaml"))
SWEEP_FILES = sorted((CONFIG_ROOT / "sweeps").glob("*.yaml"))


class TestNetworkConfigs:
    """Shipped topologies."""

    def test_files_exist(self, networks_dir):
        """Test the network config directory ships every topology."""
        assert networks_dir.exists(), f"Network config directory not found: {networks_dir}"
        assert len(NETWORK_FILES) >= 5

    @pytest.mark.parametrize("path", NETWORK_FILES, ids=lambda p: p.stem)
    def test_schema(self, path):
        """Test the file matches the network config schema."""
        with open(path, "r", encoding="utf-8") as f:
            NetworkConfig(**yaml.safe_load(f))

    @pytest.mark.parametrize("path", NETWORK_FILES, ids=lambda p: p.stem)
    def test_graph_is_legal(self, path):
        """Test the topology has no violations."""
        graph = build_graph(load_network_config(path))
        assert validate(graph, check_kernels=False) == [], f"{path.name} has violations"

    @pytest.mark.parametrize("path", NETWORK_FILES, ids=lambda p: p.stem)
    def test_name_matches_file(self, path):
        """Test the config name matches its file name."""
        assert load_network_config(path).name == path.stem

    def test_every_layer_kind_is_covered(self):
        """Test the shipped configs use every layer kind."""
        kinds = {layer.kind for path in NETWORK_FILES for layer in load_network_config(path).layers}
        assert {k.value for k in kinds} == {"conv", "depthwise", "fc", "avgpool"}


class TestSweepConfigs:
    """Shipped sweep families."""

    @pytest.mark.parametrize("path", SWEEP_FILES, ids=lambda p: p.stem)
    def test_family_enumerates(self, path):
        """Test the family expands to at least one candidate."""
        assert len(enumerate_family(load_sweep_family(path))) >= 1

    def test_channel_width_size(self, sweeps_dir):
        """Test the channel-width family has 36 candidates."""
        # K in {8,16,24,32} x repeat in {2,3,4} x final K in {4,6,10}
        assert len(enumerate_family(load_sweep_family(sweeps_dir / "channel_width.yaml"))) == 36


class TestConfigValidator:
    """The validator script agrees with the checks above."""

    def test_shipped_configs_are_clean(self, networks_dir, sweeps_dir):
        """Test the validator finds no issues in shipped configs."""
        report = ConfigValidator(str(networks_dir), str(sweeps_dir)).validate_all()
        assert report["issues"] == {}
        assert report["missing"] == []
        assert report["checked"] == len(NETWORK_FILES) + len(SWEEP_FILES)

    def test_reports_broken_files(self, tmp_path):
        """Test the validator reports broken files and missing paths."""
        networks = tmp_path / "networks"
        networks.mkdir()
        (networks / "bad.yaml").write_text("input: {C: 1, H: 2, W: 2}\nlayers:\n  - {kind: conv, I: 3, K: 1}\n")
        (networks / "good.yaml").write_text("input: {C: 1, H: 4, W: 4}\nlayers:\n  - {kind: conv, I: 3, K: 1}\n")
        report = ConfigValidator(str(networks), str(tmp_path / "absent")).validate_all()
        assert report["checked"] == 2
        assert list(report["issues"]) == [str(networks / "bad.yaml")]
        assert report["missing"] == [str(tmp_path / "absent")]

    def test_print_report(self, networks_dir, sweeps_dir, capsys):
        """Test the report banner is printed."""
        validator = ConfigValidator(str(networks_dir), str(sweeps_dir))
        validator.print_report(validator.validate_all())
        assert "CONFIG VALIDATION REPORT" in capsys.readouterr().out
