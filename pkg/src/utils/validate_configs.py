import logging
from pathlib import Path
from typing import Dict, List, Optional

from src.config import settings
from src.costmodel import enumerate_family, load_sweep_family
from src.errors import BWSNNError
from src.netmodel import build_graph, load_network_config, validate

logger = logging.getLogger(__name__)

CONFIG_SUFFIXES = (".yaml", ".yml", ".json")


def _config_files(path: Path) -> List[Path]:
    if path.is_file():
        return [path]
    if not path.exists():
        return []
    return sorted(p for p in path.iterdir() if p.suffix in CONFIG_SUFFIXES)


class ConfigValidator:
    """Scans network and sweep configs and reports every problem found."""

    def __init__(self, networks_path: Optional[str] = None, sweeps_path: Optional[str] = None):
        self.networks_path = Path(networks_path or settings.NETWORKS_PATH)
        self.sweeps_path = Path(sweeps_path or settings.SWEEPS_PATH)

    def check_network(self, path: Path) -> List[str]:
        try:
            graph = build_graph(load_network_config(path))
        except BWSNNError as e:
            return [f"{type(e).__name__}: {e}"]
        return [str(v) for v in validate(graph, check_kernels=False)]

    def check_sweep(self, path: Path) -> List[str]:
        try:
            family = load_sweep_family(path)
            candidates = enumerate_family(family)
        except BWSNNError as e:
            return [f"{type(e).__name__}: {e}"]
        logger.debug(f"{path.name}: {len(candidates)} candidate topologies")
        return []

    def validate_all(self) -> Dict:
        """Check every config; returns {"checked": n, "issues": {file: [...]}, "missing": [...]}."""
        logger.info("Validating shipped configs...")
        results = {"checked": 0, "issues": {}, "missing": []}

        for root, check in ((self.networks_path, self.check_network), (self.sweeps_path, self.check_sweep)):
            if not root.exists():
                logger.error(f"Config path not found: {root}")
                results["missing"].append(str(root))
                continue
            for path in _config_files(root):
                results["checked"] += 1
                issues = check(path)
                if issues:
                    results["issues"][str(path)] = issues

        return results

    def print_report(self, results: Dict) -> None:
        print("\n" + "=" * 60)
        print("CONFIG VALIDATION REPORT")
        print("=" * 60)
        checked = results["checked"]
        bad = len(results["issues"])
        print(f"Files checked:     {checked}")
        print(f"Valid:             {checked - bad}")
        print(f"With violations:   {bad}")
        print(f"Missing paths:     {len(results['missing'])}")
        print("-" * 60)

        for name, issues in results["issues"].items():
            print(f"\n{name}:")
            for issue in issues:
                print(f"   - {issue}")

        for path in results["missing"]:
            print(f"\nmissing: {path}")

        print("\n" + "=" * 60)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    validator = ConfigValidator()
    report = validator.validate_all()
    validator.print_report(report)
    raise SystemExit(1 if report["issues"] or report["missing"] else 0)
