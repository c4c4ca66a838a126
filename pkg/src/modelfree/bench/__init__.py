"""Scenario runner for the benchmark plants."""

from .catalog import CatalogEntry, catalog
from .config import ScenarioConfig, load_config, load_configs
from .runner import Comparison, RunArtifact, compare, run_scenario

__all__ = [
    "CatalogEntry",
    "Comparison",
    "RunArtifact",
    "ScenarioConfig",
    "catalog",
    "compare",
    "load_config",
    "load_configs",
    "run_scenario",
]
