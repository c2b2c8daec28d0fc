"""BW-SNN systolic simulator - cycle-accurate simulation, reference model and cost model."""

__version__ = "0.1.0"
