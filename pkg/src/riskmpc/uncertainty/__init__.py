"""Forecast fans, scenario trees and their reduction."""
from .forecast import ForecasterSpec, SignalModel, WindCurve, simulate_fan, simulate_raw
from .io import read_fan_csv, read_tree_csv, write_fan_csv, write_tree_csv
from .reduction import HelpSpec, fast_forward_select, inject_help, kantorovich_distance, reduce_to_tree
from .tree import ScenarioFan, ScenarioTree, build_tree, chain_tree

__all__ = [
    "ForecasterSpec", "SignalModel", "WindCurve", "simulate_fan", "simulate_raw",
    "read_fan_csv", "read_tree_csv", "write_fan_csv", "write_tree_csv",
    "HelpSpec", "fast_forward_select", "inject_help", "kantorovich_distance", "reduce_to_tree",
    "ScenarioFan", "ScenarioTree", "build_tree", "chain_tree",
]
