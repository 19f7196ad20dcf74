from .bench import (
    BENCH_COLUMNS,
    FIELD_COLUMNS,
    DrawerRecord,
    Plane,
    field_from_episode,
    read_results,
    run_drawer_bench,
    sample_potential_field,
    summarize,
    write_field,
    write_results,
)
from .episode import MODES, TRACE_COLUMNS, EpisodeResult, phases, run_episode, snapshot
from .network import DrawerPrior, NetworkConfig, behavior_label, build_drawer_network, drawer_goal, drawer_sampler
from .scenario import PRESETS, Scenario, ablation_conditions, load_conditions, load_scenario, scenario_from_mapping
from .sim import DisturbanceEvent, DrawerWorld, RobotTruth, ScenarioError, SimConfig, sim_step

__all__ = [
    "BENCH_COLUMNS",
    "FIELD_COLUMNS",
    "MODES",
    "PRESETS",
    "TRACE_COLUMNS",
    "DisturbanceEvent",
    "DrawerPrior",
    "DrawerRecord",
    "DrawerWorld",
    "EpisodeResult",
    "NetworkConfig",
    "Plane",
    "RobotTruth",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "ablation_conditions",
    "behavior_label",
    "build_drawer_network",
    "drawer_goal",
    "drawer_sampler",
    "field_from_episode",
    "load_conditions",
    "load_scenario",
    "phases",
    "read_results",
    "run_drawer_bench",
    "run_episode",
    "sample_potential_field",
    "scenario_from_mapping",
    "sim_step",
    "snapshot",
    "summarize",
    "write_field",
    "write_results",
]
