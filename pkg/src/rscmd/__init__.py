"""Energy-efficient RS-CMD downlink beamforming with scheduled private-message removal."""

from rscmd.scenario import Scenario, SystemConfig, dbm_to_watts, generate_scenario, pathloss
from rscmd.grouping import GroupingResult, build_grouping, form_groups
from rscmd.rates import BeamformerSet, RateAllocation, achievable_rates, energy_efficiency, total_transmit_power
from rscmd.optimizer import OptimizerOptions, QosPartition, Solution, solve_ee_max
from rscmd.pmr import PmrEvent, PmrTrace, run_pmr_schedule
from rscmd.experiment import ExperimentConfig, run_experiment

__all__ = [
    "BeamformerSet",
    "ExperimentConfig",
    "GroupingResult",
    "OptimizerOptions",
    "PmrEvent",
    "PmrTrace",
    "QosPartition",
    "RateAllocation",
    "Scenario",
    "Solution",
    "SystemConfig",
    "achievable_rates",
    "build_grouping",
    "dbm_to_watts",
    "energy_efficiency",
    "form_groups",
    "generate_scenario",
    "pathloss",
    "run_experiment",
    "run_pmr_schedule",
    "solve_ee_max",
    "total_transmit_power",
]
