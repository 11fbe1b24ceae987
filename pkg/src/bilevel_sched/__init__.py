"""Exact optimization for optimistic bilevel scheduling on two-speed
uniform parallel machines.

The leader selects ``n`` of ``N`` jobs to minimise the weighted number of
tardy jobs; the follower schedules them to minimise total completion time
and, among those schedules, the leader's cost.

Main entry points:

* :func:`solve` - branch-and-bound with memorization and column-generation bounds
* :func:`dp_solve` - exact dynamic program for small instances
* :func:`brute_bilevel` - exhaustive oracle
* :func:`build_mip` / :func:`export` - MIP model and LP/MPS files
"""
from .blocks import BlockStructure, build_blocks, is_block_respecting
from .bnb import BnbConfig, BnbResult, solve
from .core import (FAST, SLOW, Evaluation, Instance, InstanceFormatError, Job, MachinePark,
                   Schedule, ScheduleError, evaluate, generate, instance_to_json, read_instance,
                   write_instance)
from .exact_dp import DpBudgetError, dp_solve
from .follower import adversarial_solve, equal_size_assign, spt_fam
from .mip import build_mip, export, run_external, solve_highs
from .oracle import OracleBudgetError, brute_bilevel, brute_follower, brute_max_completion

__version__ = "0.1.0"

__all__ = [
    "FAST", "SLOW", "BlockStructure", "BnbConfig", "BnbResult", "DpBudgetError", "Evaluation",
    "Instance", "InstanceFormatError", "Job", "MachinePark", "OracleBudgetError", "Schedule",
    "ScheduleError", "adversarial_solve", "brute_bilevel", "brute_follower",
    "brute_max_completion", "build_blocks", "build_mip", "dp_solve", "equal_size_assign",
    "evaluate", "export", "generate", "instance_to_json", "is_block_respecting", "read_instance",
    "run_external", "solve", "solve_highs", "spt_fam", "write_instance",
]
