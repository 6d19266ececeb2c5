"""Predictive directed fuzzing of synthetic byte-driven programs.

The package fuzzes generated control-flow programs toward a chosen
basic block. Seeds are valued by a weighted mix of target closeness,
estimated path difficulty, execution speed, and favored status; a
probabilistic ensemble learns path-transition dynamics, an actor-critic
learns where to mutate, and a particle swarm tunes per-seed fuzzing
strategies online.
"""

from .engine import Campaign, CampaignConfig, run_campaign
from .program import GenerationConfig, ProgramSpec, execute, generate_program
from .reporting import CampaignReport, CycleReport, compare_campaigns, load_report

__version__ = "0.1.0"

__all__ = [
    "Campaign",
    "CampaignConfig",
    "CampaignReport",
    "CycleReport",
    "GenerationConfig",
    "ProgramSpec",
    "compare_campaigns",
    "execute",
    "generate_program",
    "load_report",
    "run_campaign",
    "__version__",
]
