"""Single-particle Mach-Zehnder wavepacket simulator.

Three ways to tell the story of one particle: retarded evolution collapsing
at a detector (run_ct), advanced evolution collapsing at a source (run_at),
and a two-boundary product conditioned on both (run_st); each under two
splitter models (coherent splitting or collapse-at-splitter).
"""

from .elements import CAPTURE_RADIUS, ElementKind, OpticalElement, SplitterMode, is_present
from .engines import (
    RunRecord,
    live_backward_packets,
    live_packets,
    propagate,
    run_at,
    run_ct,
    run_st,
)
from .harness import (
    EnsembleStats,
    analytic_distribution,
    compare_modes,
    ensemble_pairs,
    replay,
    run_ensemble,
)
from .packets import (
    GaussianPacket,
    GridSpec,
    PhysicalConstants,
    amplitude_at,
    center_at,
    density_grid,
    total_norm,
    width_at,
)
from .render import DEFAULT_GRID, render_frames, save_frames
from .rng import run_stream
from .scenarios import Scenario, builtin_scenario, load_scenario, save_scenario, time_reverse
from .service import Session, replay_log

__version__ = "0.1.0"

__all__ = [
    "CAPTURE_RADIUS",
    "DEFAULT_GRID",
    "ElementKind",
    "EnsembleStats",
    "GaussianPacket",
    "GridSpec",
    "OpticalElement",
    "PhysicalConstants",
    "RunRecord",
    "Scenario",
    "Session",
    "SplitterMode",
    "amplitude_at",
    "analytic_distribution",
    "builtin_scenario",
    "center_at",
    "compare_modes",
    "density_grid",
    "ensemble_pairs",
    "is_present",
    "live_backward_packets",
    "live_packets",
    "load_scenario",
    "propagate",
    "render_frames",
    "replay",
    "replay_log",
    "run_at",
    "run_ct",
    "run_ensemble",
    "run_st",
    "run_stream",
    "save_frames",
    "save_scenario",
    "time_reverse",
    "total_norm",
    "width_at",
]
