"""Density-field rendering and report serialization.

Frames are probability density for one-boundary runs and the magnitude of
the forward*conj(backward) product for two-boundary runs.  Output formats:

* PGM (P5, 16-bit, big-endian), normalized by the global maximum over the
  whole frame sequence so panels are comparable.
* CSV, row-major with row 0 at the top of the window, full float precision,
  preceded by comment lines giving the grid and time.

Both writers are byte-deterministic for a given record and grid.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .engines import (
    WEIGHT_GATE,
    RunRecord,
    live_backward_packets,
    live_packets,
)
from .packets import (
    ConfigurationError,
    FieldGrid,
    GaussianPacket,
    GridSpec,
    density_grid,
    product_density_grid,
)

# The standard layout spans [-800, 1600] on both axes; one packet width
# (4 sigma) of padding keeps every panel's tails inside the window.
DEFAULT_GRID = GridSpec(
    x_min=-1000.0, x_max=1800.0, y_min=-1000.0, y_max=1800.0, nx=512, ny=512
)

PANEL_EPSILON = 10.0


def default_panel_times(duration: float, epsilon: float = PANEL_EPSILON) -> tuple[float, ...]:
    """Six times that bracket the interesting moments of a standard run:
    just before the first splitter, mid-arm, before and after the
    recombiner, and either side of detection."""
    t = duration
    return (
        t / 4.0 - epsilon,
        3.0 * t / 8.0,
        5.0 * t / 8.0,
        3.0 * t / 4.0 + epsilon,
        t - epsilon,
        t + epsilon,
    )


@dataclass(frozen=True)
class FrameSequence:
    record_theory: str
    scenario_name: str
    times: tuple[float, ...]
    frames: tuple[FieldGrid, ...]
    global_max: float

    def __len__(self) -> int:
        return len(self.frames)


def _frame(record: RunRecord, t: float, spec: GridSpec) -> FieldGrid:
    if record.theory == "st":
        if record.weight is not None and record.weight < WEIGHT_GATE:
            return FieldGrid(spec=spec, values=np.zeros((spec.ny, spec.nx)), time=t)
        fwd = live_packets(record, t)
        bwd = live_backward_packets(record, t)
        return product_density_grid(fwd, bwd, spec, t, record.duration - t)
    packets = live_packets(record, t)
    tt = record.duration - t if record.time_convention == "reversed" else t
    grid = density_grid(packets, spec, tt)
    return replace(grid, time=t)


def render_frames(
    record: RunRecord,
    times: tuple[float, ...] | None = None,
    spec: GridSpec = DEFAULT_GRID,
) -> FrameSequence:
    if times is None:
        times = default_panel_times(record.duration)
        if record.theory in ("st", "at"):
            # both-leg products and reversed-clock runs only exist inside
            # [0, duration]; the boundary panel lands exactly on it
            times = tuple(min(t, record.duration) for t in times)
    for t in times:
        if record.theory == "st" and not (0.0 <= t <= record.duration):
            raise ConfigurationError("two-boundary frames need 0 <= t <= duration")
    frames = tuple(_frame(record, t, spec) for t in times)
    gmax = max((float(f.values.max()) for f in frames), default=0.0)
    return FrameSequence(
        record_theory=record.theory,
        scenario_name=record.scenario_name,
        times=tuple(times),
        frames=frames,
        global_max=gmax,
    )


def pgm_bytes(frame: FieldGrid, global_max: float) -> bytes:
    header = f"P5\n{frame.spec.nx} {frame.spec.ny}\n65535\n".encode("ascii")
    if global_max > 0.0:
        scaled = np.rint(frame.values / global_max * 65535.0)
    else:
        scaled = np.zeros_like(frame.values)
    data = np.clip(scaled, 0, 65535).astype(">u2")
    return header + data.tobytes()


def csv_bytes(frame: FieldGrid) -> bytes:
    s = frame.spec
    head = (
        f"# nx={s.nx} ny={s.ny} x_min={s.x_min!r} x_max={s.x_max!r}"
        f" y_min={s.y_min!r} y_max={s.y_max!r} time={frame.time!r}\n"
        "# row-major, first row at y_max\n"
    )
    rows = "\n".join(
        ",".join(f"{v:.17g}" for v in row) for row in frame.values
    )
    return (head + rows + "\n").encode("ascii")


def save_frames(
    seq: FrameSequence,
    directory: str,
    formats: tuple[str, ...] = ("pgm", "csv"),
    prefix: str = "frame",
) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    written = []
    for i, frame in enumerate(seq.frames):
        if "pgm" in formats:
            path = os.path.join(directory, f"{prefix}{i:03d}.pgm")
            with open(path, "wb") as f:
                f.write(pgm_bytes(frame, seq.global_max))
            written.append(path)
        if "csv" in formats:
            path = os.path.join(directory, f"{prefix}{i:03d}.csv")
            with open(path, "wb") as f:
                f.write(csv_bytes(frame))
            written.append(path)
    meta = {
        "theory": seq.record_theory,
        "scenario": seq.scenario_name,
        "times": list(seq.times),
        "global_max": seq.global_max,
        "grid": {
            "nx": seq.frames[0].spec.nx if seq.frames else None,
            "ny": seq.frames[0].spec.ny if seq.frames else None,
            "x_min": seq.frames[0].spec.x_min if seq.frames else None,
            "x_max": seq.frames[0].spec.x_max if seq.frames else None,
            "y_min": seq.frames[0].spec.y_min if seq.frames else None,
            "y_max": seq.frames[0].spec.y_max if seq.frames else None,
        },
        "frames": [
            {"index": i, "time": t} for i, t in enumerate(seq.times)
        ],
    }
    meta_path = os.path.join(directory, f"{prefix}_meta.json")
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(meta_path)
    return written


# ---------------------------------------------------------------------------
# Record serialization


def _complex_to_json(z: complex) -> list[float]:
    return [z.real, z.imag]


def packet_to_json(p: GaussianPacket) -> dict:
    return {
        "amplitude": _complex_to_json(p.amplitude),
        "birth_time": p.birth_time,
        "origin": list(p.origin),
        "direction": list(p.direction),
        "sigma0": p.constants.sigma0,
        "wavenumber": p.constants.wavenumber,
        "mass": p.constants.mass,
        "lineage": [list(step) for step in p.lineage],
    }


def _segments_to_json(segments) -> list[dict]:
    return [
        {
            "packet": packet_to_json(s.packet),
            "from": s.t_from,
            "to": None if math.isinf(s.t_to) else s.t_to,
        }
        for s in segments
    ]


def record_to_json(record: RunRecord) -> dict:
    out = {
        "theory": record.theory,
        "scenario": record.scenario_name,
        "mode": record.mode.value,
        "source": record.source_id,
        "detector": record.detector_id,
        "duration": record.duration,
        "time_convention": record.time_convention,
        "detection_time": record.detection_time,
        "arm_support": {label: flag for label, flag in record.arm_support},
        "collapse_events": [
            {
                "time": ev.time,
                "element": ev.element_id,
                "kind": ev.kind,
                "probabilities": {d: p for d, p in ev.probabilities},
                "draw": ev.draw,
            }
            for ev in record.collapse_events
        ],
        "splitter_draws": list(record.splitter_draws),
        "segments": _segments_to_json(record.segments),
    }
    if record.theory == "st":
        out["weight"] = record.weight
        out["forced_leg"] = record.forced_leg
        out["forced_arm"] = record.forced_arm
        out["backward_segments"] = _segments_to_json(record.backward_segments)
    return out


def stats_to_csv(stats) -> str:
    lines = ["index,source,detector,count,probability,expected"]
    for i, ((s, d), c, p) in enumerate(
        zip(stats.pairs, stats.counts, stats.expected_probabilities)
    ):
        lines.append(f"{i + 1},{s},{d},{c},{c / stats.n:.17g},{p:.17g}")
    return "\n".join(lines) + "\n"


def stats_to_text(stats) -> str:
    lines = [
        f"scenario {stats.scenario_name}  theory {stats.theory}  "
        f"mode {stats.mode.value}  n {stats.n}  seed {stats.seed}",
    ]
    for i, ((s, d), c, p) in enumerate(
        zip(stats.pairs, stats.counts, stats.expected_probabilities)
    ):
        lines.append(
            f"  ensemble {i + 1} ({s},{d}): {c:7d}  "
            f"p = {c / stats.n:.5f}  expected {p:.5f}"
        )
    from .harness import CHI2_CRITICAL

    lines.append(
        f"  chi2 {stats.chi_square:.3f} (critical {CHI2_CRITICAL})  "
        f"{'consistent' if stats.consistent else 'INCONSISTENT'}"
    )
    return "\n".join(lines) + "\n"
