"""Event-driven propagation and the three single-particle theories.

run_ct: retarded evolution from a source, ending in a detection collapse.
run_at: advanced evolution from a detector, ending in a preparation collapse
        at a source; implemented by running the retarded engine on the
        time-reversed layout, so the two are duals by construction.
run_st: two-boundary run conditioned on both a source and a detector; a
        deterministic pure function, no randomness involved.

Branches move ballistically between elements, so propagation is a sequence
of discrete interaction events rather than a grid integration.  All times
below are in the clock of the scenario being propagated; records carry a
``time_convention`` marker ("forward" or "reversed") plus helpers that map
between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .elements import (
    ElementKind,
    OpticalElement,
    SplitterMode,
    arrival_time,
    collapse_child,
    is_present,
    mirror_child,
    splitter_children,
)
from .packets import (
    PRUNE_AMPLITUDE,
    SIGMA_COLLAPSE,
    ConfigurationError,
    GaussianPacket,
    PhysicalConstants,
    PreconditionError,
)
from .scenarios import Scenario, time_reverse

# Relative amplitude below which a path does not count toward which-arm
# support.
SUPPORT_EPS = 1e-9

# Two-boundary runs whose forward amplitude into the conditioned detector is
# below this weight render an identically zero product field.
WEIGHT_GATE = 1e-12

# Interaction events closer in time than this are treated as simultaneous.
TIE_TOL = 1e-6


@dataclass(frozen=True)
class Segment:
    """One branch shown from t_from (inclusive) to t_to (exclusive)."""

    packet: GaussianPacket
    t_from: float
    t_to: float  # math.inf when the branch never terminates


@dataclass(frozen=True)
class Arrival:
    time: float
    element_id: str
    packet: GaussianPacket

    @property
    def amplitude(self) -> complex:
        return self.packet.amplitude


@dataclass(frozen=True)
class Interaction:
    time: float
    element_id: str
    kind: str  # mirror | reflect | transmit | collapse-reflect | ... | skip


@dataclass(frozen=True)
class PropagationResult:
    segments: tuple[Segment, ...]
    arrivals: tuple[Arrival, ...]  # detector hits at the first detection instant
    interactions: tuple[Interaction, ...]
    draws: tuple[float, ...]  # splitter collapse draws, in event order


@dataclass(frozen=True)
class CollapseEvent:
    """A boundary replacement of the whole branch set (detection or
    preparation); splitter-collapse choices are not collapse events, they
    live in packet lineages and ``splitter_draws``."""

    time: float  # forward-clock time
    element_id: str
    kind: str  # "detection" | "preparation"
    probabilities: tuple[tuple[str, float], ...]
    draw: float | None


@dataclass(frozen=True)
class RunRecord:
    theory: str  # "ct" | "at" | "st"
    scenario_name: str
    mode: SplitterMode
    source_id: str | None
    detector_id: str | None
    duration: float
    time_convention: str  # clock of ``segments``: "forward" | "reversed"
    segments: tuple[Segment, ...]
    collapse_events: tuple[CollapseEvent, ...]
    arm_support: tuple[tuple[str, bool], ...]
    detection_time: float | None  # forward clock
    splitter_draws: tuple[float, ...] = ()
    weight: float | None = None  # st only
    backward_segments: tuple[Segment, ...] = ()  # st only, reversed clock
    forced_leg: str | None = None  # st collapse: "forward" | "backward"
    forced_arm: str | None = None

    def arm_flag(self, label: str) -> bool:
        for lab, flag in self.arm_support:
            if lab == label:
                return flag
        raise KeyError(label)


class _Flight:
    __slots__ = ("packet", "start", "skipped")

    def __init__(self, packet: GaussianPacket, start: float):
        self.packet = packet
        self.start = start
        self.skipped: set[str] = set()


def _next_hit(
    scenario: Scenario, packet: GaussianPacket, after: float, skipped: set[str]
):
    best = None
    for e in scenario.elements:
        if e.kind is ElementKind.SOURCE or e.id in skipped:
            continue
        t = arrival_time(packet, e, after)
        if t is not None and (best is None or t < best[0]):
            best = (t, e)
    return best


def emission_packet(scenario: Scenario, source_id: str) -> GaussianPacket:
    src = scenario.element(source_id)
    if src.kind is not ElementKind.SOURCE:
        raise ConfigurationError(f"{source_id} is not a source")
    return GaussianPacket(
        amplitude=1.0 + 0.0j,
        birth_time=scenario.emission_time(source_id),
        origin=src.position,
        direction=src.direction,
        lineage=((source_id, "emit"),),
    )


def propagate(
    scenario: Scenario,
    initial: GaussianPacket,
    mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
    rng: np.random.Generator | None = None,
    forced: dict[str, str] | None = None,
    stop_at_detection: bool = True,
) -> PropagationResult:
    """Run the branch tree through its interaction events.

    ``forced`` maps splitter ids to "reflect"/"transmit"; a listed splitter
    collapses deterministically to that child, any other splitter follows
    ``mode`` (ALWAYS_SPLIT splits coherently, COLLAPSE draws from ``rng``).
    Detector arrivals are collected, not sampled; sampling is the caller's
    job.

    With ``stop_at_detection`` the run ends at the first instant any branch
    reaches a present detector, and every segment is closed at that time.
    Without it (two-boundary legs), detectors record the crossing but do not
    terminate anything, so boundary-time rendering still sees the branches.
    """
    mode = SplitterMode(mode)
    forced = forced or {}
    if mode is SplitterMode.COLLAPSE and rng is None:
        raise PreconditionError("collapse mode needs an rng")
    flights = [_Flight(initial, initial.birth_time)]
    segments: list[Segment] = []
    arrivals: list[Arrival] = []
    interactions: list[Interaction] = []
    draws: list[float] = []

    while flights:
        pending: list[tuple[float, OpticalElement, _Flight]] = []
        free: list[_Flight] = []
        for f in flights:
            hit = _next_hit(scenario, f.packet, f.start, f.skipped)
            if hit is None:
                free.append(f)
            else:
                pending.append((hit[0], hit[1], f))
        if not pending:
            segments.extend(Segment(f.packet, f.start, math.inf) for f in flights)
            break
        t_min = min(t for t, _, _ in pending)
        batch = [(t, e, f) for t, e, f in pending if t <= t_min + TIE_TOL]
        scatter_batch = [be for be in batch if be[1].kind is not ElementKind.DETECTOR]

        if scatter_batch:
            # Non-detector interactions first; detector arrivals at the same
            # instant are re-discovered on the next pass.
            for t, e, f in scatter_batch:
                if not is_present(e, t):
                    f.skipped.add(e.id)
                    interactions.append(Interaction(t, e.id, "skip"))
                    continue
                flights.remove(f)
                segments.append(Segment(f.packet, f.start, t))
                if e.kind is ElementKind.MIRROR:
                    interactions.append(Interaction(t, e.id, "mirror"))
                    flights.append(_Flight(mirror_child(f.packet, e, t), t))
                    continue
                # splitter
                if e.id in forced:
                    branch = forced[e.id]
                    interactions.append(Interaction(t, e.id, f"collapse-{branch}"))
                    flights.append(_Flight(collapse_child(f.packet, e, t, branch), t))
                elif mode is SplitterMode.COLLAPSE:
                    u = float(rng.random())
                    draws.append(u)
                    branch = "reflect" if u < 0.5 else "transmit"
                    interactions.append(Interaction(t, e.id, f"collapse-{branch}"))
                    flights.append(_Flight(collapse_child(f.packet, e, t, branch), t))
                else:
                    refl, trans = splitter_children(f.packet, e, t)
                    for kid, kind in ((refl, "reflect"), (trans, "transmit")):
                        interactions.append(Interaction(t, e.id, kind))
                        if abs(kid.amplitude) >= PRUNE_AMPLITUDE:
                            flights.append(_Flight(kid, t))
            continue

        # Pure detector batch.
        batch_arrivals = []
        for t, e, f in batch:
            if not is_present(e, t):
                f.skipped.add(e.id)
                interactions.append(Interaction(t, e.id, "skip"))
            else:
                batch_arrivals.append(Arrival(t, e.id, f.packet))
                interactions.append(Interaction(t, e.id, "detect"))
                f.skipped.add(e.id)
        arrivals.extend(batch_arrivals)
        if batch_arrivals and stop_at_detection:
            t_det = batch_arrivals[0].time
            for f in flights:
                segments.append(Segment(f.packet, f.start, t_det))
            return PropagationResult(
                segments=tuple(segments),
                arrivals=tuple(arrivals),
                interactions=tuple(interactions),
                draws=tuple(draws),
            )

    return PropagationResult(
        segments=tuple(segments),
        arrivals=tuple(arrivals),
        interactions=tuple(interactions),
        draws=tuple(draws),
    )


def collect_amplitudes(result: PropagationResult) -> dict[str, complex]:
    """Coherent per-detector amplitude sums at the detection instant."""
    sums: dict[str, complex] = {}
    for a in result.arrivals:
        sums[a.element_id] = sums.get(a.element_id, 0j) + a.amplitude
    return sums


def detection_probabilities(result: PropagationResult) -> tuple[tuple[str, float], ...]:
    sums = collect_amplitudes(result)
    weights = {d: abs(a) ** 2 for d, a in sums.items()}
    total = sum(weights.values())
    if total <= 0.0:
        raise PreconditionError("no probability reached any detector")
    return tuple((d, weights[d] / total) for d in sorted(weights))


def _sample(probabilities: tuple[tuple[str, float], ...], u: float) -> str:
    acc = 0.0
    for d, p in probabilities:
        acc += p
        if u < acc:
            return d
    return probabilities[-1][0]


def _collapsed_packet(element: OpticalElement, t: float, kind: str) -> GaussianPacket:
    c = PhysicalConstants(wavenumber=0.0, sigma0=SIGMA_COLLAPSE)
    return GaussianPacket(
        amplitude=1.0 + 0.0j,
        birth_time=t,
        origin=element.position,
        direction=element.direction or (1.0, 0.0),
        constants=c,
        lineage=((element.id, kind),),
    )


def _arm_support(
    scenario: Scenario, result: PropagationResult, winner: str
) -> tuple[tuple[str, bool], ...]:
    """Which arms carried non-negligible amplitude into the winning element."""
    total = abs(collect_amplitudes(result).get(winner, 0j))
    flags = {label: False for label in scenario.arm_labels()}
    for a in result.arrivals:
        if a.element_id != winner:
            continue
        if abs(a.amplitude) < SUPPORT_EPS * total:
            continue
        for eid, kind in a.packet.lineage:
            if kind == "mirror":
                label = scenario.arm_of_mirror(eid)
                if label is not None:
                    flags[label] = True
    return tuple(sorted(flags.items()))


def _born_run(
    scenario: Scenario,
    mode: SplitterMode,
    rng: np.random.Generator,
    source_id: str | None,
):
    """Shared core of run_ct/run_at, in the clock of ``scenario``.

    Draw order per run: optional uniform boundary-policy draw, then splitter
    collapse draws in event order, then one detection draw (always consumed,
    even when the outcome is certain).
    """
    sources = sorted(e.id for e in scenario.sources)
    if not sources:
        raise ConfigurationError("scenario has no sources")
    if source_id is None:
        u = float(rng.random())
        source_id = sources[min(int(u * len(sources)), len(sources) - 1)]
    result = propagate(scenario, emission_packet(scenario, source_id), mode, rng)
    if not result.arrivals:
        raise ConfigurationError(f"no branch of {scenario.name} reached a detector")
    probs = detection_probabilities(result)
    u_det = float(rng.random())
    winner = _sample(probs, u_det)
    t_det = result.arrivals[0].time
    collapsed = _collapsed_packet(scenario.element(winner), t_det, "detection")
    segments = result.segments + (Segment(collapsed, t_det, math.inf),)
    support = _arm_support(scenario, result, winner)
    return source_id, winner, t_det, probs, u_det, segments, support, result.draws


def run_ct(
    scenario: Scenario,
    mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
    rng: np.random.Generator | None = None,
    source_id: str | None = None,
) -> RunRecord:
    """Retarded single run: emit, propagate, detect, collapse."""
    mode = SplitterMode(mode)
    if rng is None:
        raise PreconditionError("run_ct needs an rng")
    src, winner, t_det, probs, u_det, segments, support, draws = _born_run(
        scenario, mode, rng, source_id
    )
    event = CollapseEvent(
        time=t_det, element_id=winner, kind="detection", probabilities=probs, draw=u_det
    )
    return RunRecord(
        theory="ct",
        scenario_name=scenario.name,
        mode=mode,
        source_id=src,
        detector_id=winner,
        duration=scenario.duration,
        time_convention="forward",
        segments=segments,
        collapse_events=(event,),
        arm_support=support,
        detection_time=t_det,
        splitter_draws=draws,
    )


def run_at(
    scenario: Scenario,
    mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
    rng: np.random.Generator | None = None,
    detector_id: str | None = None,
) -> RunRecord:
    """Advanced single run: the wavefunction leaves the detector and runs
    backward, collapsing onto one source (a preparation, at forward t).

    Identical to run_ct on the time-reversed layout with the detector acting
    as the emitter; the record is expressed in the forward convention
    (``source_id`` is the winning source, ``detection_time`` the forward
    time of the preparation event).
    """
    mode = SplitterMode(mode)
    if rng is None:
        raise PreconditionError("run_at needs an rng")
    rev = time_reverse(scenario)
    emitter, winner, t_rev, probs, u_det, segments, support, draws = _born_run(
        rev, mode, rng, detector_id
    )
    event = CollapseEvent(
        time=scenario.duration - t_rev,
        element_id=winner,
        kind="preparation",
        probabilities=probs,
        draw=u_det,
    )
    return RunRecord(
        theory="at",
        scenario_name=scenario.name,
        mode=mode,
        source_id=winner,
        detector_id=emitter,
        duration=scenario.duration,
        time_convention="reversed",
        segments=segments,
        collapse_events=(event,),
        arm_support=support,
        detection_time=scenario.duration - t_rev,
        splitter_draws=draws,
    )


def live_packets(record: RunRecord, t_forward: float) -> tuple[GaussianPacket, ...]:
    """Branches visible at a forward-clock time (ct/at records)."""
    t = t_forward
    if record.time_convention == "reversed":
        t = record.duration - t_forward
    return tuple(s.packet for s in record.segments if s.t_from <= t < s.t_to)


def live_backward_packets(record: RunRecord, t_forward: float) -> tuple[GaussianPacket, ...]:
    """Backward-leg branches of an st record, at a forward-clock time."""
    t = record.duration - t_forward
    return tuple(s.packet for s in record.backward_segments if s.t_from <= t < s.t_to)


# ---------------------------------------------------------------------------
# Two-boundary runs


def _covers_run(presence, duration: float) -> bool:
    if presence is None:
        return True
    edge = 0.0
    for on, off in sorted(presence):
        if on > edge:
            return False
        edge = max(edge, off)
        if edge >= duration:
            return True
    return edge >= duration


def _overlaps_run(presence, duration: float) -> bool:
    if presence is None:
        return True
    return any(off > 0.0 and on < duration for on, off in presence)


def intermittent_splitters(scenario: Scenario) -> tuple[OpticalElement, ...]:
    """Splitters that are present for part of the run but not all of it."""
    out = []
    for e in scenario.elements:
        if e.kind is not ElementKind.SPLITTER:
            continue
        if _overlaps_run(e.presence, scenario.duration) and not _covers_run(
            e.presence, scenario.duration
        ):
            out.append(e)
    return tuple(out)


def _splitter_encounter_order(scenario: Scenario, source_id: str) -> list[str]:
    """Splitter ids in order of first encounter, with every splitter forced
    present, so the ordering does not depend on scheduling."""
    from dataclasses import replace as _replace

    forced_present = Scenario(
        name=scenario.name,
        duration=scenario.duration,
        elements=tuple(
            _replace(e, presence=None) if e.kind is ElementKind.SPLITTER else e
            for e in scenario.elements
        ),
        emissions=scenario.emissions,
        arms=scenario.arms,
    )
    pr = propagate(forced_present, emission_packet(forced_present, source_id))
    seen: list[str] = []
    for ev in sorted(pr.interactions, key=lambda ev: ev.time):
        el = scenario.element(ev.element_id)
        if el.kind is ElementKind.SPLITTER and ev.element_id not in seen:
            seen.append(ev.element_id)
    return seen


def _forced_choice(
    leg_scenario: Scenario, leg_source: str, target: str, removed: str
) -> tuple[dict[str, str], str | None]:
    """Which child to force at the leg's first splitter so the branch lands
    on ``target``, determined by a probe run with the intermittent splitter
    taken out (each boundary is then fed by exactly one arm)."""
    from dataclasses import replace as _replace

    probe = Scenario(
        name=leg_scenario.name,
        duration=leg_scenario.duration,
        elements=tuple(
            _replace(e, presence=()) if e.id == removed else e
            for e in leg_scenario.elements
        ),
        emissions=leg_scenario.emissions,
        arms=leg_scenario.arms,
    )
    pr = propagate(probe, emission_packet(probe, leg_source))
    hits = [a for a in pr.arrivals if a.element_id == target]
    if len(hits) != 1:
        raise ConfigurationError(
            f"which-path probe found {len(hits)} branches into {target}"
        )
    lineage = hits[0].packet.lineage
    forced: dict[str, str] = {}
    arm = None
    for eid, kind in lineage:
        if kind in ("reflect", "transmit") and not forced:
            forced[eid] = kind
        if kind == "mirror":
            label = probe.arm_of_mirror(eid)
            if label is not None:
                arm = label
    if not forced:
        raise ConfigurationError("which-path probe crossed no splitter")
    return forced, arm


def _leg_arm_amplitudes(
    scenario: Scenario, result: PropagationResult, target: str
) -> dict[str, float]:
    out = {label: 0j for label in scenario.arm_labels()}
    for a in result.arrivals:
        if a.element_id != target:
            continue
        for eid, kind in a.packet.lineage:
            if kind == "mirror":
                label = scenario.arm_of_mirror(eid)
                if label is not None:
                    out[label] += a.amplitude
    return {label: abs(v) for label, v in out.items()}


def run_st(
    scenario: Scenario,
    source_id: str,
    detector_id: str,
    mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
) -> RunRecord:
    """Two-boundary run conditioned on (source, detector).  Deterministic.

    A forward leg runs from the source and a backward leg from the detector
    on the time-reversed layout, both splitting coherently.  In collapse
    mode, a splitter that is present for only part of the run makes one leg
    collapse: the leg that meets it as its final splitter (the recombiner
    seen from that leg's direction of travel).  That leg is forced, at its
    first splitter, onto the path that the which-path probe associates with
    the leg's conditioned boundary; later splitters still split coherently.

    ``weight`` is the forward probability into the conditioned detector.
    Below the gate it is treated as zero: the product field is identically
    zero and no arm is supported.
    """
    mode = SplitterMode(mode)
    scenario.element(source_id)
    scenario.element(detector_id)
    rev = time_reverse(scenario)

    forced_fwd: dict[str, str] | None = None
    forced_bwd: dict[str, str] | None = None
    forced_leg = None
    forced_arm = None
    if mode is SplitterMode.COLLAPSE:
        inter = intermittent_splitters(scenario)
        if len(inter) > 1:
            raise ConfigurationError("more than one intermittent splitter")
        if inter:
            sp = inter[0]
            order = _splitter_encounter_order(scenario, source_id)
            if len(order) < 2 or sp.id not in order:
                raise ConfigurationError(
                    f"cannot attribute intermittent splitter {sp.id} to a leg"
                )
            if sp.id == order[-1]:
                forced_leg = "forward"
                forced_fwd, forced_arm = _forced_choice(
                    scenario, source_id, detector_id, sp.id
                )
            else:
                forced_leg = "backward"
                forced_bwd, forced_arm = _forced_choice(
                    rev, detector_id, source_id, sp.id
                )

    fwd = propagate(
        scenario,
        emission_packet(scenario, source_id),
        forced=forced_fwd,
        stop_at_detection=False,
    )
    bwd = propagate(
        rev,
        emission_packet(rev, detector_id),
        forced=forced_bwd,
        stop_at_detection=False,
    )

    amp = collect_amplitudes(fwd).get(detector_id, 0j)
    weight = abs(amp) ** 2

    labels = scenario.arm_labels()
    flags = {label: False for label in labels}
    if weight >= WEIGHT_GATE:
        fwd_arm = _leg_arm_amplitudes(scenario, fwd, detector_id)
        bwd_arm = _leg_arm_amplitudes(rev, bwd, source_id)
        masses = {label: fwd_arm[label] * bwd_arm[label] for label in labels}
        total = sum(masses.values())
        if total > 0.0:
            flags = {
                label: masses[label] > SUPPORT_EPS * total for label in labels
            }

    det_times = [a.time for a in fwd.arrivals if a.element_id == detector_id]
    return RunRecord(
        theory="st",
        scenario_name=scenario.name,
        mode=mode,
        source_id=source_id,
        detector_id=detector_id,
        duration=scenario.duration,
        time_convention="forward",
        segments=fwd.segments,
        collapse_events=(),
        arm_support=tuple(sorted(flags.items())),
        detection_time=det_times[0] if det_times else None,
        weight=weight,
        backward_segments=bwd.segments,
        forced_leg=forced_leg,
        forced_arm=forced_arm,
    )
