"""Interferometer layouts, their scheduling, and scenario (de)serialization.

The standard square layout (all distances 800, speed 0.4, so one leg takes
2000 time units):

            M1 ----------- B2 --- D1
             |              |
             |   (upper)    |
  S1 ------ B1 ----------- M2      D2 is above B2
             |   (lower)
            S2

S1 fires to the right, S2 fires upward; both beams meet at splitter B1.
The upper arm runs B1 -> M1 -> B2, the lower arm B1 -> M2 -> B2.  D1 sits
on the B2 exit that continues to the right, D2 on the exit that continues
upward.  A full traversal takes 8000 time units.

Scenario files are JSON (``format: 1``).  Element presence can be given
directly as intervals or built from a ``timeline`` of insert/remove actions;
both spellings load to identical scenarios.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .elements import ElementKind, Interval, OpticalElement, is_present
from .geometry import neg
from .packets import ConfigurationError

ARM_LENGTH = 800.0
STANDARD_DURATION = 8000.0

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    elements: tuple[OpticalElement, ...]
    # source id -> emission time (time reversal requires these to be 0)
    emissions: tuple[tuple[str, float], ...]
    # arm label -> mirror id, used to report which-arm support
    arms: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ConfigurationError("duration must be positive")
        ids = [e.id for e in self.elements]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("element ids must be unique")
        known = set(ids)
        for sid, t in self.emissions:
            el = self.element(sid)
            if el.kind is not ElementKind.SOURCE:
                raise ConfigurationError(f"emission from non-source {sid}")
            if not 0.0 <= t < self.duration:
                raise ConfigurationError(f"emission time {t} outside run")
        for _, mid in self.arms:
            if mid not in known:
                raise ConfigurationError(f"arm refers to unknown element {mid}")

    def element(self, element_id: str) -> OpticalElement:
        for e in self.elements:
            if e.id == element_id:
                return e
        raise KeyError(element_id)

    def of_kind(self, kind: ElementKind) -> tuple[OpticalElement, ...]:
        return tuple(e for e in self.elements if e.kind is kind)

    @property
    def sources(self) -> tuple[OpticalElement, ...]:
        return self.of_kind(ElementKind.SOURCE)

    @property
    def detectors(self) -> tuple[OpticalElement, ...]:
        return self.of_kind(ElementKind.DETECTOR)

    def emission_time(self, source_id: str) -> float:
        for sid, t in self.emissions:
            if sid == source_id:
                return t
        raise KeyError(source_id)

    def arm_labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.arms)

    def arm_of_mirror(self, mirror_id: str) -> str | None:
        for label, mid in self.arms:
            if mid == mirror_id:
                return label
        return None


def _reverse_intervals(
    presence: tuple[Interval, ...] | None, duration: float
) -> tuple[Interval, ...] | None:
    if presence is None:
        return None
    flipped = sorted((duration - off, duration - on) for on, off in presence)
    return tuple(flipped)


def time_reverse(scenario: Scenario) -> Scenario:
    """Map the layout to the one seen by a branch running backward in time.

    Sources become detectors and vice versa (with flipped directions);
    mirrors and splitters keep their geometry; presence intervals [a, b)
    map to [T-b, T-a).  Requires all emissions at t = 0 so that applying
    the operation twice gives back the input exactly.
    """
    for sid, t in scenario.emissions:
        if t != 0.0:
            raise ConfigurationError("time reversal requires emissions at t = 0")
    elements = []
    emissions = []
    for e in scenario.elements:
        pres = _reverse_intervals(e.presence, scenario.duration)
        if e.kind is ElementKind.SOURCE:
            elements.append(
                replace(e, kind=ElementKind.DETECTOR, direction=neg(e.direction), presence=pres)
            )
        elif e.kind is ElementKind.DETECTOR:
            elements.append(
                replace(e, kind=ElementKind.SOURCE, direction=neg(e.direction), presence=pres)
            )
            emissions.append((e.id, 0.0))
        else:
            elements.append(replace(e, presence=pres))
    return Scenario(
        name=scenario.name,
        duration=scenario.duration,
        elements=tuple(elements),
        emissions=tuple(emissions),
        arms=scenario.arms,
    )


def _standard_elements(
    b1_presence: tuple[Interval, ...] | None,
    b2_presence: tuple[Interval, ...] | None,
) -> tuple[OpticalElement, ...]:
    a = ARM_LENGTH
    diag = (-1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
    return (
        OpticalElement("S1", ElementKind.SOURCE, (-a, 0.0), direction=(1.0, 0.0)),
        OpticalElement("S2", ElementKind.SOURCE, (0.0, -a), direction=(0.0, 1.0)),
        OpticalElement(
            "B1",
            ElementKind.SPLITTER,
            (0.0, 0.0),
            dielectric_side=diag,
            presence=b1_presence,
        ),
        OpticalElement("M1", ElementKind.MIRROR, (0.0, a), normal=diag),
        OpticalElement("M2", ElementKind.MIRROR, (a, 0.0), normal=diag),
        OpticalElement(
            "B2",
            ElementKind.SPLITTER,
            (a, a),
            dielectric_side=(1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)),
            presence=b2_presence,
        ),
        OpticalElement("D1", ElementKind.DETECTOR, (2.0 * a, a), direction=(1.0, 0.0)),
        OpticalElement("D2", ElementKind.DETECTOR, (a, 2.0 * a), direction=(0.0, 1.0)),
    )


def _standard(name: str, b1_presence, b2_presence) -> Scenario:
    return Scenario(
        name=name,
        duration=STANDARD_DURATION,
        elements=_standard_elements(b1_presence, b2_presence),
        emissions=(("S1", 0.0), ("S2", 0.0)),
        arms=(("upper", "M1"), ("lower", "M2")),
    )


# The six standard experiments map onto four layouts; the advanced-theory
# runs "abe" and "ame" reuse the baseline and removed-recombiner layouts.
_BUILTINS = {
    "be": ("be", None, None),
    "me": ("me", None, ()),
    "ce": ("ce", None, ((5000.0, 8000.0),)),
    "abe": ("abe", None, None),
    "ame": ("ame", None, ()),
    "ace": ("ace", ((0.0, 3000.0),), None),
}


def builtin_scenario(name: str) -> Scenario:
    """Standard layouts by experiment name.

    be/abe: both splitters in place for the whole run.
    me/ame: recombining splitter B2 absent for the whole run.
    ce: B2 inserted at t = 5000, while the branches are between the mirrors
        and the B2 position.
    ace: B1 removed at t = 3000, after the branches have passed it.
    """
    key = name.lower()
    if key not in _BUILTINS:
        raise ConfigurationError(
            f"unknown scenario {name!r}; choose from {sorted(_BUILTINS)}"
        )
    label, b1, b2 = _BUILTINS[key]
    return _standard(label, b1, b2)


# ---------------------------------------------------------------------------
# JSON serialization


def _presence_to_json(presence):
    if presence is None:
        return None
    return [[on, off] for on, off in presence]


def _element_to_json(e: OpticalElement) -> dict:
    out: dict = {"id": e.id, "kind": e.kind.value, "position": list(e.position)}
    if e.kind is ElementKind.SOURCE:
        out["emit_direction"] = list(e.direction)
    elif e.kind is ElementKind.DETECTOR:
        out["accept_direction"] = list(e.direction)
    elif e.kind is ElementKind.MIRROR:
        out["normal"] = list(e.normal)
    else:
        out["dielectric_side"] = list(e.dielectric_side)
    if e.presence is not None:
        out["presence"] = _presence_to_json(e.presence)
    return out


def scenario_to_json(scenario: Scenario) -> dict:
    return {
        "format": FORMAT_VERSION,
        "name": scenario.name,
        "duration": scenario.duration,
        "elements": [_element_to_json(e) for e in scenario.elements],
        "emissions": {sid: t for sid, t in scenario.emissions},
        # a list, not an object: arm order is presentation order
        "arms": [[label, mid] for label, mid in scenario.arms],
    }


def _vec(raw, what: str) -> tuple[float, float]:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise ConfigurationError(f"{what} must be a pair of numbers")
    return (float(raw[0]), float(raw[1]))


def _element_from_json(raw: dict) -> OpticalElement:
    try:
        kind = ElementKind(raw["kind"])
    except (KeyError, ValueError):
        raise ConfigurationError(f"element {raw.get('id')!r}: bad kind")
    presence = raw.get("presence")
    if presence is not None:
        presence = tuple((float(on), float(off)) for on, off in presence)
    kwargs: dict = {}
    if kind is ElementKind.SOURCE:
        kwargs["direction"] = _vec(raw["emit_direction"], "emit_direction")
    elif kind is ElementKind.DETECTOR:
        kwargs["direction"] = _vec(raw["accept_direction"], "accept_direction")
    elif kind is ElementKind.MIRROR:
        kwargs["normal"] = _vec(raw["normal"], "normal")
    else:
        kwargs["dielectric_side"] = _vec(raw["dielectric_side"], "dielectric_side")
    return OpticalElement(
        id=str(raw["id"]),
        kind=kind,
        position=_vec(raw["position"], "position"),
        presence=presence,
        **kwargs,
    )


def _apply_timeline(
    elements: list[OpticalElement], timeline: list[dict], duration: float
) -> list[OpticalElement]:
    """Turn insert/remove actions into presence intervals.

    Each action sets the element's state from its time onward; the state
    before the first action is the element's own presence evaluated at the
    first-action instant... kept simple: before the first action the element
    follows its declared presence; from each action time the state is forced
    until the next action.
    """
    by_id = {e.id: e for e in elements}
    actions: dict[str, list[tuple[float, str]]] = {}
    for ev in timeline:
        eid = str(ev["element"])
        if eid not in by_id:
            raise ConfigurationError(f"timeline refers to unknown element {eid}")
        action = ev["action"]
        if action not in ("insert", "remove"):
            raise ConfigurationError(f"unknown timeline action {action!r}")
        actions.setdefault(eid, []).append((float(ev["t"]), action))
    out = list(elements)
    for eid, evs in actions.items():
        evs.sort()
        e = by_id[eid]
        first_t = evs[0][0]
        intervals: list[Interval] = []
        if e.presence is None:
            if first_t > 0.0:
                intervals.append((0.0, first_t))
        else:
            for on, off in e.presence:
                if on < first_t:
                    intervals.append((on, min(off, first_t)))
        for i, (t, action) in enumerate(evs):
            end = evs[i + 1][0] if i + 1 < len(evs) else duration
            if action == "insert" and t < end:
                intervals.append((t, end))
        out[out.index(e)] = replace(e, presence=tuple(intervals))
    return out


def scenario_from_json(raw: dict) -> Scenario:
    if raw.get("format") != FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported scenario format {raw.get('format')!r} (want {FORMAT_VERSION})"
        )
    duration = float(raw["duration"])
    elements = [_element_from_json(e) for e in raw.get("elements", [])]
    timeline = raw.get("timeline", [])
    if timeline:
        elements = _apply_timeline(elements, timeline, duration)
    emissions = tuple(sorted((str(k), float(v)) for k, v in raw.get("emissions", {}).items()))
    raw_arms = raw.get("arms", [])
    if isinstance(raw_arms, dict):
        raw_arms = list(raw_arms.items())
    arms = tuple((str(label), str(mid)) for label, mid in raw_arms)
    return Scenario(
        name=str(raw.get("name", "unnamed")),
        duration=duration,
        elements=tuple(elements),
        emissions=emissions,
        arms=arms,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_json(json.load(f))


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_json(scenario), f, indent=2, sort_keys=True)
        f.write("\n")


def resolve_scenario(spec: str) -> Scenario:
    """Accept a builtin name or a path to a scenario JSON file."""
    if spec.lower() in _BUILTINS:
        return builtin_scenario(spec)
    if spec.endswith(".json"):
        return load_scenario(spec)
    raise ConfigurationError(f"unknown scenario {spec!r}")


def presence_map(scenario: Scenario, t: float) -> dict[str, bool]:
    return {e.id: is_present(e, t) for e in scenario.elements}
