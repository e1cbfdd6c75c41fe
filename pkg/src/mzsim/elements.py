"""Optical elements: sources, detectors, mirrors, beam splitters.

Conventions:

* A mirror multiplies the branch by -1 and reflects its direction about the
  mirror normal.
* A splitter has a dielectric coating on one face.  ``dielectric_side`` is
  the unit normal of that face; a branch hits the coated face when its
  travel direction opposes that normal.  Coated-face reflection picks up
  -1/sqrt(2), glass-face reflection +1/sqrt(2); transmission is +1/sqrt(2)
  from either side.
* Presence is a tuple of half-open [on, off) intervals.  ``None`` means the
  element is always present, ``()`` never.  An absent element is completely
  inert: branches pass through it unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .geometry import Vec2, dot, is_unit, perp, reflect, scale, sub
from .packets import ConfigurationError, GaussianPacket

# A branch interacts with an element when its center line passes within this
# distance of the element position.
CAPTURE_RADIUS = 1.0

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

Interval = tuple[float, float]


class ElementKind(str, enum.Enum):
    SOURCE = "source"
    DETECTOR = "detector"
    MIRROR = "mirror"
    SPLITTER = "splitter"


class SplitterMode(str, enum.Enum):
    """How a splitter treats an incoming branch."""

    ALWAYS_SPLIT = "always-split"
    COLLAPSE = "collapse"


@dataclass(frozen=True)
class OpticalElement:
    id: str
    kind: ElementKind
    position: Vec2
    # source: direction of emitted branches; detector: direction of branches
    # it is oriented to receive.
    direction: Vec2 | None = None
    normal: Vec2 | None = None  # mirror
    dielectric_side: Vec2 | None = None  # splitter
    presence: tuple[Interval, ...] | None = None  # None = always, () = never

    def __post_init__(self):
        if self.kind in (ElementKind.SOURCE, ElementKind.DETECTOR):
            if self.direction is None or not is_unit(self.direction):
                raise ConfigurationError(f"{self.id}: needs a unit direction")
        if self.kind is ElementKind.MIRROR:
            if self.normal is None or not is_unit(self.normal):
                raise ConfigurationError(f"{self.id}: mirror needs a unit normal")
        if self.kind is ElementKind.SPLITTER:
            if self.dielectric_side is None or not is_unit(self.dielectric_side):
                raise ConfigurationError(
                    f"{self.id}: splitter needs a unit dielectric_side"
                )
        if self.presence is not None:
            for on, off in self.presence:
                if not on < off:
                    raise ConfigurationError(
                        f"{self.id}: empty presence interval [{on}, {off})"
                    )


def is_present(element: OpticalElement, t: float) -> bool:
    """Presence test; intervals are half-open [on, off)."""
    if element.presence is None:
        return True
    return any(on <= t < off for on, off in element.presence)


def splitter_factors(
    element: OpticalElement, incoming: Vec2
) -> tuple[complex, complex]:
    """(reflection factor, transmission factor) for the face being hit."""
    if element.kind is not ElementKind.SPLITTER:
        raise ConfigurationError(f"{element.id} is not a splitter")
    hits_coating = dot(incoming, element.dielectric_side) < 0.0
    r = -_INV_SQRT2 if hits_coating else _INV_SQRT2
    return complex(r), complex(_INV_SQRT2)


def transfer_amplitude(element: OpticalElement, incoming: Vec2, branch: str) -> complex:
    """Multiplicative amplitude factor for one interaction.

    ``branch`` is "reflect" or "transmit" at a splitter; mirrors only
    reflect.
    """
    if element.kind is ElementKind.MIRROR:
        if branch != "reflect":
            raise ConfigurationError("mirrors only reflect")
        return complex(-1.0)
    r, t = splitter_factors(element, incoming)
    if branch == "reflect":
        return r
    if branch == "transmit":
        return t
    raise ConfigurationError(f"unknown branch kind {branch!r}")


def arrival_time(
    packet: GaussianPacket,
    element: OpticalElement,
    after: float,
    capture_radius: float = CAPTURE_RADIUS,
) -> float | None:
    """Time the packet center passes the element, or None if it misses.

    Only crossings strictly later than ``after`` count; the center line must
    pass within ``capture_radius`` (strict) of the element position.
    Stationary packets never arrive anywhere.
    """
    v = packet.constants.speed
    if v == 0.0:
        return None
    rel = sub(element.position, packet.origin)
    along = dot(rel, packet.direction)
    off_axis = abs(dot(rel, perp(packet.direction)))
    if off_axis >= capture_radius:
        return None
    t = packet.birth_time + along / v
    if t <= after + 1e-9:
        return None
    return t


def redirect(packet: GaussianPacket, element: OpticalElement, t: float, new_direction: Vec2) -> GaussianPacket:
    """Continue the branch in a new direction from the element position.

    The packet keeps its birth time (so dispersion and carrier phase are
    continuous through the interaction) and gets a virtual origin placed so
    that its center sits exactly at the element at time ``t``.
    """
    v = packet.constants.speed
    dt = t - packet.birth_time
    origin = sub(element.position, scale(new_direction, v * dt))
    return replace(packet, origin=origin, direction=new_direction)


def mirror_child(packet: GaussianPacket, element: OpticalElement, t: float) -> GaussianPacket:
    out = reflect(packet.direction, element.normal)
    child = redirect(packet, element, t, out)
    return replace(
        child,
        amplitude=packet.amplitude * -1.0,
        lineage=packet.lineage + ((element.id, "mirror"),),
    )


def splitter_children(
    packet: GaussianPacket, element: OpticalElement, t: float
) -> tuple[GaussianPacket, GaussianPacket]:
    """(reflected child, transmitted child) with coherent factors applied."""
    r, tr = splitter_factors(element, packet.direction)
    out_r = reflect(packet.direction, element.dielectric_side)
    reflected = replace(
        redirect(packet, element, t, out_r),
        amplitude=packet.amplitude * r,
        lineage=packet.lineage + ((element.id, "reflect"),),
    )
    transmitted = replace(
        redirect(packet, element, t, packet.direction),
        amplitude=packet.amplitude * tr,
        lineage=packet.lineage + ((element.id, "transmit"),),
    )
    return reflected, transmitted


def collapse_child(
    packet: GaussianPacket, element: OpticalElement, t: float, branch: str
) -> GaussianPacket:
    """Single surviving child when the splitter collapses the branch.

    The survivor keeps the parent's full modulus and picks up only the unit
    phase of the chosen factor.
    """
    reflected, transmitted = splitter_children(packet, element, t)
    chosen = reflected if branch == "reflect" else transmitted
    factor = transfer_amplitude(element, packet.direction, branch)
    phase = factor / abs(factor)
    return replace(
        chosen,
        amplitude=packet.amplitude * phase,
        lineage=packet.lineage + ((element.id, f"collapse-{branch}"),),
    )
