"""Analytic free-particle Gaussian wavepackets in natural units (hbar = 1).

A packet is one coherent branch of a single-particle wavefunction: a 2D
isotropic Gaussian envelope carrying a plane-wave factor along its travel
direction.  Free evolution has an exact closed form, so propagation is a
formula, not a grid solver:

    psi(r, t) = A * (2 pi s0^2)^(-1/2) * beta^(-1)
                * exp(i k u - i k^2 dt / (2 m))
                * exp(-((u - v dt)^2 + w^2) / (4 s0^2 beta))

with dt = t - birth_time, beta = 1 + i dt / (2 m s0^2), v = k / m, and
(u, w) the coordinates of r relative to the birth point in the frame of the
travel direction.  The group speed is exactly k/m and the width disperses as
s0 * sqrt(1 + (dt / (2 m s0^2))^2).  The momentum-space oracle in
``mzsim.oracle`` is the normative check on this formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Vec2, dot, is_unit, perp, sub

# Width of the localized packet a detection/preparation event leaves behind.
# Small against the 800-unit arm spacing; any such width behaves identically
# at the tolerances used in this package.
SIGMA_COLLAPSE = 5.0

# Branches below this weight are physically irrelevant and are dropped to
# bound the branch tree.
PRUNE_AMPLITUDE = 1e-12

AMPLITUDE_TOL = 1e-9


class PreconditionError(ValueError):
    """An operation was called outside its validity domain."""


class ConfigurationError(ValueError):
    """A scenario, grid, or session configuration is unusable."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Natural-unit parameters of the particle.

    hbar is fixed to 1; wavenumber 0 is allowed so that post-measurement
    localized packets can be stationary.
    """

    hbar: float = 1.0
    mass: float = 1.0
    wavenumber: float = 0.4
    sigma0: float = 50.0

    def __post_init__(self):
        if self.hbar != 1.0:
            raise ConfigurationError("hbar is fixed to 1 (natural units)")
        if not (self.mass > 0.0 and self.sigma0 > 0.0):
            raise ConfigurationError("mass and sigma0 must be positive")
        if self.wavenumber < 0.0:
            raise ConfigurationError("wavenumber must be non-negative")
        for name in ("mass", "wavenumber", "sigma0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")

    @property
    def speed(self) -> float:
        return self.wavenumber / self.mass


@dataclass(frozen=True)
class GaussianPacket:
    """One coherent branch: complex weight plus birth kinematics.

    ``lineage`` is the append-only list of (element id, interaction kind)
    pairs the branch has accumulated, oldest first.
    """

    amplitude: complex
    birth_time: float
    origin: Vec2
    direction: Vec2
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    lineage: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not is_unit(self.direction):
            raise ConfigurationError(f"direction {self.direction} is not a unit vector")
        if abs(self.amplitude) > 1.0 + AMPLITUDE_TOL:
            raise ConfigurationError("branch amplitude modulus exceeds 1")

    def with_lineage(self, element_id: str, kind: str) -> "GaussianPacket":
        return replace(self, lineage=self.lineage + ((element_id, kind),))


def center_at(packet: GaussianPacket, t: float) -> Vec2:
    """Ballistic center of the packet at time ``t`` (group speed k/m)."""
    dt = t - packet.birth_time
    if dt < 0.0:
        raise PreconditionError(f"time {t} precedes packet birth {packet.birth_time}")
    v = packet.constants.speed
    return (
        packet.origin[0] + packet.direction[0] * v * dt,
        packet.origin[1] + packet.direction[1] * v * dt,
    )


def width_at(packet: GaussianPacket, t: float) -> float:
    """Dispersed standard deviation at time ``t``."""
    dt = t - packet.birth_time
    if dt < 0.0:
        raise PreconditionError(f"time {t} precedes packet birth {packet.birth_time}")
    c = packet.constants
    tau = dt / (2.0 * c.mass * c.sigma0**2)
    return c.sigma0 * math.sqrt(1.0 + tau * tau)


def _beta(packet: GaussianPacket, dt: float) -> complex:
    c = packet.constants
    return 1.0 + 1j * dt / (2.0 * c.mass * c.sigma0**2)


def _envelope(packet, u, w, dt):
    """Closed-form branch value at longitudinal/transverse offsets (u, w).

    ``u`` and ``w`` may be scalars or numpy arrays; the return type follows.
    Includes the branch weight.
    """
    c = packet.constants
    beta = _beta(packet, dt)
    k = c.wavenumber
    v = c.speed
    pref = packet.amplitude / (math.sqrt(2.0 * math.pi) * c.sigma0 * beta)
    phase = 1j * (k * u - 0.5 * k * k * dt / c.mass)
    spread = -((u - v * dt) ** 2 + w**2) / (4.0 * c.sigma0**2 * beta)
    return pref * np.exp(phase + spread)


def amplitude_at(packet: GaussianPacket, r: Vec2, t: float) -> complex:
    """Complex value of the branch wavefunction at point ``r`` and time ``t``."""
    dt = t - packet.birth_time
    if dt < 0.0:
        raise PreconditionError(f"time {t} precedes packet birth {packet.birth_time}")
    rel = sub(r, packet.origin)
    u = dot(rel, packet.direction)
    w = dot(rel, perp(packet.direction))
    return complex(_envelope(packet, u, w, dt))


def field_at(packets, r: Vec2, t: float) -> complex:
    """Coherent superposition of branches at one point."""
    return sum((amplitude_at(p, r, t) for p in packets), 0j)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling window, endpoints inclusive."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 512
    ny: int = 512

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigurationError("degenerate grid bounds")
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError("grid needs at least 2 samples per axis")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """(x ascending, y descending) so that row 0 of a grid is the top."""
        x = np.linspace(self.x_min, self.x_max, self.nx)
        y = np.linspace(self.y_max, self.y_min, self.ny)
        return x, y


@dataclass(frozen=True)
class FieldGrid:
    """Sampled real field (probability density or product magnitude)."""

    spec: GridSpec
    values: np.ndarray  # shape (ny, nx), row 0 at y_max
    time: float

    def mass(self) -> float:
        """Riemann-sum integral of the sampled values."""
        return float(np.sum(self.values)) * self.spec.dx * self.spec.dy


def _field_on_grid(packets, spec: GridSpec, t: float) -> np.ndarray:
    x, y = spec.axes()
    gx, gy = np.meshgrid(x, y)
    total = np.zeros_like(gx, dtype=np.complex128)
    for p in packets:
        dt = t - p.birth_time
        if dt < 0.0:
            raise PreconditionError(f"time {t} precedes packet birth {p.birth_time}")
        rx = gx - p.origin[0]
        ry = gy - p.origin[1]
        u = rx * p.direction[0] + ry * p.direction[1]
        pd = perp(p.direction)
        w = rx * pd[0] + ry * pd[1]
        total += _envelope(p, u, w, dt)
    return total


def density_grid(packets, spec: GridSpec, t: float) -> FieldGrid:
    """Probability density |sum of branches|^2 sampled on the grid."""
    f = _field_on_grid(packets, spec, t)
    return FieldGrid(spec=spec, values=(f.real**2 + f.imag**2), time=t)


def product_density_grid(
    forward_packets, backward_packets, spec: GridSpec, t: float, t_backward: float
) -> FieldGrid:
    """Two-boundary product magnitude |forward * conj(backward)| on the grid.

    The backward field is sampled at its own clock ``t_backward`` (the
    engine maps forward time t to T - t).
    """
    f = _field_on_grid(forward_packets, spec, t)
    g = _field_on_grid(backward_packets, spec, t_backward)
    return FieldGrid(spec=spec, values=np.abs(f * np.conj(g)), time=t)


def overlap(p: GaussianPacket, q: GaussianPacket, t: float | None = None) -> complex:
    """Analytic inner product <p|q> over the plane at time ``t``.

    Free evolution is unitary, so the value is independent of ``t``; the
    default evaluates at the later birth time.  Computed as a closed-form
    2D Gaussian integral with complex coefficients.
    """
    if p.constants.mass != q.constants.mass or p.constants.hbar != q.constants.hbar:
        raise PreconditionError("overlap requires packets with a common mass")
    if t is None:
        t = max(p.birth_time, q.birth_time)

    def quad(pk: GaussianPacket, conjugate: bool):
        # Returns (gamma, center, wavevector, const phase) of the exponent
        #   -gamma |r - c|^2 + i kvec . (r - o) + i phi
        dt = t - pk.birth_time
        c = pk.constants
        beta = _beta(pk, dt)
        gamma = 1.0 / (4.0 * c.sigma0**2 * beta)
        v = c.speed
        cx = pk.origin[0] + pk.direction[0] * v * dt
        cy = pk.origin[1] + pk.direction[1] * v * dt
        kx = c.wavenumber * pk.direction[0]
        ky = c.wavenumber * pk.direction[1]
        phi = -0.5 * c.wavenumber**2 * dt / c.mass
        pref = pk.amplitude / (math.sqrt(2.0 * math.pi) * c.sigma0 * beta)
        if conjugate:
            return np.conj(gamma), (cx, cy), (-kx, -ky), -phi, np.conj(pref), pk.origin
        return gamma, (cx, cy), (kx, ky), phi, pref, pk.origin

    gp, cp, kp, php, ap, op_ = quad(p, conjugate=True)
    gq, cq, kq, phq, aq, oq = quad(q, conjugate=False)

    a = gp + gq
    bx = 2.0 * gp * cp[0] + 2.0 * gq * cq[0] + 1j * (kp[0] + kq[0])
    by = 2.0 * gp * cp[1] + 2.0 * gq * cq[1] + 1j * (kp[1] + kq[1])
    const = (
        -gp * (cp[0] ** 2 + cp[1] ** 2)
        - gq * (cq[0] ** 2 + cq[1] ** 2)
        - 1j * (kp[0] * op_[0] + kp[1] * op_[1])
        - 1j * (kq[0] * oq[0] + kq[1] * oq[1])
        + 1j * (php + phq)
    )
    integral = (np.pi / a) * np.exp((bx * bx + by * by) / (4.0 * a) + const)
    return complex(ap * aq * integral)


def total_norm(packets, t: float | None = None) -> float:
    """Norm of the coherent superposition via pairwise Gram overlaps."""
    n = 0j
    for p in packets:
        for q in packets:
            n += overlap(p, q, t)
    return float(n.real)


def prune(packets) -> tuple[GaussianPacket, ...]:
    """Drop branches whose weight is numerically irrelevant."""
    return tuple(p for p in packets if abs(p.amplitude) >= PRUNE_AMPLITUDE)
