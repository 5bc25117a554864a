"""Directions of arrival and great-circle math on the unit sphere.

Convention: azimuth in degrees in [-180, 180), counterclockwise from +x
toward +y; elevation in degrees in [-90, 90], positive toward +z.
The Cartesian mapping is x = cos(el)cos(az), y = cos(el)sin(az), z = sin(el).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_azimuth(az_deg: float) -> float:
    """Wrap an azimuth in degrees into [-180, 180)."""
    return (az_deg + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Doa:
    """A direction of arrival; azimuth in [-180, 180), elevation in [-90, 90]."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not -180.0 <= self.azimuth < 180.0:
            raise ValueError(f"azimuth {self.azimuth} outside [-180, 180)")
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")

    @classmethod
    def of(cls, azimuth: float, elevation: float) -> "Doa":
        """Construct with the azimuth wrapped into range."""
        return cls(wrap_azimuth(float(azimuth)), float(elevation))


def doa_to_unit_vector(d: Doa) -> np.ndarray:
    """Unit vector (x, y, z) pointing toward the given direction."""
    az = math.radians(d.azimuth)
    el = math.radians(d.elevation)
    return np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )


def unit_vector_to_doa(v: np.ndarray) -> Doa:
    """Direction of a (not necessarily normalized) nonzero 3-vector."""
    x, y, z = (float(c) for c in v)
    norm = math.sqrt(x * x + y * y + z * z)
    if norm == 0.0:
        raise ValueError("zero vector has no direction")
    el = math.degrees(math.asin(max(-1.0, min(1.0, z / norm))))
    az = math.degrees(math.atan2(y, x))
    return Doa.of(az, el)


def doas_to_unit_vectors(doas) -> np.ndarray:
    """Stack unit vectors for a sequence of directions, shape (n, 3)."""
    if len(doas) == 0:
        return np.zeros((0, 3))
    az = np.radians([d.azimuth for d in doas])
    el = np.radians([d.elevation for d in doas])
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1
    )


def angular_distance(a: Doa, b: Doa) -> float:
    """Great-circle arc between two directions, in degrees, in [0, 180].

    Computed from the chord length (2*arcsin(|u-v|/2)), which stays accurate
    near 0 and 180 degrees; equal directions give exactly 0.
    """
    if a == b or (a.elevation == b.elevation and abs(a.elevation) == 90.0):
        return 0.0
    chord = float(np.linalg.norm(doa_to_unit_vector(a) - doa_to_unit_vector(b)))
    return math.degrees(2.0 * math.asin(min(1.0, chord / 2.0)))


def pairwise_angular_distance(a_xyz: np.ndarray, b_xyz: np.ndarray) -> np.ndarray:
    """Matrix of great-circle arcs in degrees between two unit-vector stacks,
    via the chord formula (bit-identical vectors give exactly 0)."""
    diff = a_xyz[:, None, :] - b_xyz[None, :, :]
    chord = np.linalg.norm(diff, axis=2)
    return np.degrees(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0)))


def random_doa(rng: np.random.Generator) -> Doa:
    """Direction drawn uniformly over the sphere."""
    z = rng.uniform(-1.0, 1.0)
    az = rng.uniform(-180.0, 180.0)
    return Doa.of(az, math.degrees(math.asin(z)))


def rotate_by_angle(d: Doa, angle_deg: float, rng: np.random.Generator) -> Doa:
    """Rotate a direction by exactly `angle_deg` along a uniformly random
    tangent direction.

    The result is at great-circle distance `angle_deg` from `d` (up to float
    rounding), which makes localization-error constructions exact.
    """
    u = doa_to_unit_vector(d)
    # Orthonormal tangent basis at u.
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(u, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(u, t1)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    tangent = math.cos(phi) * t1 + math.sin(phi) * t2
    ang = math.radians(angle_deg)
    v = math.cos(ang) * u + math.sin(ang) * tangent
    return unit_vector_to_doa(v)
