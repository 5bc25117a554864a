"""Microphone-array models and anechoic steering responses.

Two array kinds are supported: an ideal first-order Ambisonic encoder
(ACN channel order W, Y, Z, X with SN3D normalization) and a tetrahedral
capsule array modeled as plane-wave delays at the sensor positions. Either
kind may instead carry measured steering responses on an equirectangular
grid, in which case off-grid queries are answered by a least-squares
spherical-harmonic fit of the grid responses, evaluated per frequency bin.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, lpmv

from .geometry import Doa, doa_to_unit_vector

SAMPLE_RATE = 24000
SPEED_OF_SOUND_M_S = 343.0
DELAY_KERNEL_TAPS = 64
DELAY_KERNEL_LATENCY = DELAY_KERNEL_TAPS // 2
REFERENCE_DISTANCE_M = 1.0

# ACN order for first-order channels.
FOA_CHANNELS = ("W", "Y", "Z", "X")

DEFAULT_TETRA_SENSORS = (
    (Doa(45.0, 35.0), 0.042),
    (Doa(-45.0, -35.0), 0.042),
    (Doa(135.0, -35.0), 0.042),
    (Doa(-135.0, 35.0), 0.042),
)


def sh_basis_real(order: int, az_deg, el_deg, norm: str = "sn3d") -> np.ndarray:
    """Real spherical harmonics in ACN order, evaluated at directions.

    Parameters
    ----------
    order : int
        Maximum harmonic order N; (N+1)^2 columns are returned.
    az_deg, el_deg : array_like
        Azimuth/elevation in degrees (broadcast to a common 1-D shape).
    norm : 'sn3d' or 'n3d'
        SN3D scales so every order-1 component peaks at 1 (the Ambisonic
        convention used throughout); N3D is the orthonormal variant.

    Returns
    -------
    (Q, (order+1)^2) ndarray without the Condon-Shortley phase.
    """
    az = np.atleast_1d(np.radians(np.asarray(az_deg, dtype=float)))
    el = np.atleast_1d(np.radians(np.asarray(el_deg, dtype=float)))
    az, el = np.broadcast_arrays(az, el)
    sin_el = np.sin(el)
    out = np.zeros((az.size, (order + 1) ** 2))
    col = 0
    for n in range(order + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            # lpmv includes the Condon-Shortley (-1)^m; cancel it.
            leg = ((-1.0) ** am) * lpmv(am, n, sin_el.ravel())
            scale = np.sqrt(
                (2 * n + 1) * np.exp(gammaln(n - am + 1) - gammaln(n + am + 1))
            )
            if norm == "sn3d":
                scale /= np.sqrt(2 * n + 1)
            elif norm != "n3d":
                raise ValueError(f"unknown normalization {norm!r}")
            if m > 0:
                trig = np.sqrt(2.0) * np.cos(m * az.ravel())
            elif m < 0:
                trig = np.sqrt(2.0) * np.sin(am * az.ravel())
            else:
                trig = 1.0
            out[:, col] = scale * leg * trig
            col += 1
    return out


def foa_gains(d: Doa) -> np.ndarray:
    """SN3D first-order gains (W, Y, Z, X) for a plane wave from `d`."""
    return sh_basis_real(1, d.azimuth, d.elevation, norm="sn3d")[0]


def windowed_sinc(center_offset: float, taps: int = DELAY_KERNEL_TAPS) -> np.ndarray:
    """Blackman-windowed sinc whose unit-gain peak sits `center_offset`
    samples into the kernel; used for sub-sample delays."""
    x = np.arange(taps, dtype=float) - center_offset
    half = taps / 2.0
    window = np.where(
        np.abs(x) < half,
        0.42 + 0.5 * np.cos(np.pi * x / half) + 0.08 * np.cos(2 * np.pi * x / half),
        0.0,
    )
    return np.sinc(x) * window


def fractional_delay(ir: np.ndarray, delay_samples: float) -> np.ndarray:
    """Delay a (taps, channels) IR by a non-negative, possibly fractional
    number of samples; adds DELAY_KERNEL_LATENCY samples of bulk latency."""
    if delay_samples < 0:
        raise ValueError("delay must be non-negative")
    whole = int(np.floor(delay_samples))
    frac = delay_samples - whole
    kernel = windowed_sinc(DELAY_KERNEL_LATENCY + frac)
    ir = np.atleast_2d(ir)
    out = np.zeros((whole + ir.shape[0] + kernel.shape[0] - 1, ir.shape[1]))
    for ch in range(ir.shape[1]):
        out[whole:, ch] = np.convolve(ir[:, ch], kernel)
    return out


@dataclass(frozen=True)
class GridResponses:
    """Measured steering IRs on an equirectangular az/el grid.

    `irs` has shape (n_az, n_el, taps, 4); azimuths run -180, -180+step, ...
    and elevations -90 .. 90 inclusive.
    """

    az_step_deg: float
    el_step_deg: float
    irs: np.ndarray

    def __post_init__(self):
        if 360.0 % self.az_step_deg != 0 or 180.0 % self.el_step_deg != 0:
            raise ValueError("grid spacing must divide 360 (az) and 180 (el)")
        n_az = int(round(360.0 / self.az_step_deg))
        n_el = int(round(180.0 / self.el_step_deg)) + 1
        if self.irs.shape[:2] != (n_az, n_el) or self.irs.shape[3] != 4:
            raise ValueError(
                f"grid irs shape {self.irs.shape} does not match "
                f"({n_az}, {n_el}, taps, 4)")

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        az = -180.0 + self.az_step_deg * np.arange(self.irs.shape[0])
        el = -90.0 + self.el_step_deg * np.arange(self.irs.shape[1])
        az_grid, el_grid = np.meshgrid(az, el, indexing="ij")
        return az_grid.ravel(), el_grid.ravel()


@dataclass(frozen=True, eq=False)
class ArrayModel:
    """Array geometry plus optional measured grid responses."""

    kind: str = "foa_ideal"  # 'foa_ideal' | 'tetrahedral'
    sensors: tuple = DEFAULT_TETRA_SENSORS
    grid: GridResponses | None = None
    sh_order: int = 1

    def __post_init__(self):
        if self.kind not in ("foa_ideal", "tetrahedral"):
            raise ValueError(f"unknown array kind {self.kind!r}")
        if self.kind == "tetrahedral":
            if len(self.sensors) != 4:
                raise ValueError("tetrahedral array needs exactly 4 sensors")
            if any(r <= 0 for _, r in self.sensors):
                raise ValueError("sensor radius must be positive")

    def sensor_positions(self) -> np.ndarray:
        return np.stack([r * doa_to_unit_vector(d) for d, r in self.sensors])


def foa_ideal_array() -> ArrayModel:
    return ArrayModel(kind="foa_ideal")


def default_tetrahedral_array() -> ArrayModel:
    return ArrayModel(kind="tetrahedral")


class _ShInterpolator:
    """Per-frequency-bin least-squares SH fit of grid steering responses."""

    def __init__(self, grid: GridResponses, order: int):
        az, el = grid.directions()
        n_dirs = az.size
        n_coef = (order + 1) ** 2
        if n_coef > n_dirs:
            raise ValueError(
                f"grid too sparse for order {order}: {n_dirs} points for "
                f"{n_coef} coefficients")
        basis = sh_basis_real(order, az, el, norm="n3d")
        cond = np.linalg.cond(basis)
        if cond > 1e8:
            raise ValueError(
                f"ill-conditioned SH fit (cond {cond:.2e}) for order {order}")
        self.order = order
        self.taps = grid.irs.shape[2]
        spectra = np.fft.rfft(
            grid.irs.reshape(n_dirs, self.taps, 4), axis=1)
        flat = spectra.reshape(n_dirs, -1)
        self.coef = np.linalg.pinv(basis) @ flat  # (n_coef, n_bins * 4)
        self.n_bins = spectra.shape[1]

    def query(self, d: Doa) -> np.ndarray:
        basis = sh_basis_real(self.order, d.azimuth, d.elevation, norm="n3d")
        resp = (basis @ self.coef).reshape(self.n_bins, 4)
        return np.fft.irfft(resp, n=self.taps, axis=0)


_interp_cache: "weakref.WeakKeyDictionary[ArrayModel, _ShInterpolator]" = (
    weakref.WeakKeyDictionary()
)


def steering_response(d: Doa, array: ArrayModel) -> np.ndarray:
    """Anechoic array response for a unit plane wave from direction `d`.

    Returns a (taps, 4) IR. For the ideal FOA encoder this is a single-tap
    gain row; for the geometric tetrahedral model it carries the inter-sensor
    plane-wave delays (with DELAY_KERNEL_LATENCY samples of bulk latency);
    for arrays with measured grids it is the SH-interpolated grid response.
    """
    if array.grid is not None:
        interp = _interp_cache.get(array)
        if interp is None:
            interp = _ShInterpolator(array.grid, array.sh_order)
            _interp_cache[array] = interp
        return interp.query(d)
    if array.kind == "foa_ideal":
        return foa_gains(d)[None, :]
    u = doa_to_unit_vector(d)
    positions = array.sensor_positions()
    # Plane wave hits sensors closer to the source earlier.
    delays = -(positions @ u) / SPEED_OF_SOUND_M_S * SAMPLE_RATE
    ir = np.zeros((DELAY_KERNEL_TAPS, 4))
    for ch, delta in enumerate(delays):
        ir[:, ch] = windowed_sinc(DELAY_KERNEL_LATENCY + delta)
    return ir


def anechoic_ir(d: Doa, distance_m: float, array: ArrayModel) -> np.ndarray:
    """Free-field IR: steering response delayed by distance/c and scaled by
    the inverse distance law (unit gain at 1 m)."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    base = steering_response(d, array)
    delay = distance_m / SPEED_OF_SOUND_M_S * SAMPLE_RATE
    out = fractional_delay(base, delay)
    out *= REFERENCE_DISTANCE_M / distance_m
    return out
