"""Down-link radio model: free-space path loss, antenna gain, received power and SINR.

All powers are linear. SINR matrices can be expressed in dB or linear scale;
heatmaps always report dB.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Sequence, Union

import numpy as np

from .errors import GridTooLargeError, ZeroDistanceError

if TYPE_CHECKING:
    from .scenario import Phone, Scenario, Station

SPEED_OF_LIGHT = 299_792_458.0  # m/s
MIN_DISTANCE_M = 1.0

Scale = Literal["db", "linear"]


# -----------------------------
# Antenna patterns
# -----------------------------
@dataclass(frozen=True)
class Isotropic:
    kind: Literal["isotropic"] = field(default="isotropic", init=False)

    def gain(self, azimuth_deg):
        return np.ones_like(np.asarray(azimuth_deg, dtype=float))


@dataclass(frozen=True)
class Gaussian:
    """Directive pattern: Gaussian main lobe per beam, floored at the sidelobe level.

    ``beamwidth_convention="paper"`` uses sigma = 2*theta*sqrt(ln 2);
    ``"standard"`` uses the textbook half-power relation sigma = theta / (2*sqrt(2 ln 2)).
    """

    theta_deg: float = 30.0
    gmax_db: float = 0.0
    sll_db: float = -15.0
    beam_azimuths_deg: tuple[float, ...] = (0.0,)
    beamwidth_convention: Literal["paper", "standard"] = "paper"
    kind: Literal["gaussian"] = field(default="gaussian", init=False)

    def __post_init__(self):
        if not self.theta_deg > 0:
            raise ValueError(f"theta_deg must be > 0, got {self.theta_deg}")
        if not self.sll_db < self.gmax_db:
            raise ValueError("sll_db must be below gmax_db")
        if len(self.beam_azimuths_deg) == 0:
            raise ValueError("a Gaussian pattern needs at least one beam azimuth")
        if self.beamwidth_convention not in ("paper", "standard"):
            raise ValueError(f"unknown beamwidth convention {self.beamwidth_convention!r}")
        azimuths = tuple(float(a) % 360.0 for a in self.beam_azimuths_deg)
        object.__setattr__(self, "beam_azimuths_deg", azimuths)

    @property
    def sigma_deg(self) -> float:
        if self.beamwidth_convention == "paper":
            return 2.0 * self.theta_deg * math.sqrt(math.log(2.0))
        return self.theta_deg / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    def gain(self, azimuth_deg):
        return gaussian_gain(self, azimuth_deg)


AntennaPattern = Union[Isotropic, Gaussian]


def wrap_angle_deg(angle):
    """Reduce angles into (-180, 180]."""
    wrapped = np.mod(np.asarray(angle, dtype=float), 360.0)
    return np.where(wrapped > 180.0, wrapped - 360.0, wrapped)


def azimuth_deg(x0: float, y0: float, x1, y1):
    """Azimuth of (x1, y1) seen from (x0, y0), counter-clockwise from +x, in [0, 360)."""
    ang = np.degrees(np.arctan2(np.asarray(y1, dtype=float) - y0, np.asarray(x1, dtype=float) - x0))
    return np.mod(ang, 360.0)


def gaussian_gain(pattern: Gaussian, azimuth_deg):
    """Linear gain of a Gaussian pattern at the given azimuth(s).

    Each beam contributes ``10**(gmax_db/10) * exp(-0.5*(offset/sigma)**2)``; the
    result is the maximum over beams and the linear sidelobe floor.
    """
    az = np.asarray(azimuth_deg, dtype=float)
    peak = 10.0 ** (pattern.gmax_db / 10.0)
    sigma = pattern.sigma_deg
    main = np.zeros_like(az)
    for beam in pattern.beam_azimuths_deg:
        offset = wrap_angle_deg(az - beam)
        main = np.maximum(main, peak * np.exp(-0.5 * (offset / sigma) ** 2))
    gain = np.maximum(main, 10.0 ** (pattern.sll_db / 10.0))
    return float(gain) if gain.ndim == 0 else gain


def aim_at(pattern: AntennaPattern, x: float, y: float, target: tuple[float, float]) -> AntennaPattern:
    """Return ``pattern`` with a single beam pointed from (x, y) at ``target``.

    A station sitting exactly on the target keeps an azimuth of 0.
    """
    if not isinstance(pattern, Gaussian):
        return pattern
    az = float(azimuth_deg(x, y, target[0], target[1]))
    return Gaussian(
        theta_deg=pattern.theta_deg,
        gmax_db=pattern.gmax_db,
        sll_db=pattern.sll_db,
        beam_azimuths_deg=(az,),
        beamwidth_convention=pattern.beamwidth_convention,
    )


def pattern_to_dict(pattern: AntennaPattern) -> dict:
    if isinstance(pattern, Isotropic):
        return {"type": "isotropic"}
    return {
        "type": "gaussian",
        "theta_deg": pattern.theta_deg,
        "gmax_db": pattern.gmax_db,
        "sll_db": pattern.sll_db,
        "beam_azimuths_deg": list(pattern.beam_azimuths_deg),
        "beamwidth_convention": pattern.beamwidth_convention,
    }


def pattern_from_dict(data: dict, default_azimuths: Sequence[float] | None = None) -> AntennaPattern:
    kind = data.get("type", "isotropic").lower()
    if kind == "isotropic":
        return Isotropic()
    if kind != "gaussian":
        raise ValueError(f"unknown antenna pattern type {kind!r}")
    azimuths = data.get("beam_azimuths_deg") or default_azimuths
    if not azimuths:
        raise ValueError("gaussian pattern without beam_azimuths_deg and no default given")
    return Gaussian(
        theta_deg=float(data.get("theta_deg", 30.0)),
        gmax_db=float(data.get("gmax_db", 0.0)),
        sll_db=float(data.get("sll_db", -15.0)),
        beam_azimuths_deg=tuple(float(a) for a in azimuths),
        beamwidth_convention=data.get("beamwidth_convention", "paper"),
    )


# -----------------------------
# Propagation
# -----------------------------
@dataclass(frozen=True)
class RadioConfig:
    frequency_hz: float = 2.0e9
    tx_power: float = 1.0
    noise_power: float = 1e-13
    rx_gain: float = 1.0
    sinr_scale: Scale = "db"
    min_distance_m: float = MIN_DISTANCE_M

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("frequency_hz must be > 0")
        if not self.tx_power > 0:
            raise ValueError("tx_power must be > 0")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.rx_gain != 1.0:
            raise ValueError("rx_gain is fixed at 1")
        if self.sinr_scale not in ("db", "linear"):
            raise ValueError(f"sinr_scale must be 'db' or 'linear', got {self.sinr_scale!r}")
        if not self.min_distance_m > 0:
            raise ValueError("min_distance_m must be > 0")


def fspl(distance, frequency: float):
    """Free-space path loss ``(4*pi*d*f/c)**2`` as a linear factor."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ZeroDistanceError("distance must be > 0")
    if not frequency > 0:
        raise ValueError("frequency must be > 0")
    loss = (4.0 * math.pi * d * frequency / SPEED_OF_LIGHT) ** 2
    return float(loss) if loss.ndim == 0 else loss


def _rx_power(xs, ys, station: "Station", cfg: RadioConfig):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    d = np.maximum(np.hypot(xs - station.x, ys - station.y), cfg.min_distance_m)
    gain = station.pattern.gain(azimuth_deg(station.x, station.y, xs, ys))
    return cfg.tx_power * gain * cfg.rx_gain / fspl(d, cfg.frequency_hz)


def received_power(phone: "Phone", station: "Station", cfg: RadioConfig) -> float:
    """Linear power received by ``phone`` from ``station`` (distance clamped to ``cfg.min_distance_m``)."""
    return float(_rx_power(phone.x, phone.y, station, cfg))


def _sinr_direct(power: np.ndarray, noise_power: float) -> np.ndarray:
    m = power.shape[-1]
    out = np.empty_like(power)
    for a in range(m):
        others = [b for b in range(m) if b != a]
        out[..., a] = power[..., a] / (power[..., others].sum(axis=-1) + noise_power)
    return out


def to_db(values):
    return 10.0 * np.log10(values)


@dataclass(frozen=True, eq=False)
class SinrMatrix:
    values: np.ndarray  # (N, M)
    scale: Scale = "db"

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_scale(self, scale: Scale) -> "SinrMatrix":
        if scale == self.scale:
            return self
        if scale == "db":
            return SinrMatrix(to_db(self.values), "db")
        return SinrMatrix(10.0 ** (self.values / 10.0), "linear")


def sinr_matrix(scenario: "Scenario", cfg: RadioConfig) -> SinrMatrix:
    """SINR of every phone toward every station, interference from all other stations."""
    if len(scenario.stations) < 2:
        raise ValueError("SINR matrix needs at least two stations")
    xs = np.array([p.x for p in scenario.phones], dtype=float)
    ys = np.array([p.y for p in scenario.phones], dtype=float)
    power = np.stack([_rx_power(xs, ys, st, cfg) for st in scenario.stations], axis=-1)
    # explicit per-station sums keep interference exact when one term dwarfs the others
    linear = _sinr_direct(power.reshape(len(xs), -1), cfg.noise_power)
    if cfg.sinr_scale == "db":
        return SinrMatrix(to_db(linear), "db")
    return SinrMatrix(linear, "linear")


# -----------------------------
# Heatmaps
# -----------------------------
@dataclass(frozen=True, eq=False)
class Heatmap:
    xs: np.ndarray  # column coordinates, left to right
    ys: np.ndarray  # row coordinates, top to bottom (descending)
    sinr_db: np.ndarray  # (rows, cols) best-station SINR in dB
    best_station: np.ndarray  # (rows, cols) argmax station index

    @property
    def shape(self) -> tuple[int, int]:
        return self.sinr_db.shape


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(max(count, 1))


def sinr_heatmap(
    stations: Sequence["Station"],
    cfg: RadioConfig,
    step: float,
    bounds: tuple[float, float, float, float],
    max_cells: int = 4_000_000,
) -> Heatmap:
    """Best-station SINR over a regular grid; ``bounds`` is (xmin, xmax, ymin, ymax)."""
    if not step > 0:
        raise ValueError("grid step must be > 0")
    if len(stations) < 2:
        raise ValueError("heatmap needs at least two stations")
    xmin, xmax, ymin, ymax = bounds
    if xmax < xmin or ymax < ymin:
        raise ValueError(f"invalid bounds {bounds}")
    xs = _axis(xmin, xmax, step)
    ys = _axis(ymin, ymax, step)[::-1]
    if xs.size * ys.size > max_cells:
        raise GridTooLargeError(f"{ys.size}x{xs.size} grid exceeds the {max_cells}-cell budget")
    gx, gy = np.meshgrid(xs, ys)
    power = np.stack([_rx_power(gx, gy, st, cfg) for st in stations], axis=-1)
    sinr = _sinr_direct(power, cfg.noise_power)
    best = np.argmax(sinr, axis=-1)
    best_sinr = np.take_along_axis(sinr, best[..., None], axis=-1)[..., 0]
    return Heatmap(xs=xs, ys=ys, sinr_db=to_db(best_sinr), best_station=best)


_STATION_COLORS = np.array(
    [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48], [145, 30, 180], [70, 240, 240]],
    dtype=np.uint8,
)


def _ramp(values: np.ndarray) -> np.ndarray:
    lo, hi = np.nanmin(values), np.nanmax(values)
    t = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    # dark blue -> cyan -> yellow -> red
    stops = np.array([[0, 0, 96], [0, 200, 220], [250, 230, 40], [200, 20, 20]], dtype=float)
    pos = t * (len(stops) - 1)
    idx = np.clip(pos.astype(int), 0, len(stops) - 2)
    frac = (pos - idx)[..., None]
    rgb = stops[idx] * (1 - frac) + stops[idx + 1] * frac
    return np.round(rgb).astype(np.uint8)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (rows, cols, 3) uint8 array as binary PPM (P6)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    rows, cols, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    pixels = np.frombuffer(parts[4][: rows * cols * 3], dtype=np.uint8)
    return pixels.reshape(rows, cols, 3)


def export_heatmap(heatmap: Heatmap, out_dir: str | Path, prefix: str = "heatmap") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sinr_path = out_dir / f"{prefix}_sinr.ppm"
    index_path = out_dir / f"{prefix}_station.ppm"
    csv_path = out_dir / f"{prefix}.csv"
    write_ppm(sinr_path, _ramp(heatmap.sinr_db))
    write_ppm(index_path, _STATION_COLORS[heatmap.best_station % len(_STATION_COLORS)])
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "sinr_db", "best_station"])
        for r, y in enumerate(heatmap.ys):
            for c, x in enumerate(heatmap.xs):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(heatmap.sinr_db[r, c])), int(heatmap.best_station[r, c])])
    return [sinr_path, index_path, csv_path]
