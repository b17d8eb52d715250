"""Phone and base-station placements inside a rectangular area."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import EmptyAreaError, NonDivisibleError, RejectionBudgetExceeded
from .radio import (
    AntennaPattern,
    Gaussian,
    Isotropic,
    aim_at,
    azimuth_deg,
    pattern_from_dict,
    pattern_to_dict,
)

REJECTION_BUDGET = 1000


@dataclass(frozen=True)
class Area:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise EmptyAreaError(f"area must have positive extent, got {self.width}x{self.height}")

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


@dataclass(frozen=True)
class Station:
    id: int
    x: float
    y: float
    pattern: AntennaPattern = Isotropic()


@dataclass(frozen=True)
class Phone:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Scenario:
    area: Area
    stations: tuple[Station, ...]
    phones: tuple[Phone, ...]
    capacities: tuple[int, ...]
    seed: int = 0

    @property
    def num_phones(self) -> int:
        return len(self.phones)

    @property
    def num_stations(self) -> int:
        return len(self.stations)

    def phone_xy(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.phones], dtype=float).reshape(-1, 2)

    def station_xy(self) -> np.ndarray:
        return np.array([(s.x, s.y) for s in self.stations], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


# -----------------------------
# Helpers
# -----------------------------
def equal_capacities(num_phones: int, num_stations: int, allow_remainder: bool = False) -> tuple[int, ...]:
    """Capacities of N/M per station; with ``allow_remainder`` the first N mod M stations get one extra."""
    if num_stations < 1:
        raise ValueError("need at least one station")
    base, rem = divmod(num_phones, num_stations)
    if rem and not allow_remainder:
        raise NonDivisibleError(f"N={num_phones} is not divisible by M={num_stations}")
    return tuple(base + (1 if a < rem else 0) for a in range(num_stations))


def nearest_station(xy: np.ndarray, stations_xy: np.ndarray) -> np.ndarray:
    """Index of the Euclidean-nearest station for each row of ``xy`` (lowest index on ties)."""
    xy = np.atleast_2d(xy)
    d2 = ((xy[:, None, :] - stations_xy[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d2, axis=1)


def _check_stations(stations: Sequence[Station]) -> None:
    if len(stations) < 2:
        raise ValueError(f"at least two stations are required, got {len(stations)}")


def random_stations(
    num_stations: int,
    area: Area,
    seed: int,
    beam: Literal["isotropic", "gaussian"] = "isotropic",
    template: Gaussian | None = None,
) -> tuple[Station, ...]:
    """Stations uniformly placed in ``area``; Gaussian beams aim at the area centroid."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform((0.0, 0.0), (area.width, area.height), size=(num_stations, 2))
    stations = []
    for a, (x, y) in enumerate(xy):
        if beam == "isotropic":
            pattern: AntennaPattern = Isotropic()
        elif beam == "gaussian":
            pattern = aim_at(template or Gaussian(), float(x), float(y), area.centroid)
        else:
            raise ValueError(f"unknown beam {beam!r}")
        stations.append(Station(a, float(x), float(y), pattern))
    return tuple(stations)


def _make_phones(xy: np.ndarray) -> tuple[Phone, ...]:
    return tuple(Phone(i, float(x), float(y)) for i, (x, y) in enumerate(xy))


# -----------------------------
# Generators
# -----------------------------
def generate_uniform(
    num_phones: int,
    stations: Sequence[Station],
    area: Area,
    seed: int,
    allow_remainder: bool = False,
) -> Scenario:
    if num_phones < 1:
        raise ValueError("num_phones must be >= 1")
    _check_stations(stations)
    capacities = equal_capacities(num_phones, len(stations), allow_remainder)
    rng = np.random.default_rng(seed)
    xy = rng.uniform((0.0, 0.0), (area.width, area.height), size=(num_phones, 2))
    return Scenario(area, tuple(stations), _make_phones(xy), capacities, int(seed))


def hotspot_sigma(stations: Sequence[Station]) -> float:
    xy = np.array([(s.x, s.y) for s in stations], dtype=float)
    return min(float(np.hypot(*(xy[a] - xy[b]))) for a, b in itertools.combinations(range(len(xy)), 2)) / 4.0


def generate_biased(
    num_phones: int,
    stations: Sequence[Station],
    area: Area,
    hot_station: int,
    hot_fraction: float,
    seed: int,
    allow_remainder: bool = False,
    max_attempts: int = REJECTION_BUDGET,
) -> Scenario:
    """Place ``ceil(hot_fraction*N)`` phones nearest to ``hot_station``, the rest nearest elsewhere.

    Hot phones follow an isotropic Gaussian around the hot station with a standard
    deviation of a quarter of the smallest station spacing. Other phones are uniform
    over the part of the area whose nearest station is not the hot one. Both draws
    are rejection-sampled, ``max_attempts`` tries per phone.
    """
    if num_phones < 1:
        raise ValueError("num_phones must be >= 1")
    _check_stations(stations)
    if not 0.0 < hot_fraction <= 1.0:
        raise ValueError(f"hot_fraction must be in (0, 1], got {hot_fraction}")
    if not 0 <= hot_station < len(stations):
        raise ValueError(f"hot_station {hot_station} out of range")
    capacities = equal_capacities(num_phones, len(stations), allow_remainder)

    rng = np.random.default_rng(seed)
    st_xy = np.array([(s.x, s.y) for s in stations], dtype=float)
    centre = st_xy[hot_station]
    sigma = hotspot_sigma(stations)
    num_hot = min(num_phones, math.ceil(round(hot_fraction * num_phones, 9)))

    def draw(sampler, want_hot: bool) -> np.ndarray:
        for _ in range(max_attempts):
            point = sampler()
            if not area.contains(point[0], point[1]):
                continue
            if (nearest_station(point, st_xy)[0] == hot_station) == want_hot:
                return point
        raise RejectionBudgetExceeded(
            f"no {'hot' if want_hot else 'background'} position found in {max_attempts} attempts"
        )

    if sigma <= 0 and num_hot:
        raise RejectionBudgetExceeded("coincident stations leave no hot-spot region")
    hot = [draw(lambda: rng.normal(centre, sigma), True) for _ in range(num_hot)]
    rest = [
        draw(lambda: rng.uniform((0.0, 0.0), (area.width, area.height)), False)
        for _ in range(num_phones - num_hot)
    ]
    xy = np.array(hot + rest, dtype=float).reshape(-1, 2)
    xy = xy[rng.permutation(num_phones)]
    return Scenario(area, tuple(stations), _make_phones(xy), capacities, int(seed))


# -----------------------------
# Validation
# -----------------------------
def validate(scenario: Scenario) -> list[Violation]:
    out: list[Violation] = []
    area = scenario.area
    n, m = scenario.num_phones, scenario.num_stations
    if m < 2:
        out.append(Violation("TooFewStations", f"M={m}, need at least 2"))
    if [s.id for s in scenario.stations] != list(range(m)):
        out.append(Violation("StationIds", "station ids are not 0..M-1 in order"))
    if [p.id for p in scenario.phones] != list(range(n)):
        out.append(Violation("PhoneIds", "phone ids are not 0..N-1 in order"))
    for s in scenario.stations:
        if not area.contains(s.x, s.y):
            out.append(Violation("OutOfArea", f"station {s.id} at ({s.x}, {s.y})"))
    for p in scenario.phones:
        if not area.contains(p.x, p.y):
            out.append(Violation("OutOfArea", f"phone {p.id} at ({p.x}, {p.y})"))
    if len(scenario.capacities) != m:
        out.append(Violation("CapacityLength", f"{len(scenario.capacities)} capacities for {m} stations"))
    if any(c < 0 for c in scenario.capacities):
        out.append(Violation("NegativeCapacity", str(list(scenario.capacities))))
    if sum(scenario.capacities) != n:
        out.append(Violation("CapacitySumMismatch", f"sum(capacities)={sum(scenario.capacities)} != N={n}"))
    return out


# -----------------------------
# Serialization
# -----------------------------
def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "area": {"width": scenario.area.width, "height": scenario.area.height},
        "stations": [
            {"id": s.id, "x": s.x, "y": s.y, "pattern": pattern_to_dict(s.pattern)} for s in scenario.stations
        ],
        "phones": [{"id": p.id, "x": p.x, "y": p.y} for p in scenario.phones],
        "capacities": list(scenario.capacities),
        "seed": scenario.seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    area = Area(float(data["area"]["width"]), float(data["area"]["height"]))
    stations = []
    for s in data["stations"]:
        x, y = float(s["x"]), float(s["y"])
        # beams default to a single lobe aimed at the area centroid
        toward_centre = float(azimuth_deg(x, y, *area.centroid))
        pattern = pattern_from_dict(s.get("pattern", {"type": "isotropic"}), default_azimuths=(toward_centre,))
        stations.append(Station(int(s["id"]), x, y, pattern))
    return Scenario(
        area=area,
        stations=tuple(stations),
        phones=tuple(Phone(int(p["id"]), float(p["x"]), float(p["y"])) for p in data["phones"]),
        capacities=tuple(int(c) for c in data["capacities"]),
        seed=int(data.get("seed", 0)),
    )


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(scenario))


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
