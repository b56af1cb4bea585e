"""Synthetic daily PV and load profiles for the four sky classes.

Each day is a solar arc between sunrise and sunset.  Cloudy days scale the arc
down, intermittent days multiply it by periodic square-pulse cloud passages
whose depth, period and phase are seeded.
PV output is reported at 1 % resolution, the way plant telemetry usually is.
Load follows a fixed residential/commercial day shape expressed as a
fraction of feeder peak.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASSES = ("clear", "cloudy", "intermittent_clear", "intermittent_cloudy")

SUNRISE, SUNSET = 6.0, 18.0  # hours
ARC_EXPONENT = 1.2
PV_RESOLUTION = 0.01

# class -> (arc attenuation, cloud depth range, cloud duty cycle, passage period range in h)
PROFILE_PARAMS = {
    "clear": (1.0, (0.0, 0.0), 0.0, (2.0, 3.0)),
    "cloudy": (0.35, (0.0, 0.0), 0.0, (2.0, 3.0)),
    "intermittent_clear": (1.0, (0.3, 0.5), 0.3, (2.0, 3.0)),
    "intermittent_cloudy": (1.0, (0.9, 1.0), 0.5, (2.0, 3.0)),
}

# load shape: overnight base, midday plateau, evening peak (fractions of peak)
LOAD_BASE = 0.12
LOAD_MIDDAY = (0.10, 13.0, 4.0)  # amplitude, centre hour, width
LOAD_EVENING = (0.25, 19.5, 2.0)


@dataclass(frozen=True)
class DayProfile:
    cls: str
    cadence: float  # minutes
    t: np.ndarray  # hours since midnight, strictly increasing
    pv_fraction: np.ndarray  # of PV capacity, in [0, 1]
    load_fraction: np.ndarray  # of feeder peak load

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.t.tolist(), self.pv_fraction.tolist(), self.load_fraction.tolist()))

    @property
    def daylight(self) -> np.ndarray:
        return (self.t > SUNRISE) & (self.t < SUNSET)

    def __len__(self) -> int:
        return self.t.size


def solar_arc(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    phase = np.clip((t - SUNRISE) / (SUNSET - SUNRISE), 0.0, 1.0)
    return np.sin(np.pi * phase) ** ARC_EXPONENT


def load_shape(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, LOAD_BASE)
    for amp, centre, width in (LOAD_MIDDAY, LOAD_EVENING):
        out += amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return out


def _cloud_mask(rng, t, depth, duty, period):
    """Periodic square-pulse cloud passages with seeded depth, period and phase.

    Returns 1 in sunshine and ``1 - depth`` while a cloud passes.
    """
    d = rng.uniform(*depth)
    T = rng.uniform(*period)
    phase = rng.uniform(0.0, T)
    if d == 0 or duty == 0:
        return np.ones_like(t)
    in_cloud = ((t - SUNRISE + phase) % T) < duty * T
    return np.where(in_cloud, 1.0 - d, 1.0)


def synth_profile(cls: str, seed: int = 0, cadence: float = 60.0) -> DayProfile:
    """One synthetic day at ``cadence`` minutes, deterministic in ``seed``."""
    if cls not in PROFILE_PARAMS:
        raise ValueError(f"unknown day class {cls!r}; expected one of {', '.join(CLASSES)}")
    if not cadence > 0:
        raise ValueError("cadence must be positive")
    atten, depth, duty, period = PROFILE_PARAMS[cls]
    t = np.arange(0.0, 24.0, cadence / 60.0)
    rng = np.random.default_rng([seed, CLASSES.index(cls)])
    pv = atten * solar_arc(t) * _cloud_mask(rng, t, depth, duty, period)
    pv = np.clip(np.round(pv / PV_RESOLUTION) * PV_RESOLUTION, 0.0, 1.0)
    return DayProfile(cls, float(cadence), t, pv, np.round(load_shape(t), 4))


def synth_year(seed: int = 0, days: int = 365, cadence: float = 60.0) -> list[DayProfile]:
    """``days`` profiles with classes drawn uniformly, each day seeded separately."""
    rng = np.random.default_rng(seed)
    classes = rng.choice(len(CLASSES), size=days)
    seeds = rng.integers(0, 2**31, size=days)
    return [synth_profile(CLASSES[c], int(s), cadence) for c, s in zip(classes, seeds)]
