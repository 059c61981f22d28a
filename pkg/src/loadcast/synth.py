"""Synthetic workloads standing in for the World Cup 1998 archive.

The shapes are qualitative: a 92-day series that ramps up towards the
tournament, peaks on match days and decays afterwards, and two per-second
series, a quiet pre-tournament day and a busy tournament hour.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from scipy.signal import lfilter

from .ingest import MatchCalendar
from .series import TimeSeries

DAY_ONE = datetime(1998, 4, 26, tzinfo=timezone.utc)
FILLER_DAYS = 4
TOTAL_DAYS = 92
PROFILES = ("worldcup-days", "day6-seconds", "day66-seconds")


def day_epoch(day: int) -> int:
    """Epoch second at 00:00 UTC of a (1-based) archive day."""
    return int(DAY_ONE.timestamp()) + (day - 1) * 86400


def _tournament_calendar() -> MatchCalendar:
    # Group stage Jun 10-26, round of 16 Jun 27-30, quarter-finals Jul 3-4,
    # semi-finals Jul 7-8, third place Jul 11, final Jul 12 (day 46 = Jun 10).
    per_day = {
        46: 2, 47: 2, 48: 3, 49: 3, 50: 3, 51: 3, 52: 2, 53: 2, 54: 2, 55: 2, 56: 3,
        57: 3, 58: 2, 59: 4, 60: 4, 61: 4, 62: 4,
        63: 2, 64: 2, 65: 2, 66: 2,
        69: 2, 70: 2,
        73: 1, 74: 1,
        77: 1, 78: 1,
    }
    return MatchCalendar(per_day)


WORLD_CUP_CALENDAR = _tournament_calendar()


@dataclass(frozen=True)
class SynthProfile:
    kind: str = "worldcup-days"
    length: int | None = None
    seed: int = 42
    amplitude: float = 1.0
    noise: float = 0.08

    def __post_init__(self):
        if self.kind not in PROFILES:
            raise ValueError(f"unknown profile {self.kind!r}; choose from {', '.join(PROFILES)}")
        if self.length is not None and self.length < 1:
            raise ValueError("length must be positive")
        if self.amplitude <= 0 or self.noise < 0:
            raise ValueError("amplitude must be positive and noise non-negative")

    @property
    def default_length(self) -> int:
        return {"worldcup-days": TOTAL_DAYS, "day6-seconds": 86400, "day66-seconds": 2400}[self.kind]

    @property
    def n(self) -> int:
        return self.length or self.default_length


def _worldcup_days(p: SynthProfile, rng: np.random.Generator) -> TimeSeries:
    n = p.n
    days = np.arange(1, n + 1)
    base = np.zeros(n)
    for i, d in enumerate(days):
        if d <= FILLER_DAYS:
            continue
        if d < 46:
            # build-up: about 1M/day rising to about 12M/day
            base[i] = 1.0e6 * np.exp(np.log(12.0) * (d - 5) / 40.0)
        elif d <= 78:
            base[i] = 20.0e6 + 10.0e6 * np.sin(np.pi * (d - 46) / 32.0)
        else:
            base[i] = 12.0e6 * np.exp(-(d - 78) / 6.0) + 2.0e6
    weekday = np.array([1.0 if (d - 1) % 7 not in (5, 6) else 0.8 for d in days])
    matches = np.array([WORLD_CUP_CALENDAR.matches(int(d)) for d in days], dtype=float)
    boost = 7.0e6 * matches
    noise = np.exp(rng.normal(0.0, p.noise, n))
    values = p.amplitude * (base * weekday + boost) * noise
    values[days <= FILLER_DAYS] = 0.0
    values = np.rint(values)
    return TimeSeries("worldcup-days", days, values,
                      {"MATCHES": matches, "ISMATCH": (matches >= 1).astype(float)})


def _seconds(p: SynthProfile, rng: np.random.Generator, day: int, level: float, swing: float,
             phi: float, sigma: float, jitter: float = 0.0) -> TimeSeries:
    n = p.n
    t = np.arange(n)
    # slow diurnal swing plus an AR(1) log-intensity for minute-scale bursts
    drift = swing * np.sin(2 * np.pi * t / 86400.0 - np.pi / 2)
    shocks = rng.normal(0.0, sigma * p.noise / 0.08, n)
    shocks[0] /= np.sqrt(1 - phi * phi)
    ar = lfilter([1.0], [1.0, -phi], shocks)
    spikes = rng.normal(0.0, jitter * p.noise / 0.08, n)
    rate = p.amplitude * level * np.exp(drift + ar + spikes)
    counts = rng.poisson(rate)
    epochs = day_epoch(day) + t
    keep = counts > 0
    return TimeSeries(p.kind, epochs[keep], counts[keep].astype(float))


def synth_series(profile: SynthProfile) -> TimeSeries:
    """Deterministic synthetic series for ``profile`` (same seed, same values)."""
    rng = np.random.default_rng([profile.seed, PROFILES.index(profile.kind)])
    if profile.kind == "worldcup-days":
        return _worldcup_days(profile, rng)
    if profile.kind == "day6-seconds":
        # peaks around 50 requests/s
        return _seconds(profile, rng, day=6, level=9.0, swing=0.6, phi=0.98, sigma=0.08)
    # tournament day: peaks around 3300 requests/s
    return _seconds(profile, rng, day=66, level=1150.0, swing=0.0, phi=0.99,
                    sigma=0.03, jitter=0.25)


def synthetic_calendar() -> MatchCalendar:
    return MatchCalendar(WORLD_CUP_CALENDAR)
