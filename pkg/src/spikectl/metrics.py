"""Step-response and tracking metrics over a sampled trajectory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import Trajectory


class NotReached(ValueError):
    """The encoder never crossed the rise threshold inside the trajectory."""


def rmse(traj: Trajectory, window_start: float, window_len: float = 40.0) -> float:
    """Root-mean-square of ``target - encoder`` over ``[start, start + len]`` seconds."""
    if window_len <= 0:
        raise ValueError("window length must be positive")
    if len(traj) < 2:
        raise ValueError("trajectory too short for an RMSE window")
    # the last sample stands for the final control period
    t_end = traj.t[-1] + (traj.t[1] - traj.t[0])
    if window_start < traj.t[0] - 1e-9 or window_start + window_len > t_end + 1e-9:
        raise ValueError(
            f"window [{window_start}, {window_start + window_len}] s exceeds trajectory "
            f"[{traj.t[0]}, {t_end}] s"
        )
    m = traj.window(window_start, window_len)
    err = traj.target[m] - traj.encoder[m]
    return float(np.sqrt(np.mean(err**2)))


def _step_levels(traj: Trajectory, onset: float) -> tuple[float, float]:
    before = traj.target[traj.t < onset - 1e-9]
    after = traj.target[traj.t >= onset - 1e-9]
    if not len(before) or not len(after):
        raise ValueError(f"step onset {onset} s is not inside the trajectory")
    return float(before[-1]), float(after[0])


def rise_time(traj: Trajectory, step_onset: float) -> float:
    """Seconds from onset until the encoder first reaches 90% of the step.

    Raises ``NotReached`` when the threshold is never crossed.
    """
    a0, a1 = _step_levels(traj, step_onset)
    level = a0 + 0.9 * (a1 - a0)
    after = traj.t >= step_onset - 1e-9
    direction = 1.0 if a1 >= a0 else -1.0
    crossed = after & (direction * (traj.encoder - level) >= 0)
    idx = np.flatnonzero(crossed)
    if not len(idx):
        raise NotReached(f"encoder never reached {level:.4f} after {step_onset} s")
    return float(traj.t[idx[0]] - step_onset)


def overshoot(traj: Trajectory, step_onset: float) -> float:
    """Largest excursion past the new target as a fraction of the step size."""
    a0, a1 = _step_levels(traj, step_onset)
    size = abs(a1 - a0)
    if size == 0:
        return 0.0
    direction = 1.0 if a1 >= a0 else -1.0
    after = traj.t >= step_onset - 1e-9
    excess = direction * (traj.encoder[after] - a1)
    return float(max(0.0, excess.max())) / size if excess.size else 0.0


def band_fraction(traj: Trajectory, start: float, end: float, rel_band: float = 0.05) -> float:
    """Fraction of samples in ``[start, end]`` with ``|encoder - target| <= rel_band * target``."""
    m = (traj.t >= start - 1e-9) & (traj.t <= end + 1e-9)
    if not m.any():
        raise ValueError("empty band window")
    tol = rel_band * np.abs(traj.target[m])
    return float(np.mean(np.abs(traj.encoder[m] - traj.target[m]) <= tol + 1e-12))


def sign_agreement(traj: Trajectory, start: float | None = None, end: float | None = None) -> float:
    """Fraction of samples where the decoded error has the sign of ``target - encoder``."""
    m = np.ones(len(traj), dtype=bool)
    if start is not None:
        m &= traj.t >= start - 1e-9
    if end is not None:
        m &= traj.t <= end + 1e-9
    return float(np.mean(np.sign(traj.decoded[m]) == np.sign(traj.expected[m])))


@dataclass
class Metrics:
    rmse: float
    rise_time: float | None
    overshoot: float | None

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "rise_time": self.rise_time, "overshoot": self.overshoot}


def summarize(values: list[float | None]) -> dict:
    vals = np.array([v for v in values if v is not None], dtype=float)
    if not len(vals):
        return {"mean": None, "std": None, "median": None, "n": 0}
    return {
        "mean": float(vals.mean()),
        "std": float(vals.std(ddof=0)),
        "median": float(np.median(vals)),
        "n": int(len(vals)),
    }
