"""Experiment definitions, per-seed runs and on-disk artifacts."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .control import DiscreteSequence, LoopConfig, Sinusoid, Step, Trajectory, run_closed_loop
from .errors import ConfigurationError
from .metrics import NotReached, band_fraction, overshoot, rise_time, rmse, sign_agreement, summarize
from .plant import Plant, PlantConfig
from .popcode import EncoderConfig, decode_com, encode_value
from .snn import STREAM_MISMATCH, NetworkGraph, NeuronParams, Simulator, apply_mismatch, substream
from .threeway import TopologyConfig, WeightTable, build_network

KINDS = ("step", "dtp", "sine", "sweep-kp", "sweep-tau", "mismatch-study")

TRAJECTORY_HEADER = ("t", "target", "encoder", "decoded_error", "expected_error", "command")
SPIKES_HEADER = ("t_ms", "population", "neuron_id")

# loop gain used for the trace time-constant sweep
SWEEP_TAU_KP = 300.0

_DEFAULT_VALUES = {
    "sweep-kp": (50.0, 100.0, 150.0),
    "sweep-tau": (0.005, 0.75, 5.0),
}

# pairs (a, b) probed by the open-loop mismatch study
STUDY_PAIRS = ((0.5, 0.5), (0.75, 0.25), (0.25, 0.75), (0.6, 0.3), (0.3, 0.6))


def dtp_profile(points: Sequence[tuple[float, float]] | None = None) -> DiscreteSequence:
    """Discrete target pursuit: 0.3, then 0.85 at 10 s, back to 0.3 at 16 s."""
    if points is None:
        points = ((0.0, 0.30), (10.0, 0.85), (16.0, 0.30))
    return DiscreteSequence(tuple((float(t), float(a)) for t, a in points))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "step"
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    duration: float | None = None  # s; None picks the per-kind default
    seeds: tuple[int, ...] = (0,)
    out: str = "runs"
    values: tuple[float, ...] = ()
    step_onset: float = 2.0
    step_a0: float = 0.30
    step_a1: float = 0.85
    dtp_points: tuple[tuple[float, float], ...] = ((0.0, 0.30), (10.0, 0.85), (16.0, 0.30))
    sine_period: float = 12.0
    sine_center: float = 0.5
    sine_amplitude: float = 0.3
    sigma: float = 0.2
    compare: str = "twin"
    record_spikes: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.duration is not None and not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if (self.kind in ("step", "sweep-kp", "sweep-tau") and self.duration is not None
                and self.duration <= self.step_onset):
            raise ConfigurationError("duration must extend past the step onset")
        if self.kind.startswith("sweep") and self.values == ():
            object.__setattr__(self, "values", _DEFAULT_VALUES[self.kind])
        if self.kind.startswith("sweep") and not self.values:
            raise ConfigurationError("sweep values must be non-empty")
        if self.compare not in ("twin", "shadow"):
            raise ConfigurationError("compare must be 'twin' or 'shadow'")
        if not 0 <= self.sigma < 1:
            raise ConfigurationError("sigma must lie in [0, 1)")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")

    @property
    def resolved_duration(self) -> float:
        if self.duration is not None:
            return self.duration
        if self.kind in ("step", "sweep-kp", "sweep-tau"):
            return self.step_onset + 40.0
        if self.kind == "dtp":
            # 40 s metric window after the first target jump
            return self.dtp_points[1][0] + 40.0 if len(self.dtp_points) > 1 else 40.0
        if self.kind == "sine":
            return 2 * self.sine_period
        return 2.0

    def profile(self):
        if self.kind == "dtp":
            return dtp_profile(self.dtp_points)
        if self.kind == "sine":
            return Sinusoid(self.sine_period, self.sine_center, self.sine_amplitude)
        return Step(self.step_onset, self.step_a0, self.step_a1)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["duration"] = self.resolved_duration
        return d


def default_config(kind: str) -> ExperimentConfig:
    """Per-kind defaults; the trace sweep runs at ``SWEEP_TAU_KP``."""
    if kind == "sweep-tau":
        return ExperimentConfig(kind=kind, loop=LoopConfig(kp=SWEEP_TAU_KP))
    return ExperimentConfig(kind=kind)


# nested dataclass fields, for loading configs from plain dicts
_NESTED = {
    ExperimentConfig: {"topology": TopologyConfig, "loop": LoopConfig, "plant": PlantConfig},
    TopologyConfig: {"weights": WeightTable, "neuron": NeuronParams, "inhibitory_neuron": NeuronParams},
    LoopConfig: {"encoder": EncoderConfig},
}


def _from_dict(cls, data: dict, base=None):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    base = base if base is not None else cls()
    kw = {}
    for key, value in data.items():
        sub = _NESTED.get(cls, {}).get(key)
        if sub is not None:
            kw[key] = _from_dict(sub, value, getattr(base, key))
        elif isinstance(value, list):
            kw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kw[key] = value
    try:
        return replace(base, **kw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_from_dict(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data, base)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a JSON file whose keys mirror ``ExperimentConfig``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return config_from_dict(data, base)


# ---------------------------------------------------------------- single runs

def run_seed(cfg: ExperimentConfig, seed: int, graph: NetworkGraph | None = None) -> Trajectory:
    """One closed-loop run of ``cfg`` with ``seed``; the plant starts at the initial target."""
    graph = graph if graph is not None else build_network(cfg.topology)
    profile = cfg.profile()
    plant = Plant(cfg.plant, cfg.plant.denormalize(profile(0.0)))
    return run_closed_loop(graph, plant, profile, cfg.loop, cfg.resolved_duration, seed, cfg.record_spikes)


def winner_track(traj: Trajectory, bin_ms: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
    """Bin start times (s) and the most active output neuron per bin (-1 if silent)."""
    t_c, idx = traj.population_spikes("C")
    size = traj.populations["C"][1] - traj.populations["C"][0]
    n_bins = int(math.ceil((traj.t[-1] * 1000.0 + 1.0) / bin_ms))
    counts = np.zeros((n_bins, size))
    np.add.at(counts, (np.minimum((t_c // bin_ms).astype(int), n_bins - 1), idx.astype(int)), 1)
    winners = np.where(counts.sum(axis=1) > 0, counts.argmax(axis=1), -1)
    return np.arange(n_bins) * bin_ms / 1000.0, winners


def trajectory_metrics(cfg: ExperimentConfig, traj: Trajectory) -> dict:
    """Metric dictionary for one run of ``cfg``."""
    duration = cfg.resolved_duration
    if cfg.kind in ("step", "sweep-kp", "sweep-tau"):
        onset = cfg.step_onset
        span = traj.t[-1] + (traj.t[1] - traj.t[0]) - onset
        out = {"rmse": rmse(traj, onset, min(40.0, span))}
        try:
            out["rise_time"] = rise_time(traj, onset)
        except NotReached:
            out["rise_time"] = None
        out["overshoot"] = overshoot(traj, onset)
        if duration >= onset + 15.0:
            out["band_fraction"] = band_fraction(traj, onset + 5.0, onset + 15.0)
        return out
    out = {"rmse": rmse(traj, 0.0, duration), "rise_time": None, "overshoot": None}
    out["sign_agreement"] = sign_agreement(traj)
    if cfg.kind == "dtp" and len(traj.spike_t):
        _, winners = winner_track(traj)
        out["winner_track"] = winners.tolist()
    return out


# ------------------------------------------------------------- open-loop probes

def steady_state_error(graph: NetworkGraph, a: float, b: float, seed: int = 0,
                       settle: float = 1.0, window: float = 1.0,
                       encoder: EncoderConfig = EncoderConfig()) -> float:
    """|c - (a - b)| decoded from output spike counts in the last ``window`` seconds.

    A silent output population counts as the largest possible error, 2.
    """
    sim = Simulator(graph, seed=seed)
    sim.set_rates("A", encode_value(a, encoder).rates)
    sim.set_rates("B", encode_value(b, encoder).rates)
    c_ids = graph.populations["C"]
    n_settle = int(round(settle * 1000.0 / sim.dt))
    n_window = int(round(window * 1000.0 / sim.dt))
    for _ in range(n_settle):
        sim.advance()
    counts = np.zeros(len(c_ids))
    for _ in range(n_window):
        fired = sim.advance()
        out = fired[(fired >= c_ids.start) & (fired < c_ids.stop)] - c_ids.start
        counts[out] += 1
    decoded = decode_com(counts, encoder.n)
    if not decoded.defined:
        return 2.0
    return abs(decoded.c - (a - b))


def outlier_cell(a: float, b: float, n: int, offset: int = 2) -> tuple[int, int]:
    """A hidden cell in the winner's row but ``offset`` diagonals away from it."""
    i, j = int(round(a * (n - 1))), int(round(b * (n - 1)))
    jj = j + offset if j + offset < n else j - offset
    return i, jj


def inject_outlier(graph: NetworkGraph, cell: tuple[int, int], factor: float = 3.0,
                   copy: str = "H1") -> NetworkGraph:
    """Copy of ``graph`` with the A/B input weights of one hidden cell scaled by ``factor``."""
    out = graph.copy()
    n = out.meta["n"]
    nid = out.populations[copy].start + cell[0] * n + cell[1]
    m = (out.role_mask("a_h") | out.role_mask("b_h")) & (out.post == nid)
    if not m.any():
        raise ConfigurationError(f"hidden cell {cell} of {copy} has no input synapses")
    out.weight[m] *= factor
    return out


def mismatch_errors(topology: TopologyConfig, sigma: float, seed: int,
                    pairs=STUDY_PAIRS, outlier: bool = False) -> float:
    """Mean steady-state error over ``pairs`` for one mismatched instance of ``topology``."""
    base = build_network(topology)
    errs = []
    for a, b in pairs:
        g = base
        if outlier:
            g = inject_outlier(g, outlier_cell(a, b, topology.n))
        g = apply_mismatch(g, sigma, substream(seed, STREAM_MISMATCH))
        errs.append(steady_state_error(g, a, b, seed=seed, encoder=EncoderConfig(n=topology.n)))
    return float(np.mean(errs))


def mismatch_study(cfg: ExperimentConfig) -> dict:
    """Paired on/off comparison of the twin or shadow refinement under mismatch."""
    flag = "twin_hidden" if cfg.compare == "twin" else "shadow_inhibition"
    outlier = cfg.compare == "shadow"
    jobs = [(replace(cfg.topology, **{flag: state}), cfg.sigma, s, STUDY_PAIRS, outlier)
            for state in (True, False) for s in cfg.seeds]
    errs = _map(mismatch_errors, jobs, cfg.jobs)
    k = len(cfg.seeds)
    on, off = errs[:k], errs[k:]
    return {
        "compare": cfg.compare,
        "sigma": cfg.sigma,
        "outlier_injection": outlier,
        "seeds": list(cfg.seeds),
        "on": on,
        "off": off,
        "median_on": float(np.median(on)),
        "median_off": float(np.median(off)),
    }


# ---------------------------------------------------------------- artifacts

def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for row in zip(traj.t, traj.target, traj.encoder, traj.decoded, traj.expected, traj.command):
            w.writerow([_fmt(x) for x in row])


def write_spikes_csv(traj: Trajectory, path) -> None:
    starts = sorted((r[0], r[1], name) for name, r in traj.populations.items())
    lo = np.array([s for s, _, _ in starts])
    names = [name for _, _, name in starts]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPIKES_HEADER)
        if not len(traj.spike_t):
            return
        pop = np.searchsorted(lo, traj.spike_neuron, side="right") - 1
        for t, p, nid in zip(traj.spike_t, pop, traj.spike_neuron):
            w.writerow([_fmt(t), names[p], int(nid - lo[p])])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(TRAJECTORY_HEADER))
    return {name: data[:, k] for k, name in enumerate(TRAJECTORY_HEADER)}


PLOT_SCRIPT = '''"""Render raster and trajectory figures from the CSV files next to this script."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

ROWS = ("A", "B", "H1", "H2", "C")


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def plot_run(run_dir):
    _, traj = load(run_dir / "trajectory.csv")
    t = [float(r[0]) for r in traj]
    fig, axes = plt.subplots(len(ROWS) + 2, 1, figsize=(8, 12), sharex=True)
    spikes_path = run_dir / "spikes.csv"
    if spikes_path.exists():
        _, spikes = load(spikes_path)
        for ax, name in zip(axes, ROWS):
            pts = [(float(r[0]) / 1000.0, int(r[2])) for r in spikes if r[1] == name]
            if pts:
                ax.scatter(*zip(*pts), s=0.5, c="k")
            ax.set_ylabel(name)
    ax = axes[-2]
    ax.plot(t, [float(r[1]) for r in traj], "r", label="target")
    ax.plot(t, [float(r[2]) for r in traj], "b", label="encoder")
    ax.legend(loc="upper right")
    ax = axes[-1]
    ax.plot(t, [float(r[4]) for r in traj], "k", label="expected error")
    ax.plot(t, [float(r[3]) for r in traj], "m", label="decoded error")
    ax.set_xlabel("time (s)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(run_dir / "figure.png", dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    for traj in sorted(root.rglob("trajectory.csv")):
        plot_run(traj.parent)
'''


def _run_job(cfg: ExperimentConfig, seed: int, run_dir: str) -> dict:
    traj = run_seed(cfg, seed)
    os.makedirs(run_dir, exist_ok=True)
    write_trajectory_csv(traj, os.path.join(run_dir, "trajectory.csv"))
    if cfg.record_spikes:
        write_spikes_csv(traj, os.path.join(run_dir, "spikes.csv"))
    return trajectory_metrics(cfg, traj)


def _call(args):
    fn, a = args
    return fn(*a)


def _map(fn, jobs: list[tuple], n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(*a) for a in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_call, [(fn, a) for a in jobs]))


def _aggregate(runs: list[dict]) -> dict:
    keys = [k for k in ("rmse", "rise_time", "overshoot", "band_fraction", "sign_agreement") if k in runs[0]]
    return {k: summarize([r.get(k) for r in runs]) for k in keys}


def _sweep_point(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    if cfg.kind == "sweep-kp":
        return replace(cfg, loop=replace(cfg.loop, kp=float(value)))
    return replace(cfg, loop=replace(cfg.loop, trace_tau=float(value)))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every seed (and sweep point) of ``cfg`` and write its artifacts under ``cfg.out``.

    Returns the content written to ``metrics.json``.
    """
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")

    result: dict = {"kind": cfg.kind, "config": cfg.to_dict()}
    if cfg.kind == "mismatch-study":
        result["study"] = mismatch_study(cfg)
    else:
        if cfg.kind.startswith("sweep"):
            param = "kp" if cfg.kind == "sweep-kp" else "trace_tau"
            points = [(f"{param}_{v:g}", _sweep_point(cfg, v), {param: float(v)}) for v in cfg.values]
        else:
            points = [("", cfg, {})]
        jobs, labels = [], []
        for sub, pcfg, params in points:
            for s in cfg.seeds:
                jobs.append((pcfg, s, str(out / sub / f"seed_{s}")))
                labels.append((sub, params, s))
        per_run = _map(_run_job, jobs, cfg.jobs)
        runs = [{"seed": s, **params, **m} for (_, params, s), m in zip(labels, per_run)]
        result["runs"] = runs
        if cfg.kind.startswith("sweep"):
            param = "kp" if cfg.kind == "sweep-kp" else "trace_tau"
            result["aggregate"] = [
                {param: float(v), **_aggregate([r for r in runs if r[param] == float(v)])}
                for v in cfg.values
            ]
        else:
            result["aggregate"] = _aggregate(runs)
        (out / "plot.py").write_text(PLOT_SCRIPT)

    with open(out / "metrics.json", "w") as fh:
        json.dump(result, fh, indent=2)
    return result
