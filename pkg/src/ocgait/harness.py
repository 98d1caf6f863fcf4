"""Streaming replay harness: sample clock, Gaussian noise, latency-aware
delivery, and the noise-robustness sweep.

The simulated sensor emits the stride's thigh angle at a configurable rate;
the estimator consumes the newest available sample only once its previous
computation has finished, so slow matches skip samples exactly as a real
controller would. Ground-truth progress is the elapsed-sample fraction of
the stride.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRange, InvalidConfig
from .gait_data import GaitTrajectory, resample, segment_stride
from .phase_estimator import EstimatorConfig, EstimatorSession, ReferenceSequence
from .predictor import PredictionPair

PROGRESS_TOLERANCE_PCT = 2.0  # |error| <= this counts as an accurate update


@dataclass(frozen=True)
class LatencyModel:
    """'measured' wall time per match, or a fixed value for deterministic runs."""

    kind: str = "measured"
    fixed_ms: float = 5.0

    def __post_init__(self):
        if self.kind not in ("measured", "fixed"):
            raise InvalidConfig(f"latency model must be 'measured' or 'fixed', got {self.kind!r}")
        if self.fixed_ms <= 0:
            raise InvalidConfig("fixed latency must be positive")

    @classmethod
    def parse(cls, text: str) -> "LatencyModel":
        if text == "measured":
            return cls(kind="measured")
        if text.startswith("fixed:"):
            return cls(kind="fixed", fixed_ms=float(text.split(":", 1)[1]))
        raise InvalidConfig(f"bad latency model {text!r}; use 'measured' or 'fixed:<ms>'")


@dataclass(frozen=True)
class ReplayConfig:
    rate_hz: float = 100.0
    noise_std: float = 0.0
    rng_seed: int = 0
    latency: LatencyModel = LatencyModel()

    def __post_init__(self):
        if not 25.0 <= self.rate_hz <= 150.0:
            raise InvalidConfig("rate_hz must be within [25, 150]")
        if self.noise_std < 0:
            raise InvalidConfig("noise_std must be nonnegative")


@dataclass(frozen=True)
class StepRecord:
    t_s: float
    progress_pred: float
    progress_truth: float
    knee_index: int
    latency_ms: float
    dtw_cost: float


@dataclass(frozen=True)
class RunMetrics:
    progress_rmse_pct: float
    progress_accuracy: float
    thigh_rmse_pct: float
    knee_rmse_pct: float
    pearson_thigh: float
    pearson_knee: float
    mean_latency_ms: float

    def __post_init__(self):
        if self.progress_rmse_pct < 0 or self.thigh_rmse_pct < 0 or self.knee_rmse_pct < 0:
            raise InvalidConfig("RMSE values must be nonnegative")
        if not 0.0 <= self.progress_accuracy <= 1.0:
            raise InvalidConfig("accuracy must be in [0, 1]")
        for r in (self.pearson_thigh, self.pearson_knee):
            if not -1.0 - 1e-12 <= r <= 1.0 + 1e-12:
                raise InvalidConfig("pearson out of [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "progress_rmse_pct": self.progress_rmse_pct,
            "progress_accuracy": self.progress_accuracy,
            "thigh_rmse_pct": self.thigh_rmse_pct,
            "knee_rmse_pct": self.knee_rmse_pct,
            "pearson_thigh": self.pearson_thigh,
            "pearson_knee": self.pearson_knee,
            "mean_latency_ms": self.mean_latency_ms,
        }


@dataclass(frozen=True)
class NoiseSweepRow:
    noise_std: float
    progress_rmse_pct: float
    accuracy: float


@dataclass(frozen=True)
class NoiseSweepReport:
    rows: tuple[NoiseSweepRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        stds = [r.noise_std for r in self.rows]
        if stds != sorted(stds) or len(set(stds)) != len(stds):
            raise InvalidConfig("sweep rows must have ascending unique noise levels")


def default_noise_grid() -> np.ndarray:
    """Noise standard deviations 0.05, 0.075, ..., 3.0 (119 levels)."""
    return np.array([(50 + 25 * k) / 1000.0 for k in range(119)])


def add_gaussian_noise(seq, std: float, seed: int) -> np.ndarray:
    """seq + N(0, std^2), elementwise, deterministic per seed."""
    if std < 0:
        raise InvalidConfig("std must be nonnegative")
    seq = np.asarray(seq, dtype=np.float64)
    return seq + np.random.default_rng(seed).normal(0.0, std, size=len(seq))


def compute_metrics(pred, truth) -> tuple[float, float]:
    """(range-normalized RMSE in percent, Pearson r) of pred against truth."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) != len(truth) or len(truth) < 2:
        raise InvalidConfig("compute_metrics needs equal lengths >= 2")
    rng_span = float(np.max(truth) - np.min(truth))
    if rng_span == 0.0:
        raise DegenerateRange("ground truth is constant")
    rmse = math.sqrt(float(np.mean((pred - truth) ** 2)))
    r = float(np.corrcoef(pred, truth)[0, 1])
    return 100.0 * rmse / rng_span, r


def replay_stride(
    thigh_truth,
    knee_truth,
    span_s: float,
    reference: PredictionPair,
    cfg: ReplayConfig,
    est_cfg: EstimatorConfig | None = None,
    tolerance_pct: float = PROGRESS_TOLERANCE_PCT,
) -> tuple[RunMetrics, list[StepRecord]]:
    """Replay one stride's thigh curve into a fresh estimator session.

    ``thigh_truth``/``knee_truth`` are the stride's ground-truth curves (any
    length; they are interpolated onto the sample clock), ``span_s`` the
    stride duration they cover.
    """
    thigh_truth = np.asarray(thigh_truth, dtype=np.float64)
    knee_truth = np.asarray(knee_truth, dtype=np.float64)
    f = cfg.rate_hz
    n_samples = int(math.floor(span_s * f)) + 1
    if n_samples < 6:
        raise InvalidConfig("stride too short for the requested sample rate")
    t_k = np.arange(n_samples) / f
    positions = t_k / span_s * (len(thigh_truth) - 1)
    stream = np.interp(positions, np.arange(len(thigh_truth)), thigh_truth)
    stream = stream + np.random.default_rng(cfg.rng_seed).normal(0.0, cfg.noise_std, n_samples)

    base = est_cfg if est_cfg is not None else EstimatorConfig()
    # The reference curve spans the whole stride, so the session's grid must
    # be anchored to span_s; the stream may stop short of it at coarse rates.
    session_cfg = replace(base, ref_duration_s=span_s, stream_rate_hz=f)
    session = EstimatorSession(
        ReferenceSequence(reference.thigh_pred),
        cfg=session_cfg,
        knee_len=len(reference.knee_pred),
    )

    steps: list[StepRecord] = []
    t_free = 0.0
    last_k = -1
    while last_k < n_samples - 1:
        k_avail = min(n_samples - 1, int(math.floor(t_free * f + 1e-9)))
        if k_avail <= last_k:
            k = last_k + 1  # idle until the next sample arrives
            t_now = t_k[k]
        else:
            k = k_avail
            t_now = t_free
        if cfg.latency.kind == "measured":
            t0 = time.perf_counter()
            est = session.update(stream[k], t_s=t_k[k])
            latency_ms = (time.perf_counter() - t0) * 1000.0
        else:
            est = session.update(stream[k], t_s=t_k[k])
            latency_ms = cfg.latency.fixed_ms
        if est is not None:
            truth_pct = 100.0 * t_k[k] / span_s
            steps.append(
                StepRecord(
                    t_s=float(t_k[k]),
                    progress_pred=est.progress_pct,
                    progress_truth=truth_pct,
                    knee_index=est.knee_index,
                    latency_ms=latency_ms,
                    dtw_cost=est.dtw_cost,
                )
            )
        last_k = k
        t_free = t_now + latency_ms / 1000.0

    if not steps:
        raise InvalidConfig("replay produced no estimates")
    errors = np.array([s.progress_pred - s.progress_truth for s in steps])
    progress_rmse = math.sqrt(float(np.mean(errors**2)))
    accuracy = float(np.mean(np.abs(errors) <= tolerance_pct))

    thigh_ref = resample(thigh_truth, len(reference.thigh_pred))
    knee_ref = resample(knee_truth, len(reference.knee_pred))
    thigh_rmse, pearson_thigh = compute_metrics(reference.thigh_pred, thigh_ref)
    knee_rmse, pearson_knee = compute_metrics(reference.knee_pred, knee_ref)

    metrics = RunMetrics(
        progress_rmse_pct=progress_rmse,
        progress_accuracy=accuracy,
        thigh_rmse_pct=thigh_rmse,
        knee_rmse_pct=knee_rmse,
        pearson_thigh=pearson_thigh,
        pearson_knee=pearson_knee,
        mean_latency_ms=float(np.mean([s.latency_ms for s in steps])),
    )
    return metrics, steps


def replay(
    traj: GaitTrajectory,
    reference: PredictionPair,
    cfg: ReplayConfig,
    est_cfg: EstimatorConfig | None = None,
    cycle_start_hint: int | None = None,
    tolerance_pct: float = PROGRESS_TOLERANCE_PCT,
) -> tuple[RunMetrics, list[StepRecord]]:
    """Segment the crossing stride out of a trajectory and replay it."""
    if cycle_start_hint is None:
        cycle_start_hint = len(traj) // 2
    segs = segment_stride(traj, cycle_start_hint)
    span_s = (segs.indices[1] - segs.indices[0]) / traj.rate_hz
    return replay_stride(
        segs.thigh, segs.knee, span_s, reference, cfg, est_cfg, tolerance_pct
    )


def noise_sweep(
    traj: GaitTrajectory,
    reference: PredictionPair,
    base_cfg: ReplayConfig,
    stds=None,
    repeats: int = 10,
    est_cfg: EstimatorConfig | None = None,
    tolerance_pct: float = PROGRESS_TOLERANCE_PCT,
) -> NoiseSweepReport:
    """Replay per noise level, averaging RMSE/accuracy over ``repeats`` seeds."""
    if repeats < 1:
        raise InvalidConfig("repeats must be >= 1")
    grid = default_noise_grid() if stds is None else np.asarray(stds, dtype=np.float64)
    rows = []
    for idx, std in enumerate(grid):
        rmses = []
        accs = []
        for rep in range(repeats):
            seed = base_cfg.rng_seed + 100003 * idx + rep
            cfg = replace(base_cfg, noise_std=float(std), rng_seed=seed)
            metrics, _ = replay(traj, reference, cfg, est_cfg, tolerance_pct=tolerance_pct)
            rmses.append(metrics.progress_rmse_pct)
            accs.append(metrics.progress_accuracy)
        rows.append(
            NoiseSweepRow(
                noise_std=float(std),
                progress_rmse_pct=float(np.mean(rmses)),
                accuracy=float(np.mean(accs)),
            )
        )
    return NoiseSweepReport(rows=tuple(rows))
