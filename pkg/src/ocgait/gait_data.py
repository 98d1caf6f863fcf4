"""Gait trajectory data model: stride segmentation, resampling, synthetic
generation, and CSV persistence.

Angles are stored in degrees, heights in millimeters, time in seconds.
An obstacle-crossing cycle runs from a local minimum of the thigh angle to
the subsequent local minimum of the knee angle; the short window before the
cycle (20% of the cycle length) is kept as corrective context.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InvalidConfig,
    NoMinimumFound,
    ParseError,
    SchemaError,
    SegmentTooShort,
    TooShort,
)

TRAJECTORY_COLUMNS = ("t", "thigh_deg", "knee_deg", "ankle_z_mm")
SMOOTH_WINDOW = 5  # moving-average width used before minimum detection
_FMT = "%.9g"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _as_float_array(seq) -> np.ndarray:
    return np.asarray(seq, dtype=np.float64)


@dataclass(frozen=True)
class SubjectInfo:
    """Anthropometrics of the recorded subject; leg length feeds the predictor."""

    height_cm: float = 175.0
    mass_kg: float = 72.0
    leg_length_cm: float = 89.0
    age_yr: float = 21.0

    def __post_init__(self):
        for name in ("height_cm", "mass_kg", "leg_length_cm", "age_yr"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"SubjectInfo.{name} must be positive")


@dataclass(frozen=True, eq=False)
class GaitTrajectory:
    """One recorded session: uniformly sampled thigh/knee angles and the
    sound-side ankle height.

    Timestamps must be strictly increasing and uniform to within 1e-9 s of
    1/rate_hz.
    """

    t: np.ndarray
    thigh_deg: np.ndarray
    knee_deg: np.ndarray
    ankle_z_mm: np.ndarray
    rate_hz: float
    subject: SubjectInfo = field(default_factory=SubjectInfo)
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "t", _as_float_array(self.t))
        object.__setattr__(self, "thigh_deg", _as_float_array(self.thigh_deg))
        object.__setattr__(self, "knee_deg", _as_float_array(self.knee_deg))
        object.__setattr__(self, "ankle_z_mm", _as_float_array(self.ankle_z_mm))
        n = len(self.t)
        if not (len(self.thigh_deg) == len(self.knee_deg) == len(self.ankle_z_mm) == n):
            raise SchemaError("trajectory columns have unequal lengths")
        if n < 2:
            raise SchemaError("trajectory needs at least two samples")
        if self.rate_hz <= 0:
            raise SchemaError("rate_hz must be positive")
        dt = np.diff(self.t)
        if np.any(dt <= 0):
            raise SchemaError("timestamps must be strictly increasing")
        if np.any(np.abs(dt - 1.0 / self.rate_hz) > 1e-9):
            raise SchemaError("timestamps must be uniform at 1/rate_hz")
        for name in ("thigh_deg", "knee_deg", "ankle_z_mm"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise SchemaError(f"{name} contains non-finite values")
        if np.any(self.ankle_z_mm < 0):
            raise SchemaError("ankle_z_mm must be nonnegative")

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class StrideSegments:
    """Cropped windows of one obstacle-crossing cycle.

    ``thigh``/``knee`` form the paired cycle segment (thigh minimum through
    the subsequent knee minimum, inclusive). ``pre_angle`` holds the thigh
    samples immediately before the cycle, 20% of the cycle length.
    ``indices`` are (thigh_min_idx, knee_min_idx) into the source trajectory.
    """

    pre_angle: np.ndarray
    thigh: np.ndarray
    knee: np.ndarray
    ankle_height: np.ndarray
    indices: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "pre_angle", _as_float_array(self.pre_angle))
        object.__setattr__(self, "thigh", _as_float_array(self.thigh))
        object.__setattr__(self, "knee", _as_float_array(self.knee))
        object.__setattr__(self, "ankle_height", _as_float_array(self.ankle_height))
        if len(self.thigh) != len(self.knee):
            raise SchemaError("thigh and knee segments must pair up")
        expected = max(1, round_half_up(0.2 * len(self.thigh)))
        if len(self.pre_angle) != expected:
            raise SchemaError(
                f"pre_angle length {len(self.pre_angle)} != 20% of cycle ({expected})"
            )

    @property
    def span_samples(self) -> int:
        return len(self.thigh)


@dataclass(frozen=True)
class SyntheticGaitConfig:
    """Parameters of the synthetic two-stride generator.

    The session holds one leading stride (the sound leg clears the obstacle;
    its ankle-height bump encodes the obstacle) followed by the crossing
    stride of the instrumented leg. Joint curves are sums of raised-cosine
    pulses, so minima are smooth, strict, and land where the pulse centers
    put them.
    """

    obstacle_height_mm: float = 200.0
    foot_distance_mm: float = 200.0
    stride_duration_s: float = 1.2
    rate_hz: float = 100.0
    seed: int = 0
    peak_thigh_flexion_deg: float = 45.0
    peak_knee_flexion_deg: float = 70.0
    timing_offset: float = 0.0
    subject: SubjectInfo = field(default_factory=SubjectInfo)

    def __post_init__(self):
        checks = [
            (150.0 <= self.obstacle_height_mm <= 300.0, "obstacle_height_mm in [150, 300]"),
            (100.0 <= self.foot_distance_mm <= 300.0, "foot_distance_mm in [100, 300]"),
            (0.4 <= self.stride_duration_s <= 5.0, "stride_duration_s in [0.4, 5]"),
            (10.0 <= self.rate_hz <= 1000.0, "rate_hz in [10, 1000]"),
            (10.0 <= self.peak_thigh_flexion_deg <= 90.0, "peak_thigh_flexion_deg in [10, 90]"),
            (20.0 <= self.peak_knee_flexion_deg <= 120.0, "peak_knee_flexion_deg in [20, 120]"),
            (abs(self.timing_offset) <= 0.02, "timing_offset in [-0.02, 0.02]"),
        ]
        for ok, what in checks:
            if not ok:
                raise InvalidConfig(f"SyntheticGaitConfig: {what}")


def moving_average(x: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average with edge padding (length preserved)."""
    x = _as_float_array(x)
    if window <= 1 or len(x) < window:
        return x.copy()
    half = window // 2
    padded = np.pad(x, half, mode="edge")
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def local_minima(x: np.ndarray) -> np.ndarray:
    """Indices of interior points strictly below both neighbors."""
    x = _as_float_array(x)
    if len(x) < 3:
        return np.empty(0, dtype=int)
    mask = (x[1:-1] < x[:-2]) & (x[1:-1] < x[2:])
    return np.nonzero(mask)[0] + 1


def segment_stride(traj: GaitTrajectory, cycle_start_hint: int = 0) -> StrideSegments:
    """Crop one obstacle-crossing cycle from a trajectory.

    The cycle starts at the first thigh-angle local minimum at or after
    ``cycle_start_hint`` and ends at the next knee-angle local minimum.
    Minima are detected on 5-sample smoothed signals. The ankle-height
    window runs between the first and last ankle minima found in the
    [hint, cycle end] range.
    """
    if not 0 <= cycle_start_hint < len(traj):
        raise ValueError("cycle_start_hint outside trajectory")
    thigh_s = moving_average(traj.thigh_deg)
    knee_s = moving_average(traj.knee_deg)
    ankle_s = moving_average(traj.ankle_z_mm)

    th_mins = local_minima(thigh_s)
    th_mins = th_mins[th_mins >= cycle_start_hint]
    if len(th_mins) == 0:
        raise NoMinimumFound("no thigh-angle local minimum after the hint")
    thigh_min = int(th_mins[0])

    kn_mins = local_minima(knee_s)
    kn_mins = kn_mins[kn_mins > thigh_min]
    if len(kn_mins) == 0:
        raise NoMinimumFound("no knee-angle local minimum after the thigh minimum")
    knee_min = int(kn_mins[0])

    cycle_len = knee_min - thigh_min + 1
    if cycle_len < 5:
        raise SegmentTooShort(f"cycle has {cycle_len} samples (< 5)")
    pre_len = max(1, round_half_up(0.2 * cycle_len))
    pre_start = thigh_min - pre_len
    if pre_start < 0:
        raise SegmentTooShort("not enough history before the cycle for the pre-angle window")

    # The sound leg clears the obstacle before the instrumented side does, so
    # its ankle bump precedes the hint; scan the whole maneuver up to cycle end.
    an_mins = local_minima(ankle_s)
    an_mins = an_mins[an_mins <= knee_min]
    if len(an_mins) < 2:
        raise NoMinimumFound("need two ankle-height local minima to crop the ankle window")

    return StrideSegments(
        pre_angle=traj.thigh_deg[pre_start:thigh_min],
        thigh=traj.thigh_deg[thigh_min : knee_min + 1],
        knee=traj.knee_deg[thigh_min : knee_min + 1],
        ankle_height=traj.ankle_z_mm[int(an_mins[0]) : int(an_mins[-1]) + 1],
        indices=(thigh_min, knee_min),
    )


def resample(seq, target_len: int) -> np.ndarray:
    """Linear interpolation onto ``target_len`` uniform points, endpoints exact."""
    seq = _as_float_array(seq)
    if len(seq) < 2:
        raise TooShort("resample needs at least 2 samples")
    if target_len < 2:
        raise ValueError("target_len must be >= 2")
    positions = np.linspace(0.0, len(seq) - 1.0, target_len)
    return np.interp(positions, np.arange(len(seq), dtype=np.float64), seq)


def _pulse(u: np.ndarray, center: float, width: float) -> np.ndarray:
    """Raised-cosine pulse: 1 at the center, 0 outside |u - center| <= width/2."""
    z = (u - center) / width
    return np.where(np.abs(z) <= 0.5, 0.5 * (1.0 + np.cos(2.0 * np.pi * z)), 0.0)


def generate_synthetic(cfg: SyntheticGaitConfig) -> GaitTrajectory:
    """Deterministic two-stride synthetic session.

    Stride 0: the sound leg crosses (ankle bump whose height tracks the
    obstacle, bracketed by lift-off/touch-down dips). Stride 1: the
    instrumented leg crosses; its knee swing amplitude grows strictly with
    obstacle height. Pulse supports stay inside each stride so the signal is
    continuous across the stride boundary, and overlap so the only strict
    minima are the intended ones.
    """
    rng = np.random.default_rng(cfg.seed)
    amp_scale = rng.uniform(0.96, 1.04)
    dip_scale = rng.uniform(0.90, 1.10)
    jitter = rng.uniform(-0.01, 0.01)
    base_thigh = -5.0 + rng.uniform(-2.0, 2.0)
    base_knee = 6.0 + rng.uniform(0.0, 3.0)

    shift = cfg.timing_offset + jitter
    h_norm = (cfg.obstacle_height_mm - 150.0) / 150.0
    d_norm = (cfg.foot_distance_mm - 100.0) / 200.0

    n = round_half_up(2.0 * cfg.stride_duration_s * cfg.rate_hz)
    t = np.arange(n, dtype=np.float64) / cfg.rate_hz
    tau = t / cfg.stride_duration_s
    stride = np.minimum(np.floor(tau), 1.0)
    u = tau - stride
    crossing = stride >= 1.0

    # Thigh: stance dip then swing peak, per stride.
    thigh_peak = np.where(
        crossing,
        cfg.peak_thigh_flexion_deg * amp_scale * (0.80 + 0.25 * h_norm),
        0.55 * cfg.peak_thigh_flexion_deg * amp_scale,
    )
    thigh_dip = np.where(crossing, 10.0, 9.0) * dip_scale
    # The wide swing pulse keeps the thigh descending through the knee-minimum
    # that ends the cycle; a flat reference tail would make late progress
    # unobservable from the thigh signal.
    thigh = (
        base_thigh
        + thigh_peak * _pulse(u, 0.63 + shift, 0.68)
        - thigh_dip * _pulse(u, 0.18 + shift, 0.28)
    )

    # Knee: large swing peak, small terminal-extension dip that ends the cycle.
    knee_peak = np.where(
        crossing,
        cfg.peak_knee_flexion_deg * amp_scale * (0.70 + 0.50 * h_norm),
        0.55 * cfg.peak_knee_flexion_deg * amp_scale,
    )
    knee = (
        base_knee
        + knee_peak * _pulse(u, 0.62 + shift, 0.64)
        - 4.0 * _pulse(u, 0.90, 0.10)
    )

    # Sound-ankle height: crossing bump during stride 0 only, flat afterwards.
    z0 = 80.0
    bump_w = 0.55 + 0.10 * d_norm
    ankle = np.full(n, z0)
    lead = ~crossing
    ankle[lead] = (
        z0
        + (cfg.obstacle_height_mm + 60.0) * _pulse(u[lead], 0.50, bump_w)
        - 5.0 * _pulse(u[lead], 0.14, 0.12)
        - 5.0 * _pulse(u[lead], 0.86, 0.12)
    )

    return GaitTrajectory(
        t=t,
        thigh_deg=thigh,
        knee_deg=knee,
        ankle_z_mm=ankle,
        rate_hz=cfg.rate_hz,
        subject=cfg.subject,
        seed=cfg.seed,
    )


def crossing_cycle_hint(traj: GaitTrajectory) -> int:
    """Start-of-second-stride index for two-stride synthetic sessions."""
    return len(traj) // 2


def save_trajectory(traj: GaitTrajectory, path) -> None:
    """Write the CSV trajectory format (9 significant digits, # metadata)."""
    lines = [f"# rate_hz={_FMT % traj.rate_hz}"]
    s = traj.subject
    lines.append(f"# leg_length_cm={_FMT % s.leg_length_cm}")
    lines.append(f"# height_cm={_FMT % s.height_cm}")
    lines.append(f"# mass_kg={_FMT % s.mass_kg}")
    lines.append(f"# age_yr={_FMT % s.age_yr}")
    if traj.seed is not None:
        lines.append(f"# seed={traj.seed}")
    lines.append(",".join(TRAJECTORY_COLUMNS))
    for i in range(len(traj)):
        row = (traj.t[i], traj.thigh_deg[i], traj.knee_deg[i], traj.ankle_z_mm[i])
        lines.append(",".join(_FMT % v for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_trajectory(path) -> GaitTrajectory:
    """Parse the CSV trajectory format written by :func:`save_trajectory`.

    Timestamps are validated against the uniform grid implied by rate_hz
    (tolerance 1e-6 s, covering the 9-digit serialization) and snapped back
    onto it.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    meta: dict[str, str] = {}
    header_idx = None
    for i, line in enumerate(raw_lines):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        header_idx = i
        break
    if header_idx is None:
        raise ParseError("no header row found (empty file?)", line=len(raw_lines) or 1)
    header = tuple(c.strip() for c in raw_lines[header_idx].split(","))
    if header != TRAJECTORY_COLUMNS:
        raise SchemaError(
            f"expected columns {','.join(TRAJECTORY_COLUMNS)}, got {','.join(header)}"
        )
    if "rate_hz" not in meta:
        raise SchemaError("missing required metadata: rate_hz")
    try:
        rate_hz = float(meta["rate_hz"])
    except ValueError as exc:
        raise SchemaError(f"bad rate_hz metadata: {meta['rate_hz']}") from exc

    rows = []
    for lineno in range(header_idx + 1, len(raw_lines)):
        stripped = raw_lines[lineno].strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", line=lineno + 1)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno + 1)
    if len(rows) < 2:
        raise ParseError("fewer than 2 data rows", line=len(raw_lines))
    data = np.array(rows, dtype=np.float64)

    t_text = data[:, 0]
    if np.any(np.diff(t_text) <= 0):
        raise SchemaError("timestamps must be strictly increasing")
    grid = t_text[0] + np.arange(len(t_text)) / rate_hz
    if np.any(np.abs(t_text - grid) > 1e-6):
        raise SchemaError("timestamps deviate from the uniform 1/rate_hz grid")

    def _subject_field(key: str, default: float) -> float:
        if key not in meta:
            return default
        try:
            return float(meta[key])
        except ValueError as exc:
            raise SchemaError(f"bad {key} metadata: {meta[key]}") from exc

    subject = SubjectInfo(
        height_cm=_subject_field("height_cm", 175.0),
        mass_kg=_subject_field("mass_kg", 72.0),
        leg_length_cm=_subject_field("leg_length_cm", 89.0),
        age_yr=_subject_field("age_yr", 21.0),
    )
    seed = int(meta["seed"]) if "seed" in meta else None
    return GaitTrajectory(
        t=grid,
        thigh_deg=data[:, 1],
        knee_deg=data[:, 2],
        ankle_z_mm=data[:, 3],
        rate_hz=rate_hz,
        subject=subject,
        seed=seed,
    )


def synthetic_dataset(
    n: int,
    base_seed: int = 0,
    heights=(150.0, 200.0, 250.0, 300.0),
    distances=(100.0, 200.0, 300.0),
    **overrides,
) -> list[GaitTrajectory]:
    """Convenience corpus: n trajectories cycling through obstacle geometry."""
    trajs = []
    for k in range(n):
        cfg = SyntheticGaitConfig(
            obstacle_height_mm=heights[k % len(heights)],
            foot_distance_mm=distances[k % len(distances)],
            seed=base_seed + k,
            **overrides,
        )
        trajs.append(generate_synthetic(cfg))
    return trajs
