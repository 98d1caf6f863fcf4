"""Streaming gait-phase-progress estimation.

The observed thigh-angle curve (comparison sequence) is matched against the
predicted reference trajectory: both sequences get a synthetic lead-in
extension to soften DTW edge effects, a sliding window of the extended
reference is transformed by a vertical shift/scale and a horizontal window
scale, and the window start plus transform parameters minimizing the DTW
distance yield the progress through the reference.

Progress is normalized as (window end - lead-in length) / reference length
and clamped to be non-decreasing within a session.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.signal import savgol_filter

from .errors import (
    EmptySequence,
    InvalidConfig,
    NoFeasibleWindow,
    TooShort,
    WindowOutOfBounds,
)
from .gait_data import round_half_up


class ExtensionMode(enum.Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True, eq=False)
class ReferenceSequence:
    """Network-predicted thigh trajectory the stream is matched against."""

    rs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rs", np.asarray(self.rs, dtype=np.float64))
        if len(self.rs) < 10:
            raise InvalidConfig("reference needs at least 10 samples")
        if not np.all(np.isfinite(self.rs)):
            raise InvalidConfig("reference contains non-finite values")

    def __len__(self) -> int:
        return len(self.rs)


@dataclass(eq=False)
class ComparisonSequence:
    """Observed thigh samples since cycle entry; append-only."""

    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.values) != len(self.times):
            raise InvalidConfig("values and times must pair up")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidConfig("sample times must be strictly increasing")

    def append(self, t_s: float, value: float) -> None:
        if len(self.times) and t_s <= self.times[-1]:
            raise ValueError(f"sample time {t_s} not after {self.times[-1]}")
        if not np.isfinite(value):
            raise ValueError("sample value must be finite")
        self.times = np.append(self.times, t_s)
        self.values = np.append(self.values, value)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ExtensionParams:
    """Constants of the synthetic lead-in transitions."""

    amplitude: float
    decay_k: float = 2.0
    num_cycles: int = 1
    lin_decay_c: float = 0.5
    short_len: int = 10
    long_len: int = 25

    def __post_init__(self):
        if self.amplitude < 0 or self.decay_k < 0 or self.lin_decay_c < 0:
            raise InvalidConfig("extension constants must be nonnegative")
        if self.num_cycles < 1 or self.short_len < 1 or self.long_len < 1:
            raise InvalidConfig("extension counts must be >= 1")


@dataclass(frozen=True)
class TransformParams:
    """Vertical shift t_y, vertical scale s_y, horizontal window scale s_x."""

    t_y: float
    s_y: float
    s_x: float

    def __post_init__(self):
        if self.s_y <= 0 or self.s_x <= 0:
            raise InvalidConfig("scales must be positive")


@dataclass(frozen=True)
class ProgressEstimate:
    progress_pct: float
    best_i: int
    params_hat: TransformParams
    dtw_cost: float
    knee_index: int

    def __post_init__(self):
        if not 0.0 <= self.progress_pct <= 100.0:
            raise InvalidConfig("progress_pct outside [0, 100]")
        if self.best_i < 1 or self.knee_index < 1:
            raise InvalidConfig("indices are 1-based")
        if self.dtw_cost < 0:
            raise InvalidConfig("dtw_cost must be nonnegative")


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the matcher: grid density, transform bounds, extensions."""

    resample_len: int = 100
    ref_duration_s: float = 1.2
    stream_rate_hz: float = 100.0
    s_x_min: float = 0.5
    s_x_max: float = 2.0
    s_y_min: float = 0.5
    s_y_max: float = 2.0
    t_y_margin_deg: float = 10.0
    i_stride: int = 2
    s_x_grid: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.25)
    s_y_grid: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.25)
    t_y_grid_size: int = 5
    amp_fraction: float = 0.25
    decay_k: float = 2.0
    num_cycles: int = 1
    lin_decay_c: float = 0.5
    short_frac: float = 0.10
    long_frac: float = 0.25
    smooth_window: int = 5
    max_advance_factor: float = 0.0  # progress rate cap vs nominal speed; 0 = off
    refine: bool = True
    nm_max_iter: int = 80

    def __post_init__(self):
        if self.resample_len < 10:
            raise InvalidConfig("resample_len must be >= 10")
        if self.ref_duration_s <= 0 or self.stream_rate_hz <= 0:
            raise InvalidConfig("durations and rates must be positive")
        if not (0 < self.s_x_min <= self.s_x_max and 0 < self.s_y_min <= self.s_y_max):
            raise InvalidConfig("scale bounds must be positive and ordered")
        if self.i_stride < 1 or self.t_y_grid_size < 1:
            raise InvalidConfig("grid densities must be >= 1")
        if list(self.s_x_grid) != sorted(self.s_x_grid) or list(self.s_y_grid) != sorted(self.s_y_grid):
            raise InvalidConfig("scale grids must be ascending")


def default_extension_params(reference: np.ndarray, cfg: EstimatorConfig) -> ExtensionParams:
    rs = np.asarray(reference, dtype=np.float64)
    m = len(rs)
    return ExtensionParams(
        amplitude=cfg.amp_fraction * float(np.max(rs) - np.min(rs)),
        decay_k=cfg.decay_k,
        num_cycles=cfg.num_cycles,
        lin_decay_c=cfg.lin_decay_c,
        short_len=max(1, round_half_up(cfg.short_frac * m)),
        long_len=max(1, round_half_up(cfg.long_frac * m)),
    )


def extend_sinusoidal(seq, p: ExtensionParams) -> np.ndarray:
    """Prepend a decaying sinusoidal transition of ``short_len`` samples.

    The transition runs over t in [0, num_cycles]; its last point sits at an
    integer number of cycles, so it rejoins the first real sample up to
    ``amplitude * exp(-decay_k * num_cycles)``.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if len(seq) == 0:
        raise EmptySequence("cannot extend an empty sequence")
    b = seq[0]
    t = np.linspace(0.0, float(p.num_cycles), p.short_len)
    ext = b + p.amplitude * np.sin(2.0 * np.pi * t) * np.exp(-p.decay_k * t)
    return np.concatenate([ext, seq])


def extend_linear(seq, p: ExtensionParams) -> np.ndarray:
    """Prepend a damped linear back-extrapolation of ``long_len`` samples.

    The slope is the average of the first two forward differences taken from
    the first four points; x counts unit steps back from the sequence, so the
    sample adjacent to it (x = 1) equals the baseline exactly.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if len(seq) < 4:
        raise TooShort("linear extension needs at least 4 samples")
    b = seq[0]
    slop = ((seq[1] - seq[0]) + (seq[3] - seq[2])) / 2.0
    x = np.arange(p.long_len, 0, -1, dtype=np.float64)
    ext = b - (slop * (x - 1.0)) * np.exp(-p.lin_decay_c * x)
    return np.concatenate([ext, seq])


def extend(seq, mode: ExtensionMode, p: ExtensionParams) -> np.ndarray:
    if mode is ExtensionMode.SHORT:
        return extend_sinusoidal(seq, p)
    return extend_linear(seq, p)


def transform_window(window, p: TransformParams) -> np.ndarray:
    """Elementwise s_y * (value - t_y); length unchanged."""
    return p.s_y * (np.asarray(window, dtype=np.float64) - p.t_y)


def scaled_window(rs_ext, i: int, s_x: float, n: int, l1: int) -> np.ndarray:
    """Window of the extended reference starting at 1-based ``i`` with length
    n' = round(s_x * n), subject to n' > l1 and i + n' - 1 <= len(rs_ext)."""
    rs_ext = np.asarray(rs_ext, dtype=np.float64)
    if s_x <= 0:
        raise WindowOutOfBounds("s_x must be positive")
    if i < 1:
        raise WindowOutOfBounds("window start is 1-based")
    n_prime = round_half_up(s_x * n)
    if n_prime <= l1:
        raise WindowOutOfBounds(f"scaled length {n_prime} must exceed lead-in {l1}")
    if i + n_prime - 1 > len(rs_ext):
        raise WindowOutOfBounds(
            f"window [{i}, {i + n_prime - 1}] exceeds extended reference ({len(rs_ext)})"
        )
    return rs_ext[i - 1 : i - 1 + n_prime]


@njit(cache=True)
def _dtw_window_cost(rs_ext, w_start, w_len, s_y, t_y, cs):  # pragma: no cover
    n = cs.shape[0]
    prev = np.empty(n)
    curr = np.empty(n)
    a0 = s_y * (rs_ext[w_start] - t_y)
    prev[0] = abs(a0 - cs[0])
    for j in range(1, n):
        prev[j] = prev[j - 1] + abs(a0 - cs[j])
    for ii in range(1, w_len):
        ai = s_y * (rs_ext[w_start + ii] - t_y)
        curr[0] = prev[0] + abs(ai - cs[0])
        for j in range(1, n):
            c = abs(ai - cs[j])
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if curr[j - 1] < best:
                best = curr[j - 1]
            curr[j] = c + best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[n - 1]


@njit(cache=True)
def _grid_search(
    rs_ext,
    cs_ext,
    l1,
    i_stride,
    sx_vals,
    sy_vals,
    ty_vals,
    rs_cumsum,
    cs_mean,
    ty_lo,
    ty_hi,
    target_end,
    tie_weight,
):  # pragma: no cover
    # Candidate t_y values are the coarse grid plus, per window and s_y, the
    # moment-matched offset that aligns the window's mean level with the
    # observed mean; without it the grid's quantized offsets can rank a
    # wrong window above the true one. The tie_weight term nudges near-tied
    # window ends (flat signal regions) toward the elapsed-time-consistent
    # end without overriding real shape differences.
    m_ext = rs_ext.shape[0]
    n_cmp = cs_ext.shape[0]
    n_ty = ty_vals.shape[0]
    cand = np.empty(n_ty + 1)
    best_score = np.inf
    best_cost = np.inf
    bi = -1
    ba = -1
    bb = -1
    best_ty = 0.0
    for i in range(1, m_ext + 1, i_stride):
        for a in range(sx_vals.shape[0]):
            n_prime = int(np.floor(sx_vals[a] * n_cmp + 0.5))
            if n_prime <= l1 or i + n_prime - 1 > m_ext:
                continue
            penalty = tie_weight * abs(i + n_prime - 1 - target_end)
            w_mean = (rs_cumsum[i - 1 + n_prime] - rs_cumsum[i - 1]) / n_prime
            for b in range(sy_vals.shape[0]):
                ty_star = w_mean - cs_mean / sy_vals[b]
                if ty_star < ty_lo:
                    ty_star = ty_lo
                elif ty_star > ty_hi:
                    ty_star = ty_hi
                k = 0
                placed = False
                for c in range(n_ty):
                    v = ty_vals[c]
                    if not placed and ty_star <= v:
                        cand[k] = ty_star
                        k += 1
                        placed = True
                        if ty_star == v:
                            continue
                    cand[k] = v
                    k += 1
                if not placed:
                    cand[k] = ty_star
                    k += 1
                for c in range(k):
                    cost = _dtw_window_cost(rs_ext, i - 1, n_prime, sy_vals[b], cand[c], cs_ext)
                    score = cost + penalty
                    if score < best_score:
                        best_score = score
                        best_cost = cost
                        bi = i
                        ba = a
                        bb = b
                        best_ty = cand[c]
    return best_cost, bi, ba, bb, best_ty


def select_extension(session: "EstimatorSession") -> ExtensionMode:
    """Short for the first three matches and until progress has exceeded 30%
    for five consecutive matches; long from then on, permanently."""
    if session._long_locked:
        return ExtensionMode.LONG
    if session.iteration < 3:
        return ExtensionMode.SHORT
    if session.consecutive_over_30 >= 5:
        return ExtensionMode.LONG
    return ExtensionMode.SHORT


def map_progress_to_knee_index(progress_pct: float, knee_len: int) -> int:
    """1-based index into the predicted knee trajectory for a progress value."""
    if not 0.0 <= progress_pct <= 100.0:
        raise ValueError("progress_pct outside [0, 100]")
    if knee_len < 1:
        raise ValueError("knee_len must be >= 1")
    return round_half_up(progress_pct / 100.0 * (knee_len - 1)) + 1


def _refine_params(
    rs_ext, cs_ext, l1, i_hat, x0, ty_bounds, cfg, target_end
) -> tuple[np.ndarray, float]:
    m_ext = len(rs_ext)
    n_cmp = len(cs_ext)

    def objective(x):
        t_y, s_y, s_x = x
        if not cfg.s_y_min <= s_y <= cfg.s_y_max:
            return np.inf
        if not cfg.s_x_min <= s_x <= cfg.s_x_max:
            return np.inf
        if not ty_bounds[0] <= t_y <= ty_bounds[1]:
            return np.inf
        n_prime = round_half_up(s_x * n_cmp)
        if n_prime <= l1 or i_hat + n_prime - 1 > m_ext:
            return np.inf
        cost = _dtw_window_cost(rs_ext, i_hat - 1, n_prime, s_y, t_y, cs_ext)
        return cost + cfg.tie_break_weight * abs(i_hat + n_prime - 1 - target_end)

    res = minimize(
        objective,
        np.asarray(x0, dtype=np.float64),
        method="Nelder-Mead",
        options={"maxiter": cfg.nm_max_iter, "xatol": 1e-3, "fatol": 1e-9},
    )
    return res.x, float(res.fun)


def optimize_match(session: "EstimatorSession") -> ProgressEstimate:
    """Search window start and transform parameters minimizing the DTW cost.

    Coarse deterministic grid (ties broken by smallest i, then s_x, s_y,
    t_y) followed by Nelder-Mead refinement of (t_y, s_y, s_x) at the best
    grid point. The refined result is kept only when strictly better.
    """
    cs = session.comparison
    if cs is None or len(cs) < 4:
        raise TooShort("need at least 4 observed samples to match")
    cfg = session.cfg
    mode = select_extension(session)
    p = session.ext_params
    l1 = p.short_len if mode is ExtensionMode.SHORT else p.long_len
    rs_ext = session.extended_reference(mode)
    cs_ext = extend(cs, mode, p)

    ty_lo = float(np.min(cs)) - cfg.t_y_margin_deg
    ty_hi = float(np.max(cs)) + cfg.t_y_margin_deg
    ty_vals = np.linspace(ty_lo, ty_hi, cfg.t_y_grid_size)
    sx_vals = np.array([v for v in cfg.s_x_grid if cfg.s_x_min <= v <= cfg.s_x_max])
    sy_vals = np.array([v for v in cfg.s_y_grid if cfg.s_y_min <= v <= cfg.s_y_max])
    if len(sx_vals) == 0 or len(sy_vals) == 0:
        raise NoFeasibleWindow("scale grids empty after clipping to bounds")

    rs_cumsum = np.concatenate([[0.0], np.cumsum(rs_ext)])
    cost, i_hat, ia, ib, t_y = _grid_search(
        rs_ext,
        cs_ext,
        l1,
        cfg.i_stride,
        sx_vals,
        sy_vals,
        ty_vals,
        rs_cumsum,
        float(np.mean(cs_ext)),
        ty_lo,
        ty_hi,
    )
    if i_hat < 0:
        raise NoFeasibleWindow(
            f"no (i, s_x) satisfies the window constraints (n={len(cs_ext)}, l1={l1})"
        )
    t_y, s_y, s_x = float(t_y), float(sy_vals[ib]), float(sx_vals[ia])

    if cfg.refine:
        x, refined_cost = _refine_params(
            rs_ext, cs_ext, l1, i_hat, (t_y, s_y, s_x), (ty_lo, ty_hi), cfg
        )
        if np.isfinite(refined_cost) and refined_cost < cost:
            t_y, s_y, s_x = float(x[0]), float(x[1]), float(x[2])
            cost = refined_cost

    n_prime = round_half_up(s_x * len(cs_ext))
    m = len(session.reference)
    progress = float(np.clip(100.0 * (i_hat + n_prime - 1 - l1) / m, 0.0, 100.0))
    return ProgressEstimate(
        progress_pct=progress,
        best_i=int(i_hat),
        params_hat=TransformParams(t_y=t_y, s_y=s_y, s_x=s_x),
        dtw_cost=float(cost),
        knee_index=map_progress_to_knee_index(progress, session.knee_len),
    )


class EstimatorSession:
    """Single-writer streaming state: one update at a time per session.

    Sessions are independent; everything is deterministic, so replays of the
    same stream produce identical estimates.
    """

    def __init__(self, reference, cfg: EstimatorConfig | None = None, knee_len: int | None = None):
        if not isinstance(reference, ReferenceSequence):
            reference = ReferenceSequence(np.asarray(reference, dtype=np.float64))
        self.reference = reference
        self.cfg = cfg or EstimatorConfig()
        self.knee_len = int(knee_len) if knee_len is not None else len(reference)
        if self.knee_len < 1:
            raise InvalidConfig("knee_len must be >= 1")
        self.observed = ComparisonSequence()
        self.iteration = 0
        self.consecutive_over_30 = 0
        self.extension_mode = ExtensionMode.SHORT
        self.last_progress = 0.0
        self.ext_params = default_extension_params(reference.rs, self.cfg)
        self._long_locked = False
        self._cs_grid: np.ndarray | None = None
        self._tau: float | None = None
        self._last_tau: float | None = None
        self._have_estimate = False
        self._rs_ext: dict[ExtensionMode, np.ndarray] = {}

    def extended_reference(self, mode: ExtensionMode) -> np.ndarray:
        if mode not in self._rs_ext:
            self._rs_ext[mode] = extend(self.reference.rs, mode, self.ext_params)
        return self._rs_ext[mode]

    @property
    def comparison(self) -> np.ndarray | None:
        """Observed samples resampled onto the reference index grid."""
        return self._cs_grid

    def set_comparison(self, values) -> None:
        """Bypass time-based regridding; for tests and benchmarks."""
        values = np.asarray(values, dtype=np.float64)
        delta = self.cfg.ref_duration_s / (len(self.reference) - 1)
        self.observed = ComparisonSequence(values=values, times=np.arange(len(values)) * delta)
        self._cs_grid = values.copy()
        self._tau = float(self.observed.times[-1]) if len(values) else None

    def observe(self, thigh_deg: float, t_s: float | None = None) -> None:
        if t_s is None:
            t_s = len(self.observed) / self.cfg.stream_rate_hz
        self.observed.append(float(t_s), float(thigh_deg))

    def _regrid(self) -> bool:
        """Resample the raw samples onto the reference index grid; False while
        the elapsed time covers fewer than 4 grid steps."""
        tau = float(self.observed.times[-1])
        m = len(self.reference)
        delta = self.cfg.ref_duration_s / (m - 1)
        n_cs = round_half_up(tau / delta) + 1
        if n_cs < 4:
            return False
        n_cs = min(n_cs, 2 * m)
        grid = np.linspace(0.0, tau, n_cs)
        cs = np.interp(grid, self.observed.times, self.observed.values)
        # Order-1 Savitzky-Golay: a moving average in the interior, linear
        # fits at the edges. Edge-repeat padding would bias the newest
        # samples on slopes, dragging the matched window end with it.
        if self.cfg.smooth_window > 1 and len(cs) >= self.cfg.smooth_window:
            cs = savgol_filter(cs, self.cfg.smooth_window, 1, mode="interp")
        self._cs_grid = cs
        self._tau = tau
        return True

    def update(self, thigh_deg: float, t_s: float | None = None) -> ProgressEstimate | None:
        """Consume one sample; None while fewer than 4 samples are buffered.

        Runs the full match, then clamps the reported progress to be
        non-decreasing (and rate-limited against sporadic jumps) before
        updating the extension bookkeeping.
        """
        self.observe(thigh_deg, t_s)
        if len(self.observed) < 4:
            return None
        if not self._regrid():
            return None
        self.extension_mode = select_extension(self)
        est = optimize_match(self)

        reported = est.progress_pct
        if self._have_estimate:
            if self.cfg.max_advance_factor > 0 and self._last_tau is not None:
                dt = self._tau - self._last_tau
                cap = self.last_progress + (
                    self.cfg.max_advance_factor * 100.0 * dt / self.cfg.ref_duration_s
                )
                reported = min(reported, max(cap, self.last_progress))
            reported = max(reported, self.last_progress)
        reported = float(np.clip(reported, 0.0, 100.0))

        self.iteration += 1
        if reported > 30.0:
            self.consecutive_over_30 += 1
        else:
            self.consecutive_over_30 = 0
        if self.consecutive_over_30 >= 5:
            self._long_locked = True
        self.last_progress = reported
        self._last_tau = self._tau
        self._have_estimate = True

        return replace(
            est,
            progress_pct=reported,
            knee_index=map_progress_to_knee_index(reported, self.knee_len),
        )
