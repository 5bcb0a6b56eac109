"""Sample-by-sample replay of a trial through both models.

The pipeline per sample: one orientation filter step, feature-frame
assembly, one stateful detector step, and (while the detector reports
falling) one impact-time evaluation.  Real-time mode paces samples at the
200 Hz period; fast mode runs unpaced.  Event values are identical in
both modes.

The orientation filter initializes from the accelerometer mean over the
first half second, exactly like the batch estimator, so a streamed trial
reproduces the batch detector outputs bit for bit.  Events for those
warm-up samples are emitted once the window is full; after the warm-up,
event k depends only on samples up to k.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fdnn as fdnn_mod
from . import kan as kan_mod
from .features import FDNN_FEATURES, FEATURE_NAMES, feature_indices
from .orientation import (
    FilterConfig,
    init_state,
    predict_step,
    tilt_angles,
    update_step,
)
from .sisfall import SAMPLE_PERIOD_S, CalibratedTrial, SubjectProfile


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class StreamEvent:
    index: int
    p_falling: float
    decision: bool
    tti_ms: float | None     # gated mode: present iff the decision is falling
    latency_us: float


@dataclass(frozen=True)
class LatencyReport:
    mean_us: float
    p99_us: float
    max_us: float
    deadline_misses: int
    deadline_us: float
    count: int


class FdnnStream:
    """Stateful per-step detector inference (frozen batch-norm moments)."""

    def __init__(self, params: fdnn_mod.FdnnParams,
                 config: fdnn_mod.FdnnConfig):
        self.params = params
        self.config = config
        self.reset()

    def reset(self) -> None:
        h = self.config.inner_dim
        self._h1 = np.zeros((1, h))
        self._c1 = np.zeros((1, h))
        self._h2 = np.zeros((1, h))
        self._c2 = np.zeros((1, h))

    def step(self, x: np.ndarray) -> float:
        """P(falling) for one standardized 18-entry input row."""
        p, cfg = self.params, self.config
        a1 = x[None, :] @ p.fc1_w + p.fc1_b
        y = fdnn_mod.bn_infer(a1, p, cfg.bn_eps)
        self._h1, self._c1, _ = fdnn_mod.lstm_step(
            y, self._h1, self._c1, p.lstm1_wx, p.lstm1_wh, p.lstm1_b,
            cfg.inner_dim)
        self._h2, self._c2, _ = fdnn_mod.lstm_step(
            self._h1, self._h2, self._c2, p.lstm2_wx, p.lstm2_wh, p.lstm2_b,
            cfg.inner_dim)
        logits = self._h2 @ p.fc2_w + p.fc2_b
        return float(fdnn_mod.softmax_rows(logits)[0, 1])


class _CausalTiltDerivative:
    """One-sided backward differences, usable sample by sample."""

    def __init__(self, dt: float, order: int):
        if order not in (1, 2):
            raise StreamError(f"derivative order must be 1 or 2, got {order}")
        self.dt = dt
        self.order = order
        self._hist: list[float] = []

    def push(self, theta: float) -> float:
        self._hist.append(theta)
        h, dt = self._hist, self.dt
        if self.order == 1:
            if len(h) < 2:
                return 0.0
            return (h[-1] - h[-2]) / dt
        if len(h) < 3:
            return 0.0
        return (h[-1] - 2.0 * h[-2] + h[-3]) / (dt * dt)


def stream_trial(
    fdnn_checkpoint: Path | str,
    kan_checkpoint: Path | str,
    trial: CalibratedTrial,
    subject: SubjectProfile,
    mode: str = "fast",
    filter_config: FilterConfig | None = None,
    body_up: np.ndarray | None = None,
    deriv_order: int = 2,
    deadline_us: float = 5000.0,
    kan_gating: bool = True,
) -> tuple[list[StreamEvent], LatencyReport]:
    """Replay one calibrated trial through both models.

    Returns one event per sample plus the per-sample latency summary.
    Latency is pure processing time; real-time pacing waits are not
    counted.  By default the impact estimator runs only while the
    detector reports falling; ``kan_gating=False`` evaluates it on every
    sample instead.
    """
    if mode not in ("realtime", "fast"):
        raise StreamError(f"unknown mode {mode!r}")
    params, fcfg, fstats, fnames = fdnn_mod.load_checkpoint(fdnn_checkpoint)
    kan_model = kan_mod.load_checkpoint(kan_checkpoint)

    if tuple(fnames) != FDNN_FEATURES:
        raise StreamError(
            "detector checkpoint feature list does not match the 18-entry "
            "frame view")
    unknown = [n for n in kan_model.feature_names if n not in FEATURE_NAMES]
    if unknown:
        raise StreamError(f"impact-model features not in the frame: {unknown}")

    kan_idx = feature_indices(kan_model.feature_names)
    filter_config = filter_config or FilterConfig()
    n = len(trial)
    if n == 0:
        raise StreamError("empty trial")

    detector = FdnnStream(params, fcfg)
    deriv = _CausalTiltDerivative(SAMPLE_PERIOD_S, deriv_order)
    static = subject.static_vector()
    window = max(1, min(n, int(round(
        filter_config.init_window_s / SAMPLE_PERIOD_S))))
    kan_window = kan_model.config.window_samples
    kan_buffer: list[np.ndarray] = []

    accel = trial.accel_adxl345
    gyro = trial.gyro_itg3200
    state = None
    events: list[StreamEvent] = []
    latencies = np.empty(n)
    frame = np.empty(len(FEATURE_NAMES))
    frame[0:4] = static

    def process(k: int) -> StreamEvent:
        nonlocal state
        t0 = time.perf_counter_ns()
        if k == 0:
            state = update_step(state, accel[0])
        else:
            state = predict_step(state, gyro[k], SAMPLE_PERIOD_S)
            state = update_step(state, accel[k])
        theta = float(tilt_angles(state.q[None, :], body_up)[0])
        frame[4:7] = accel[k]
        frame[7:10] = trial.accel_mma8451q[k]
        frame[10:13] = gyro[k]
        frame[13:17] = state.q
        frame[17] = theta
        frame[18] = deriv.push(theta)

        x = (frame[:18] - fstats.mean) / fstats.std
        p_fall = detector.step(x)
        decision = bool(p_fall > fcfg.threshold)

        kan_buffer.append(frame[kan_idx].copy())
        if len(kan_buffer) > kan_window:
            kan_buffer.pop(0)
        tti = None
        if decision or not kan_gating:
            smoothed = np.mean(kan_buffer, axis=0)
            tti = kan_mod.predict_smoothed_row(kan_model, smoothed)
        latency_us = (time.perf_counter_ns() - t0) / 1000.0
        latencies[k] = latency_us
        return StreamEvent(index=k, p_falling=p_fall, decision=decision,
                           tti_ms=tti, latency_us=latency_us)

    start = time.perf_counter()
    for k in range(n):
        if mode == "realtime":
            target = start + (k + 1) * SAMPLE_PERIOD_S
            while time.perf_counter() < target:
                time.sleep(0)
        if k == window - 1:
            # Warm-up window full: initialize the filter exactly like the
            # batch estimator and emit the deferred events.
            state = init_state(accel[:window].mean(axis=0), filter_config)
            for j in range(window):
                events.append(process(j))
        elif k >= window:
            events.append(process(k))

    report = LatencyReport(
        mean_us=float(latencies.mean()),
        p99_us=float(np.percentile(latencies, 99)),
        max_us=float(latencies.max()),
        deadline_misses=int((latencies > deadline_us).sum()),
        deadline_us=deadline_us,
        count=n,
    )
    return events, report


def write_events_csv(path: Path | str, events: list[StreamEvent]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "p_falling", "decision", "tti_ms",
                         "latency_us"])
        for e in events:
            writer.writerow([
                e.index, f"{e.p_falling:.9f}", int(e.decision),
                "" if e.tti_ms is None else f"{e.tti_ms:.3f}",
                f"{e.latency_us:.1f}",
            ])
