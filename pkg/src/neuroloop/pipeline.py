"""End-to-end wiring: blocks -> filters -> epochs -> features -> detector ->
session engine, plus calibration, simulation, and record replay.

The same StreamPipeline drives the in-process simulator (CLI) and the
network service; the session engine consumes one DetectorState per epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .detect import (DetectorState, LdaModel, confusion_index, lda_train,
                     threshold_state)
from .features import Normalizer, assemble_features, band_power
from .preprocess import PreprocessChain, artifact_mask
from .session import (COMPLETED, Policy, RunMode, SessionState,
                      calibrate_policy, force_pause, force_resume,
                      session_step)
from .sigcore import Epochizer, SampleBlock, SignalError, band_table
from .synthgen import SyntheticEEG, Timeline, state_at


@dataclass(frozen=True)
class EpochResult:
    """Everything the session layer and telemetry need for one epoch."""

    epoch_index: int
    start_sample_index: int
    t_end_s: float  # completion time of the window
    detector: DetectorState
    band_powers: dict[str, float]  # channel-mean power per telemetry band
    artifact: bool


class StreamPipeline:
    """Streaming preprocessing + detection for one signal stream.

    Single-owner; the service serializes access per session. ``policy`` may
    be swapped live (operator tuning); the model is fixed at construction.
    """

    def __init__(self, run_config: RunConfig, model: LdaModel, policy: Policy):
        self.config = run_config
        self.model = model
        self.policy = policy
        fs = run_config.fs
        montage = run_config.generator.montage
        self.chain = PreprocessChain(run_config.chain, fs, montage)
        self.epochizer = Epochizer(window=run_config.window_samples,
                                   step=run_config.step_samples)
        self.spec = run_config.feature_spec()
        if model.layout != self.spec.layout(self.chain.out_channels):
            raise SignalError("model layout does not match the configured features")
        bands = band_table()
        self.telemetry_bands = {name: bands[name] for name in run_config.feature_bands}
        self.epoch_count = 0

    def process_block(self, block: SampleBlock) -> list[EpochResult]:
        filtered = self.chain.process_block(block)
        results = []
        for epoch in self.epochizer.push(filtered):
            epoch = artifact_mask(epoch, self.config.chain.artifact_threshold_uv)
            fv = assemble_features(epoch, self.spec)
            detector = self._score(fv.values, epoch.artifact_flag)
            powers = {
                name: float(np.mean(band_power(epoch, b)))
                for name, b in self.telemetry_bands.items()
            }
            t_end = (epoch.start_sample_index + epoch.window_len) / self.config.fs
            results.append(EpochResult(
                epoch_index=self.epoch_count,
                start_sample_index=epoch.start_sample_index,
                t_end_s=t_end,
                detector=detector,
                band_powers=powers,
                artifact=epoch.artifact_flag,
            ))
            self.epoch_count += 1
        return results

    def _score(self, values: np.ndarray, artifact: bool) -> DetectorState:
        if artifact and not np.all(np.isfinite(values)):
            return DetectorState(label="NON_CONTROL", score=0.0,
                                 confusion=0.0, reliable=False)
        z = values
        if self.model.normalizer_mean is not None:
            z = (values - self.model.normalizer_mean) / np.maximum(
                self.model.normalizer_std, 1e-12)
        score = float(self.model.weights @ z + self.model.bias)
        confusion = confusion_index(score)
        label = threshold_state(confusion, self.policy.theta_high)
        return DetectorState(label=label, score=score, confusion=confusion,
                             reliable=not artifact)

    def resync(self):
        """After a signalled stream gap: drop partial windows, keep filters."""
        self.epochizer.reset()


@dataclass
class CalibrationResult:
    model: LdaModel
    policy: Policy
    n_epochs: int
    n_clear: int
    n_confused: int
    n_artifact: int
    baseline_p90: float
    training_accuracy: float


def default_calibration_timeline() -> Timeline:
    """Alternating labeled stretches used when no timeline file is given."""
    from .synthgen import CLEAR, CONFUSED
    return Timeline(((0.0, CLEAR), (40.0, CONFUSED), (80.0, CLEAR),
                     (120.0, CONFUSED), (160.0, CLEAR)))


def run_calibration(run_config: RunConfig, timeline: Timeline | None = None,
                    duration_s: float = 200.0,
                    defaults: Policy | None = None) -> CalibrationResult:
    """Collect labeled epochs from the generator, train the discriminant,
    and derive thresholds from the CLEAR-state confusion baseline.

    Epochs straddling a state change and artifact-flagged epochs are left
    out of training and baseline statistics.
    """
    timeline = timeline or default_calibration_timeline()
    defaults = defaults or run_config.policy_defaults
    fs = run_config.fs
    gen = SyntheticEEG(run_config.generator, timeline)
    chain = PreprocessChain(run_config.chain, fs, run_config.generator.montage)
    epochizer = Epochizer(window=run_config.window_samples,
                          step=run_config.step_samples)
    spec = run_config.feature_spec()

    raw, labels = [], []
    n_artifact = 0
    n_blocks = int(duration_s * fs / run_config.step_samples)
    for _ in range(n_blocks):
        block = gen.next_block(run_config.step_samples)
        filtered = chain.process_block(block)
        for epoch in epochizer.push(filtered):
            epoch = artifact_mask(epoch, run_config.chain.artifact_threshold_uv)
            if epoch.artifact_flag:
                n_artifact += 1
                continue
            t0 = epoch.start_sample_index / fs
            t1 = (epoch.start_sample_index + epoch.window_len - 1) / fs
            s0, s1 = state_at(timeline, t0), state_at(timeline, t1)
            if s0.label != s1.label or s0.label not in ("CLEAR", "CONFUSED"):
                continue
            fv = assemble_features(epoch, spec)
            raw.append(fv.values)
            labels.append(1 if s0.label == "CONFUSED" else 0)

    x = np.stack(raw)
    y = np.asarray(labels)
    norm = Normalizer(min_count=1)
    for row in x:
        norm.update(row)
    mean, std = norm.mean, np.maximum(norm.std, 1e-12)
    z = (x - mean) / std

    model = lda_train(z, y, classes=("CLEAR", "CONFUSED"))
    model = LdaModel(weights=model.weights, bias=model.bias, classes=model.classes,
                     ridge=model.ridge, layout=spec.layout(chain.out_channels),
                     normalizer_mean=mean, normalizer_std=std,
                     meta={**model.meta, "duration_s": duration_s})

    scores = z @ model.weights + model.bias
    predicted = (scores > 0).astype(int)
    accuracy = float((predicted == y).mean())
    baseline = [confusion_index(float(s)) for s, lbl in zip(scores, y) if lbl == 0]
    policy = calibrate_policy(baseline, defaults)
    return CalibrationResult(
        model=model,
        policy=policy,
        n_epochs=len(y),
        n_clear=int((y == 0).sum()),
        n_confused=int((y == 1).sum()),
        n_artifact=n_artifact,
        baseline_p90=policy.theta_high,
        training_accuracy=accuracy,
    )


@dataclass
class SimulationReport:
    detection_latencies_s: list[float]
    missed_onsets: int
    false_pauses: int
    pauses: int
    advisories_shown: int
    segments_completed: int
    epochs: int
    real_time_factor: float

    def to_dict(self, include_timing=True) -> dict:
        doc = {
            "detection_latencies_s": self.detection_latencies_s,
            "missed_onsets": self.missed_onsets,
            "false_pauses": self.false_pauses,
            "pauses": self.pauses,
            "advisories_shown": self.advisories_shown,
            "segments_completed": self.segments_completed,
            "epochs": self.epochs,
        }
        if include_timing:
            doc["real_time_factor"] = self.real_time_factor
        return doc


@dataclass
class SimulationOutput:
    report: SimulationReport
    rows: list[dict]
    events: list[dict]


def make_epoch_row(result: EpochResult, state: SessionState) -> dict:
    d = result.detector
    return {
        "kind": "epoch",
        "epoch_index": result.epoch_index,
        "confusion": d.confusion,
        "score": d.score,
        "label": d.label,
        "reliable": d.reliable,
        "mode": state.mode,
        "segment": state.segment_index,
    }


_PAUSE_ACTIONS = ("ShowAdvisory", "SwitchPresentation", "FlagForInstructor")


def run_simulation(run_config: RunConfig, timeline: Timeline, lesson,
                   model: LdaModel, policy: Policy,
                   run_mode: RunMode | None = None,
                   max_wall_epochs: int | None = None) -> SimulationOutput:
    """Closed loop entirely in process; deterministic given the config seed."""
    run_mode = run_mode or RunMode()
    pipeline = StreamPipeline(run_config, model, policy)
    gen = SyntheticEEG(run_config.generator, timeline)
    state = SessionState(epoch_step_s=run_config.step_s)
    rows: list[dict] = []

    total_s = sum(s.duration_s for s in lesson.segments)
    if max_wall_epochs is None:
        max_wall_epochs = int((3 * total_s + 120) / run_config.step_s)

    started = time.perf_counter()
    sim_seconds = 0.0
    while state.mode != COMPLETED and state.epoch_index < max_wall_epochs:
        block = gen.next_block(run_config.step_samples)
        sim_seconds += run_config.step_samples / run_config.fs
        for result in pipeline.process_block(block):
            if state.mode == COMPLETED:
                break
            session_step(state, lesson, policy, result.detector, run_mode)
            rows.append(make_epoch_row(result, state))
    elapsed = time.perf_counter() - started
    rtf = sim_seconds / elapsed if elapsed > 0 else float("inf")

    report = summarize_run(rows, state.events, timeline, run_config,
                           policy.dwell_epochs)
    report.real_time_factor = rtf
    return SimulationOutput(report=report, rows=rows, events=state.events)


def _confused_within(timeline: Timeline, t0: float, t1: float) -> bool:
    """True when any part of [t0, t1) is governed by a CONFUSED entry."""
    starts = [t for t, _ in timeline.entries]
    for i, (ts, s) in enumerate(timeline.entries):
        te = starts[i + 1] if i + 1 < len(starts) else math.inf
        if s.label == "CONFUSED" and ts < t1 and te > t0:
            return True
    return False


def summarize_run(rows, events, timeline: Timeline, run_config: RunConfig,
                  dwell_epochs: int) -> SimulationReport:
    window_s = run_config.window_s
    step_s = run_config.step_s

    def epoch_start_t(epoch_index: int) -> float:
        return epoch_index * step_s

    def epoch_end_t(epoch_index: int) -> float:
        return epoch_index * step_s + window_s

    pause_events = [e for e in events if e["action"] in _PAUSE_ACTIONS]
    onsets = []
    prev = None
    for t, s in timeline.entries:
        if s.label == "CONFUSED" and (prev is None or prev != "CONFUSED"):
            onsets.append(t)
        prev = s.label
    next_change = {t: min((t2 for t2, _ in timeline.entries if t2 > t),
                          default=math.inf) for t in onsets}

    latencies, missed = [], 0
    for onset in onsets:
        hits = [e for e in pause_events
                if onset <= epoch_end_t(e["epoch_index"]) < next_change[onset] + window_s]
        if hits:
            latencies.append(epoch_end_t(hits[0]["epoch_index"]) - onset)
        else:
            missed += 1

    # a pause is false when nothing in the dwell run that caused it was
    # generated under a CONFUSED state
    false_pauses = 0
    for e in pause_events:
        causal_lo = max(epoch_start_t(e["epoch_index"] - dwell_epochs + 1), 0.0)
        if not _confused_within(timeline, causal_lo, epoch_end_t(e["epoch_index"])):
            false_pauses += 1

    advisories = sum(1 for e in events if e["action"] == "ShowAdvisory")
    segments_done = sum(1 for e in events if e["action"] == "NextSegment")
    return SimulationReport(
        detection_latencies_s=latencies,
        missed_onsets=missed,
        false_pauses=false_pauses,
        pauses=len(pause_events),
        advisories_shown=advisories,
        segments_completed=segments_done,
        epochs=len(rows),
        real_time_factor=0.0,
    )


def replay_session(rows, lesson, policy: Policy, run_mode: RunMode,
                   step_s: float) -> list[dict]:
    """Re-run the session engine over persisted rows; returns the
    reconstructed transition log (must equal the stored one byte for byte).
    """
    state = SessionState(epoch_step_s=step_s)
    current_policy = policy
    for row in rows:
        if row.get("kind") == "command":
            cmd = row["command"]
            if cmd == "pause":
                force_pause(state, row.get("confusion", 0.0))
            elif cmd == "resume":
                force_resume(state, row.get("confusion", 0.0))
            elif cmd == "set_policy":
                current_policy = Policy.from_dict(row["policy"])
            continue
        if state.mode == COMPLETED:
            break
        detector = DetectorState(
            label=row["label"], score=row.get("score", 0.0),
            confusion=row["confusion"], reliable=row.get("reliable", True))
        session_step(state, lesson, current_policy, detector, run_mode)
    return state.events
