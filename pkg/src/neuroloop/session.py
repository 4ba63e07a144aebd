"""Lesson state machine and policy calibration.

The session engine reacts to sustained high confusion by pausing and showing
advisories, switching to an alternate presentation when advisories run out,
and resuming once confusion stays low; thresholds use a hysteresis pair and
both directions are debounced by the policy's dwell. Everything is counted
in epochs so a stored confusion sequence replays to a bit-identical
transition log.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detect import COMMAND, NON_CONTROL, Debouncer, DetectorState
from .sigcore import SignalError

PLAYING = "PLAYING"
PAUSED_ADVISORY = "PAUSED_ADVISORY"
SWITCHED = "SWITCHED"
COMPLETED = "COMPLETED"

SELF_PACED = "SELF_PACED"
SYNCHRONOUS = "SYNCHRONOUS"


class LessonValidationError(SignalError):
    """Manifest problems, each tagged with its JSON path."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid lesson manifest: " + "; ".join(problems))


@dataclass(frozen=True)
class Segment:
    duration_s: float
    content_ref: str
    advisories: tuple[str, ...] = ()
    alternate_ref: str | None = None


@dataclass(frozen=True)
class Lesson:
    id: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise LessonValidationError(["segments: must not be empty"])


def load_lesson(manifest: dict) -> Lesson:
    """Validate a parsed manifest; collects every problem before raising."""
    problems = []
    if not isinstance(manifest, dict):
        raise LessonValidationError(["manifest: expected an object"])
    lesson_id = manifest.get("id")
    if not lesson_id or not isinstance(lesson_id, str):
        problems.append("id: required non-empty string")
    raw_segments = manifest.get("segments")
    segments = []
    if not isinstance(raw_segments, list) or not raw_segments:
        problems.append("segments: required non-empty array")
    else:
        for i, seg in enumerate(raw_segments):
            path = f"segments[{i}]"
            if not isinstance(seg, dict):
                problems.append(f"{path}: expected an object")
                continue
            dur = seg.get("duration_s")
            if not isinstance(dur, (int, float)) or not dur > 0:
                problems.append(f"{path}.duration_s: required positive number")
            ref = seg.get("content_ref")
            if not ref or not isinstance(ref, str):
                problems.append(f"{path}.content_ref: required non-empty string")
            advisories = seg.get("advisories", [])
            if not isinstance(advisories, list) or any(
                    not isinstance(a, str) or not a for a in advisories):
                problems.append(f"{path}.advisories: must be an array of non-empty refs")
                advisories = []
            alternate = seg.get("alternate_ref")
            if alternate is not None and (not isinstance(alternate, str) or not alternate):
                problems.append(f"{path}.alternate_ref: must be a non-empty ref")
                alternate = None
            if not problems:
                segments.append(Segment(float(dur), ref, tuple(advisories), alternate))
    if problems:
        raise LessonValidationError(problems)
    return Lesson(id=lesson_id, segments=tuple(segments))


def load_lesson_file(path) -> Lesson:
    with open(path, encoding="utf-8") as fh:
        return load_lesson(json.load(fh))


def lesson_to_manifest(lesson: Lesson) -> dict:
    return {
        "id": lesson.id,
        "segments": [
            {
                "duration_s": s.duration_s,
                "content_ref": s.content_ref,
                "advisories": list(s.advisories),
                **({"alternate_ref": s.alternate_ref} if s.alternate_ref else {}),
            }
            for s in lesson.segments
        ],
    }


@dataclass(frozen=True)
class Policy:
    """Calibrated detection parameters for one user/session."""

    theta_high: float = 0.8
    theta_low: float = 0.6
    dwell_epochs: int = 4
    refractory_epochs: int = 8
    max_advisories_per_segment: int = 3
    model_ref: str | None = None
    degenerate_calibration: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta_low < self.theta_high <= 1.0:
            raise SignalError(
                f"need 0 <= theta_low < theta_high <= 1, got "
                f"({self.theta_low}, {self.theta_high})"
            )
        if self.dwell_epochs < 1 or self.refractory_epochs < 0:
            raise SignalError("dwell must be >= 1 and refractory >= 0")

    def to_dict(self) -> dict:
        return {
            "theta_high": self.theta_high,
            "theta_low": self.theta_low,
            "dwell_epochs": self.dwell_epochs,
            "refractory_epochs": self.refractory_epochs,
            "max_advisories_per_segment": self.max_advisories_per_segment,
            "model_ref": self.model_ref,
            "degenerate_calibration": self.degenerate_calibration,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Policy":
        return cls(**{k: doc[k] for k in (
            "theta_high", "theta_low", "dwell_epochs", "refractory_epochs",
            "max_advisories_per_segment", "model_ref", "degenerate_calibration",
        ) if k in doc})


def calibrate_policy(baseline_confusion, defaults: Policy) -> Policy:
    """Set thresholds from the user's own baseline.

    theta_high is the nearest-rank 90th percentile of the baseline (the
    ceil(0.9 n)-th sorted value) and theta_low = 0.75 * theta_high. An empty
    or all-equal baseline keeps/flags the defaults as degenerate; so does a
    baseline whose percentile is 0 (no usable threshold).
    """
    values = np.asarray(list(baseline_confusion), dtype=np.float64)
    if values.size and (values.min() < 0 or values.max() > 1):
        raise SignalError("baseline confusion values must lie in [0, 1]")
    if values.size == 0:
        return replace(defaults, degenerate_calibration=True)
    rank = math.ceil(0.9 * values.size)  # 1-based nearest rank
    theta_high = float(np.sort(values)[rank - 1])
    degenerate = bool(values.min() == values.max())
    if theta_high <= 0.0:
        return replace(defaults, degenerate_calibration=True)
    return replace(
        defaults,
        theta_high=theta_high,
        theta_low=0.75 * theta_high,
        degenerate_calibration=degenerate,
    )


@dataclass(frozen=True)
class RunMode:
    """SELF_PACED evaluates continuously; SYNCHRONOUS only in cue windows."""

    kind: str = SELF_PACED
    cue_windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in (SELF_PACED, SYNCHRONOUS):
            raise SignalError(f"unknown run mode {self.kind!r}")
        for t0, t1 in self.cue_windows:
            if t1 <= t0:
                raise SignalError("cue windows need t_end > t_start")

    def active_at(self, t_s: float) -> bool:
        if self.kind == SELF_PACED:
            return True
        return any(t0 <= t_s < t1 for t0, t1 in self.cue_windows)


@dataclass(frozen=True)
class Action:
    kind: str
    advisory_index: int | None = None
    ref: str | None = None
    segment: int | None = None


@dataclass
class SessionState:
    """Mutable lecture state machine; one logical writer per session."""

    epoch_step_s: float = 0.5
    mode: str = PLAYING
    segment_index: int = 0
    advisories_used: int = 0
    playback_epochs: int = 0
    epochs_in_mode: int = 0
    epoch_index: int = 0
    events: list = field(default_factory=list)
    trigger_deb: Debouncer = field(default_factory=lambda: Debouncer(dwell=1))
    resume_deb: Debouncer = field(default_factory=lambda: Debouncer(dwell=1))

    @property
    def t_s(self) -> float:
        return self.epoch_index * self.epoch_step_s


def _segment_epochs(segment: Segment, step_s: float) -> int:
    return max(1, math.ceil(segment.duration_s / step_s - 1e-9))


def _log(state: SessionState, from_mode: str, action: Action, confusion: float):
    event = {
        "epoch_index": state.epoch_index,
        "from_mode": from_mode,
        "to_mode": state.mode,
        "action": action.kind,
        "confusion": confusion,
        "segment": state.segment_index if action.segment is None else action.segment,
    }
    if action.advisory_index is not None:
        event["advisory"] = action.advisory_index
    if action.ref is not None:
        event["ref"] = action.ref
    state.events.append(event)


def _enter(state: SessionState, mode: str):
    state.mode = mode
    state.epochs_in_mode = 0
    state.trigger_deb.reset()
    state.resume_deb.reset()


def session_step(state: SessionState, lesson: Lesson, policy: Policy,
                 detector: DetectorState, run_mode: RunMode) -> tuple[SessionState, Action | None]:
    """Advance the session by one epoch of detector output.

    Decision table: sustained high confusion pauses and shows the next
    advisory (rewinding playback to the segment start); sustained low
    confusion resumes; a repeated trigger with advisories exhausted switches
    to the alternate presentation if there is one, otherwise flags the
    segment for the instructor and carries on; elapsed segments advance. In
    SYNCHRONOUS mode detector input outside cue windows is ignored, as is
    input from artifact-flagged (unreliable) epochs.
    """
    if state.mode == COMPLETED:
        raise SignalError("session is already COMPLETED")

    state.trigger_deb.dwell = policy.dwell_epochs
    state.trigger_deb.refractory = policy.refractory_epochs
    state.resume_deb.dwell = policy.dwell_epochs

    evaluate = detector.reliable and run_mode.active_at(state.t_s)
    seg = lesson.segments[state.segment_index]
    k_advisories = min(len(seg.advisories), policy.max_advisories_per_segment)
    action: Action | None = None

    if state.mode in (PLAYING, SWITCHED):
        triggered = False
        if evaluate:
            label = COMMAND if detector.confusion > policy.theta_high else NON_CONTROL
            triggered = state.trigger_deb.push(label)
        if triggered:
            from_mode = state.mode
            if state.mode == PLAYING and state.advisories_used < k_advisories:
                ref = seg.advisories[state.advisories_used]
                state.advisories_used += 1
                state.playback_epochs = 0  # rewind to segment start
                _enter(state, PAUSED_ADVISORY)
                action = Action("ShowAdvisory", advisory_index=state.advisories_used,
                                ref=ref)
            elif state.mode == PLAYING and seg.alternate_ref is not None:
                state.playback_epochs = 0
                _enter(state, SWITCHED)
                action = Action("SwitchPresentation", ref=seg.alternate_ref)
            else:
                action = Action("FlagForInstructor")
                state.trigger_deb.reset()
                state.trigger_deb.cooldown = policy.refractory_epochs
            _log(state, from_mode, action, detector.confusion)
        else:
            state.playback_epochs += 1
            if state.playback_epochs >= _segment_epochs(seg, state.epoch_step_s):
                from_mode = state.mode
                if state.segment_index + 1 < len(lesson.segments):
                    state.segment_index += 1
                    state.advisories_used = 0
                    state.playback_epochs = 0
                    _enter(state, PLAYING)
                else:
                    _enter(state, COMPLETED)
                action = Action("NextSegment", segment=state.segment_index)
                _log(state, from_mode, action, detector.confusion)

    elif state.mode == PAUSED_ADVISORY:
        resumed = False
        retriggered = False
        if evaluate:
            low = COMMAND if detector.confusion < policy.theta_low else NON_CONTROL
            resumed = state.resume_deb.push(low)
            if not resumed:
                high = COMMAND if detector.confusion > policy.theta_high else NON_CONTROL
                retriggered = state.trigger_deb.push(high)
        if resumed:
            _enter(state, PLAYING)
            action = Action("Resume")
            _log(state, PAUSED_ADVISORY, action, detector.confusion)
        elif retriggered:
            if state.advisories_used < k_advisories:
                ref = seg.advisories[state.advisories_used]
                state.advisories_used += 1
                state.resume_deb.reset()
                action = Action("ShowAdvisory", advisory_index=state.advisories_used,
                                ref=ref)
                _log(state, PAUSED_ADVISORY, action, detector.confusion)
            elif seg.alternate_ref is not None:
                _enter(state, SWITCHED)
                action = Action("SwitchPresentation", ref=seg.alternate_ref)
                _log(state, PAUSED_ADVISORY, action, detector.confusion)
            else:
                _enter(state, PLAYING)
                action = Action("FlagForInstructor")
                _log(state, PAUSED_ADVISORY, action, detector.confusion)

    state.epochs_in_mode += 1
    state.epoch_index += 1
    return state, action


def force_pause(state: SessionState, confusion: float) -> Action | None:
    """Operator override: freeze playback without consuming an advisory."""
    if state.mode not in (PLAYING, SWITCHED):
        return None
    from_mode = state.mode
    _enter(state, PAUSED_ADVISORY)
    action = Action("OperatorPause")
    _log(state, from_mode, action, confusion)
    return action


def force_resume(state: SessionState, confusion: float) -> Action | None:
    """Operator override: resume playback immediately."""
    if state.mode != PAUSED_ADVISORY:
        return None
    _enter(state, PLAYING)
    action = Action("OperatorResume")
    _log(state, PAUSED_ADVISORY, action, confusion)
    return action


def events_to_jsonl(events) -> str:
    return "".join(json.dumps(e) + "\n" for e in events)
