"""Deterministic, seedable synthetic EEG source.

Stands in for acquisition hardware: per-channel band oscillators whose
amplitudes follow a scripted mental-state timeline (band-power decreases and
increases, i.e. ERD/ERS), plus 1/f background noise, a line-frequency
sinusoid, and occasional EOG/EMG artifact events.

All randomness is counter-based (splitmix64 of absolute sample indices), so
``generate_block`` is a pure function of (config, timeline, from_sample, n):
equal arguments give bit-identical output and consecutive calls continue
phases and noise seamlessly.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .sigcore import Montage, SampleBlock, SignalError, default_montage

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# stream salts, one per independent noise source
_SALT_PHASE = 0x01
_SALT_PINK = 0x02
_SALT_LINE = 0x03
_SALT_ART = 0x04
_SALT_EMG = 0x05


def _sm64(x: int) -> int:
    """Scalar splitmix64 scramble, used to derive stream keys."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _stream_key(seed: int, *salts: int) -> int:
    k = seed & _MASK64
    for s in salts:
        k = _sm64(k ^ (s & _MASK64))
    return k


def _scramble_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniform(key: int, idx: np.ndarray) -> np.ndarray:
    """U[0, 1) as a pure function of (key, counter)."""
    state = np.uint64(key) + idx.astype(np.uint64) * np.uint64(_GOLDEN)
    return (_scramble_vec(state) >> np.uint64(11)) * 2.0 ** -53


def _gauss(key: int, idx: np.ndarray) -> np.ndarray:
    """Standard normal via Box-Muller on two counter-based uniforms."""
    u1 = _uniform(_sm64(key ^ 0xA), idx)
    u2 = _uniform(_sm64(key ^ 0xB), idx)
    u1 = np.maximum(u1, 2.0 ** -53)  # keep log() finite
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _uniform_scalar(key: int, idx: int) -> float:
    state = (key + idx * _GOLDEN) & _MASK64
    x = ((state ^ (state >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return ((x ^ (x >> 31)) >> 11) * 2.0 ** -53


@dataclass(frozen=True)
class MentalState:
    """A labeled state realized as per-band amplitude multipliers."""

    label: str
    rhythm_gains: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        gains = self.rhythm_gains
        if isinstance(gains, dict):
            gains = tuple(sorted(gains.items()))
        else:
            gains = tuple(sorted((str(k), float(v)) for k, v in gains))
        for name, g in gains:
            if g < 0:
                raise SignalError(f"rhythm gain for {name} must be >= 0")
        object.__setattr__(self, "rhythm_gains", gains)

    def gain(self, band: str) -> float:
        for name, g in self.rhythm_gains:
            if name == band:
                return g
        return 1.0

    def gains_dict(self) -> dict[str, float]:
        return dict(self.rhythm_gains)


CLEAR = MentalState("CLEAR")
#: Simulation convention for incomprehension: frontal-theta increase plus
#: alpha desynchronization. This is the ground truth the detector is
#: calibrated against, not a neuroscience claim.
CONFUSED = MentalState("CONFUSED", (("theta", 1.8), ("alpha", 0.6)))
REST = MentalState("REST", (("alpha", 1.3), ("beta", 0.8)))

_KNOWN_STATES = {s.label: s for s in (CLEAR, CONFUSED, REST)}


@dataclass(frozen=True)
class Timeline:
    """Ordered (t_start_s, state) entries; intervals are left-closed."""

    entries: tuple[tuple[float, MentalState], ...]

    def __post_init__(self):
        entries = tuple((float(t), s) for t, s in self.entries)
        if not entries:
            raise SignalError("timeline needs at least one entry")
        if entries[0][0] != 0.0:
            raise SignalError("first timeline entry must start at t = 0")
        for (t0, _), (t1, _) in zip(entries, entries[1:]):
            if t1 <= t0:
                raise SignalError("timeline t_start values must be strictly increasing")
        object.__setattr__(self, "entries", entries)

    @property
    def start_times(self) -> list[float]:
        return [t for t, _ in self.entries]


def state_at(timeline: Timeline, t: float) -> MentalState:
    """State governing time t: the entry with the largest t_start <= t."""
    if t < 0:
        raise SignalError(f"t must be >= 0, got {t}")
    i = bisect.bisect_right(timeline.start_times, t) - 1
    return timeline.entries[i][1]


def timeline_to_json(timeline: Timeline) -> str:
    rows = [
        {"t_start_s": t, "label": s.label, "rhythm_gains": s.gains_dict()}
        for t, s in timeline.entries
    ]
    return json.dumps(rows, indent=2)


def timeline_from_json(text: str) -> Timeline:
    rows = json.loads(text)
    entries = []
    for row in rows:
        label = row["label"]
        if "rhythm_gains" in row:
            state = MentalState(label, tuple(row["rhythm_gains"].items()))
        elif label in _KNOWN_STATES:
            state = _KNOWN_STATES[label]
        else:
            raise SignalError(f"timeline entry {label!r} needs explicit rhythm_gains")
        entries.append((row["t_start_s"], state))
    return Timeline(tuple(entries))


@dataclass(frozen=True)
class Oscillator:
    """One rhythm component: a fixed frequency with per-channel amplitudes."""

    freq_hz: float
    amps_uv: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "amps_uv", tuple(float(a) for a in self.amps_uv))
        if any(a < 0 for a in self.amps_uv):
            raise SignalError("oscillator amplitudes must be >= 0")


@dataclass(frozen=True)
class GeneratorConfig:
    montage: Montage = field(default_factory=default_montage)
    fs: float = 250.0
    oscillators: tuple[tuple[str, Oscillator], ...] = ()
    pink_amp_uv: float = 4.0
    pink_octaves: int = 8
    line_freq_hz: float = 50.0
    line_amp_uv: float = 2.0
    artifact_rate_per_min: float = 2.0
    # strong-blink scale: still visible after band-pass + re-referencing
    artifact_amp_uv: float = 350.0
    seed: int = 7

    def __post_init__(self):
        if not self.fs > 0:
            raise SignalError("fs must be positive")
        if self.line_freq_hz >= self.fs / 2:
            raise SignalError("line frequency must be below Nyquist")
        if min(self.pink_amp_uv, self.line_amp_uv, self.artifact_amp_uv,
               self.artifact_rate_per_min, 0.0) < 0:
            raise SignalError("amplitudes and rates must be >= 0")
        oscs = tuple(self.oscillators)
        for name, osc in oscs:
            if len(osc.amps_uv) != self.montage.n_channels:
                raise SignalError(
                    f"oscillator {name}: {len(osc.amps_uv)} amplitudes for "
                    f"{self.montage.n_channels} channels"
                )
            if osc.freq_hz >= self.fs / 2:
                raise SignalError(f"oscillator {name}: frequency above Nyquist")
        object.__setattr__(self, "oscillators", oscs)

    @property
    def n_channels(self) -> int:
        return self.montage.n_channels

    def amplitude_bound_uv(self) -> float:
        """Sum of deterministic component amplitudes (excludes artifacts)."""
        per_ch = np.zeros(self.n_channels)
        for _, osc in self.oscillators:
            per_ch += np.asarray(osc.amps_uv)
        return float(per_ch.max(initial=0.0)) + self.line_amp_uv


def default_generator_config(seed: int = 7) -> GeneratorConfig:
    """Desk-scale default: posterior alpha, frontal theta, weak beta/delta."""
    montage = default_montage()
    #                 Fp1  Fp2  C3   Cz   C4   P3   Pz   P4
    alpha = Oscillator(10.0, (2.0, 2.0, 4.0, 4.0, 4.0, 8.0, 9.0, 8.0))
    theta = Oscillator(6.0, (6.0, 6.0, 4.0, 4.0, 4.0, 3.0, 3.0, 3.0))
    beta = Oscillator(20.0, (1.5,) * 8)
    delta = Oscillator(2.0, (2.0,) * 8)
    return GeneratorConfig(
        montage=montage,
        oscillators=(("delta", delta), ("theta", theta),
                     ("alpha", alpha), ("beta", beta)),
        seed=seed,
    )


_EOG_DUR_S = 0.5
_EMG_DUR_S = 0.05


def _artifact_events(config: GeneratorConfig, slot_lo: int, slot_hi: int):
    """Deterministic artifact events for 1 s slots in [slot_lo, slot_hi)."""
    p = config.artifact_rate_per_min / 60.0
    key_hit = _stream_key(config.seed, _SALT_ART, 1)
    key_kind = _stream_key(config.seed, _SALT_ART, 2)
    key_t0 = _stream_key(config.seed, _SALT_ART, 3)
    key_sign = _stream_key(config.seed, _SALT_ART, 4)
    key_chan = _stream_key(config.seed, _SALT_ART, 5)
    events = []
    for slot in range(max(slot_lo, 0), slot_hi):
        if _uniform_scalar(key_hit, slot) >= p:
            continue
        kind = "eog" if _uniform_scalar(key_kind, slot) < 0.5 else "emg"
        dur = _EOG_DUR_S if kind == "eog" else _EMG_DUR_S
        t0 = slot + _uniform_scalar(key_t0, slot) * (1.0 - dur)
        sign = 1.0 if _uniform_scalar(key_sign, slot) < 0.5 else -1.0
        chan_u = _uniform_scalar(key_chan, slot)
        events.append((kind, t0, dur, sign, chan_u, slot))
    return events


def generate_block(config: GeneratorConfig, timeline: Timeline,
                   from_sample: int, n: int) -> SampleBlock:
    """Synthesize samples [from_sample, from_sample + n) of the stream.

    Each channel is the sum of gain-modulated band oscillators, summed-octave
    pink noise, a line-frequency sinusoid, and any artifact events scheduled
    in the covered interval. Bit-identical for identical arguments.
    """
    if n < 0:
        raise SignalError("n must be >= 0")
    n_ch = config.n_channels
    fs = config.fs
    idx = from_sample + np.arange(n, dtype=np.int64)
    t = idx / fs
    out = np.zeros((n_ch, n))

    if n:
        # per-sample state gain lookup
        starts = [ts for ts, _ in timeline.entries]
        entry_of = np.searchsorted(starts, t, side="right") - 1
        entry_of = np.maximum(entry_of, 0)

        for b, (band, osc) in enumerate(config.oscillators):
            gains = np.array([s.gain(band) for _, s in timeline.entries])
            g = gains[entry_of]
            amps = np.asarray(osc.amps_uv)
            if not amps.any():
                continue
            phase_key = _stream_key(config.seed, _SALT_PHASE, b)
            phases = 2.0 * np.pi * _uniform(phase_key, np.arange(n_ch, dtype=np.int64))
            wave = np.sin(2.0 * np.pi * osc.freq_hz * t[None, :] + phases[:, None])
            out += (amps[:, None] * g[None, :]) * wave

        if config.pink_amp_uv > 0:
            k_oct = config.pink_octaves
            scale = config.pink_amp_uv / np.sqrt(k_oct)
            for ch in range(n_ch):
                acc = np.zeros(n)
                for k in range(k_oct):
                    row_key = _stream_key(config.seed, _SALT_PINK, ch, k)
                    acc += _gauss(row_key, idx >> k)
                out[ch] += scale * acc

        if config.line_amp_uv > 0:
            line_key = _stream_key(config.seed, _SALT_LINE)
            # mild per-channel amplitude spread so spatial filters cannot
            # cancel the line component exactly
            factors = 0.9 + 0.2 * _uniform(line_key, np.arange(n_ch, dtype=np.int64))
            wave = np.sin(2.0 * np.pi * config.line_freq_hz * t)
            out += config.line_amp_uv * factors[:, None] * wave[None, :]

        if config.artifact_rate_per_min > 0 and config.artifact_amp_uv > 0:
            t_lo, t_hi = from_sample / fs, (from_sample + n) / fs
            frontal = config.montage.frontal_indices() or tuple(range(n_ch))
            for kind, t0, dur, sign, chan_u, slot in _artifact_events(
                    config, int(np.floor(t_lo)), int(np.floor(t_hi - 1e-12)) + 1):
                sel = (t >= t0) & (t < t0 + dur)
                if not sel.any():
                    continue
                if kind == "eog":
                    pulse = np.sin(np.pi * (t[sel] - t0) / dur)
                    for ch in frontal:
                        out[ch, sel] += sign * config.artifact_amp_uv * pulse
                else:
                    ch = int(chan_u * n_ch) % n_ch
                    burst_key = _stream_key(config.seed, _SALT_EMG, slot)
                    out[ch, sel] += (config.artifact_amp_uv / 3.0) * _gauss(
                        burst_key, idx[sel])

    return SampleBlock(first_sample_index=from_sample, samples=out, fs=fs)


class SyntheticEEG:
    """Cursor-tracking convenience wrapper around :func:`generate_block`.

    Single-owner. ``inject_state`` edits the timeline from the current cursor
    time onward, which is how the operator console overrides the simulated
    mental state of a live source.
    """

    def __init__(self, config: GeneratorConfig, timeline: Timeline,
                 start_sample: int = 0):
        self.config = config
        self.timeline = timeline
        self.cursor = start_sample

    @property
    def t(self) -> float:
        return self.cursor / self.config.fs

    def next_block(self, n: int) -> SampleBlock:
        block = generate_block(self.config, self.timeline, self.cursor, n)
        self.cursor += n
        return block

    def inject_state(self, state: MentalState):
        t = self.t
        kept = tuple((ts, s) for ts, s in self.timeline.entries if ts < t)
        self.timeline = Timeline(kept + ((t, state),))


def replace_seed(config: GeneratorConfig, seed: int) -> GeneratorConfig:
    return replace(config, seed=seed)
