"""Core signal domain types and stream-to-epoch windowing.

Everything here is shared by the generator, the preprocessing chain, the
feature extractor, and the network service: multi-channel sample blocks in
microvolts, montage/band definitions, and the fixed-grid epochizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FS = 250.0

#: Conventional rhythm edges in Hz. The rhythm names are standard; the exact
#: edges are a project convention.
DEFAULT_BANDS = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("mu", 8.0, 12.0),
    ("beta", 13.0, 30.0),
    ("gamma", 30.0, 45.0),
)

DEFAULT_WINDOW_S = 1.0
DEFAULT_STEP_S = 0.5


class SignalError(ValueError):
    """Base class for domain errors raised by the signal modules."""


class StreamGapError(SignalError):
    """Consecutive blocks are not contiguous in sample index space."""

    def __init__(self, expected_index: int, actual_index: int):
        self.expected_index = expected_index
        self.actual_index = actual_index
        super().__init__(
            f"stream gap: expected first_sample_index {expected_index}, "
            f"got {actual_index}"
        )


def _as_readonly(arr, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SampleBlock:
    """A contiguous chunk of multi-channel samples (channel-major, µV)."""

    first_sample_index: int
    samples: np.ndarray  # shape (n_channels, n_samples)
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_readonly(self.samples))
        if self.samples.ndim != 2:
            raise SignalError("samples must be a 2-D (channel, sample) array")
        if self.n_channels < 1:
            raise SignalError("a block needs at least one channel")
        if self.first_sample_index < 0:
            raise SignalError("first_sample_index must be >= 0")
        if not self.fs > 0:
            raise SignalError("fs must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise SignalError("samples must be finite (no NaN/Inf)")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def end_sample_index(self) -> int:
        return self.first_sample_index + self.n_samples


@dataclass(frozen=True)
class Montage:
    """Channel labels plus the index structure used by spatial filters."""

    channel_names: tuple[str, ...]
    neighbors: tuple[tuple[int, ...], ...]  # per channel, Laplacian neighbors
    bipolar_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = len(self.channel_names)
        if n < 1:
            raise SignalError("montage needs at least one channel")
        if len(set(self.channel_names)) != n:
            raise SignalError("channel names must be unique")
        if len(self.neighbors) != n:
            raise SignalError("neighbors must be given for every channel")
        for c, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                if not 0 <= j < n:
                    raise SignalError(f"neighbor index {j} out of range")
                if j == c:
                    raise SignalError(f"channel {c} listed as its own neighbor")
        for a, b in self.bipolar_pairs:
            if not (0 <= a < n and 0 <= b < n):
                raise SignalError("bipolar pair index out of range")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def frontal_indices(self) -> tuple[int, ...]:
        return tuple(
            i for i, name in enumerate(self.channel_names)
            if name.upper().startswith(("FP", "F", "AF"))
        )


def default_montage() -> Montage:
    """8-channel 10-20 subset with 4-neighbor Laplacian lists.

    Channel order: Fp1, Fp2, C3, Cz, C4, P3, Pz, P4. Neighbor lists use the
    nearest available montage channels; edge channels have fewer than four.
    """
    names = ("Fp1", "Fp2", "C3", "Cz", "C4", "P3", "Pz", "P4")
    neighbors = (
        (1, 2, 3),        # Fp1: Fp2, C3, Cz
        (0, 3, 4),        # Fp2: Fp1, Cz, C4
        (0, 3, 5),        # C3:  Fp1, Cz, P3
        (0, 1, 2, 4, 6),  # Cz:  Fp1, Fp2, C3, C4, Pz
        (1, 3, 7),        # C4:  Fp2, Cz, P4
        (2, 6),           # P3:  C3, Pz
        (3, 5, 7),        # Pz:  Cz, P3, P4
        (4, 6),           # P4:  C4, Pz
    )
    pairs = ((2, 3), (4, 3), (5, 6), (7, 6))  # C3-Cz, C4-Cz, P3-Pz, P4-Pz
    return Montage(names, neighbors, pairs)


@dataclass(frozen=True)
class BandDef:
    """A named frequency band [f_lo, f_hi] in Hz."""

    name: str
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not 0 < self.f_lo < self.f_hi:
            raise SignalError(
                f"band {self.name}: need 0 < f_lo < f_hi, got "
                f"({self.f_lo}, {self.f_hi})"
            )

    def validate_for(self, fs: float):
        if self.f_hi >= fs / 2:
            raise SignalError(
                f"band {self.name}: f_hi {self.f_hi} Hz is not below the "
                f"Nyquist frequency {fs / 2} Hz"
            )


def band_table() -> dict[str, BandDef]:
    return {name: BandDef(name, lo, hi) for name, lo, hi in DEFAULT_BANDS}


@dataclass(frozen=True)
class Epoch:
    """A fixed-length analysis window cut from the stream."""

    start_sample_index: int
    samples: np.ndarray  # shape (n_channels, window_len)
    fs: float
    artifact_flag: bool = False

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_readonly(self.samples))
        if self.samples.ndim != 2 or self.window_len < 1:
            raise SignalError("epoch samples must be (n_channels, window_len>=1)")
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("epoch samples must be finite")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def window_len(self) -> int:
        return self.samples.shape[1]


@dataclass
class Epochizer:
    """Carry-over buffer turning a contiguous block stream into epochs.

    Epochs start on the fixed grid origin, origin+step, origin+2*step, ...
    where origin is the first sample index seen (or the index given to
    :meth:`reset`). An epoch is emitted only once all ``window`` samples are
    available. Single-owner: not thread safe.
    """

    window: int
    step: int
    _buffer: np.ndarray | None = field(default=None, repr=False)
    _buffer_start: int = 0
    _next_epoch_start: int | None = None
    _expected_index: int | None = None

    def __post_init__(self):
        if self.window < 1 or self.step < 1:
            raise SignalError("window and step must be >= 1")

    def push(self, block: SampleBlock) -> list[Epoch]:
        """Feed one block; return every epoch completed by it, in order."""
        if (self._expected_index is not None
                and block.first_sample_index != self._expected_index):
            raise StreamGapError(self._expected_index, block.first_sample_index)
        if self._buffer is None:
            self._buffer = np.empty((block.n_channels, 0))
            self._buffer_start = block.first_sample_index
            self._next_epoch_start = block.first_sample_index
        self._expected_index = block.end_sample_index

        self._buffer = np.concatenate([self._buffer, block.samples], axis=1)
        out = []
        while self._next_epoch_start + self.window <= self._buffer_end:
            lo = self._next_epoch_start - self._buffer_start
            out.append(Epoch(
                start_sample_index=self._next_epoch_start,
                samples=self._buffer[:, lo:lo + self.window],
                fs=block.fs,
            ))
            self._next_epoch_start += self.step
        # drop samples no future epoch can reach
        keep_from = self._next_epoch_start - self._buffer_start
        if keep_from > 0:
            self._buffer = self._buffer[:, keep_from:]
            self._buffer_start = self._next_epoch_start
        return out

    def reset(self, next_index: int | None = None):
        """Drop buffered samples and re-anchor the epoch grid.

        Used after a signalled stream gap: the next pushed block (which must
        start at ``next_index`` if given) begins a fresh grid.
        """
        self._buffer = None
        self._buffer_start = 0
        self._next_epoch_start = None
        self._expected_index = next_index

    @property
    def _buffer_end(self) -> int:
        return self._buffer_start + (0 if self._buffer is None else self._buffer.shape[1])


def epochize(stream_buffer, window: int, step: int) -> list[Epoch]:
    """Cut a sequence of contiguous blocks into fixed-grid epochs.

    Raises StreamGapError when consecutive blocks do not line up. Equivalent
    to feeding the blocks one by one through a fresh :class:`Epochizer`.
    """
    epz = Epochizer(window=window, step=step)
    out = []
    for block in stream_buffer:
        out.extend(epz.push(block))
    return out
