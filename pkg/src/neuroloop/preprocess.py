"""Temporal IIR filtering, spatial filtering, and artifact flagging.

Filter design is done here from the analog prototype (Butterworth band-pass
via the bilinear transform with pre-warping, single-biquad notch) rather than
delegated to a DSP library, so the sinusoid-RMS gain oracle in the tests
checks the actual design math. Streaming evaluation uses the cascaded-biquad
kernel from :mod:`neuroloop._kernels`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .sigcore import Epoch, Montage, SampleBlock, SignalError

CAR = "car"
LAPLACIAN = "laplacian"
BIPOLAR = "bipolar"


class DesignError(SignalError):
    """A filter design precondition was violated."""


class ShapeError(SignalError):
    """State/coefficient/block dimensions do not line up."""


class MontageError(SignalError):
    """The montage cannot support the requested spatial filter."""


@dataclass(frozen=True)
class FilterCoefficients:
    """A cascade of second-order sections plus design metadata.

    Rows of ``sos`` are (b0, b1, b2, 1, a1, a2).
    """

    sos: np.ndarray
    kind: str
    edges: tuple[float, ...]
    order: int
    fs: float

    def __post_init__(self):
        sos = np.ascontiguousarray(self.sos, dtype=np.float64)
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise DesignError("sos must have shape (n_sections, 6)")

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    def pole_radii(self) -> np.ndarray:
        """Pole magnitudes per section; all must be < 1 for stability."""
        radii = np.empty((self.n_sections, 2))
        for i, (_, _, _, _, a1, a2) in enumerate(self.sos):
            radii[i] = np.abs(np.roots([1.0, a1, a2]))
        return radii

    def is_stable(self) -> bool:
        return bool(np.all(self.pole_radii() < 1.0))

    def gain_at(self, f_hz: float) -> float:
        """Analytic |H| at f_hz, the product of section responses."""
        z = cmath.exp(1j * 2.0 * math.pi * f_hz / self.fs)
        h = 1.0 + 0.0j
        for b0, b1, b2, _, a1, a2 in self.sos:
            h *= (b0 + b1 / z + b2 / z ** 2) / (1.0 + a1 / z + a2 / z ** 2)
        return abs(h)


@dataclass
class FilterState:
    """Per-channel, per-section delay memory for streaming evaluation."""

    zi: np.ndarray  # (n_channels, n_sections, 2)

    @classmethod
    def zeros(cls, coeffs: FilterCoefficients, n_channels: int) -> "FilterState":
        return cls(np.zeros((n_channels, coeffs.n_sections, 2)))

    @property
    def n_channels(self) -> int:
        return self.zi.shape[0]

    @property
    def n_sections(self) -> int:
        return self.zi.shape[1]


def design_bandpass(order: int, f_lo: float, f_hi: float, fs: float) -> FilterCoefficients:
    """Butterworth band-pass as second-order sections.

    ``order`` is the low-pass prototype order (so the band-pass has
    2*order poles and ``order`` sections); -3 dB points land on f_lo and
    f_hi via bilinear pre-warping.
    """
    if order not in (2, 4, 6, 8):
        raise DesignError(f"order must be one of 2, 4, 6, 8, got {order}")
    if not 0 < f_lo < f_hi:
        raise DesignError(f"need 0 < f_lo < f_hi, got ({f_lo}, {f_hi})")
    if f_hi >= fs / 2:
        raise DesignError(f"upper edge {f_hi} Hz reaches Nyquist ({fs / 2} Hz)")

    fs2 = 2.0 * fs
    w1 = fs2 * math.tan(math.pi * f_lo / fs)  # pre-warped analog edges, rad/s
    w2 = fs2 * math.tan(math.pi * f_hi / fs)
    bw = w2 - w1
    w0sq = w1 * w2

    sections = []
    for k in range(1, order // 2 + 1):
        # prototype pole pair (upper-half-plane member)
        theta = math.pi * (2 * k + order - 1) / (2 * order)
        p = cmath.exp(1j * theta)
        # low-pass -> band-pass: s^2 - p*bw*s + w0^2 = 0
        disc = cmath.sqrt((p * bw) ** 2 - 4.0 * w0sq)
        for s_pole in ((p * bw + disc) / 2.0, (p * bw - disc) / 2.0):
            z_pole = (fs2 + s_pole) / (fs2 - s_pole)
            # zeros at z = +1 and z = -1 (images of s = 0 and s = inf)
            a1 = -2.0 * z_pole.real
            a2 = abs(z_pole) ** 2
            sections.append([1.0, 0.0, -1.0, 1.0, a1, a2])

    sos = np.array(sections)
    coeffs = FilterCoefficients(sos=sos, kind="bandpass",
                                edges=(f_lo, f_hi), order=order, fs=fs)
    # unity gain at the geometric-mean frequency
    fc = math.sqrt(f_lo * f_hi)
    g = coeffs.gain_at(fc)
    if g <= 0:
        raise DesignError("degenerate band-pass design")
    sos = sos.copy()
    sos[:, :3] *= (1.0 / g) ** (1.0 / len(sections))
    coeffs = FilterCoefficients(sos=sos, kind="bandpass",
                                edges=(f_lo, f_hi), order=order, fs=fs)
    if not coeffs.is_stable():
        raise DesignError("band-pass design produced unstable sections")
    return coeffs


def design_notch(f0: float, q: float, fs: float) -> FilterCoefficients:
    """Single-biquad notch at f0 with quality factor q (unity at DC)."""
    if not 0 < f0 < fs / 2:
        raise DesignError(f"notch frequency {f0} Hz must lie in (0, {fs / 2})")
    if q <= 0:
        raise DesignError("quality factor must be positive")
    w0 = 2.0 * math.pi * f0 / fs
    alpha = math.sin(w0) / (2.0 * q)
    a0 = 1.0 + alpha
    sos = np.array([[1.0 / a0, -2.0 * math.cos(w0) / a0, 1.0 / a0,
                     1.0, -2.0 * math.cos(w0) / a0, (1.0 - alpha) / a0]])
    coeffs = FilterCoefficients(sos=sos, kind="notch", edges=(f0,),
                                order=2, fs=fs)
    if not coeffs.is_stable():
        raise DesignError("notch design produced unstable sections")
    return coeffs


def filter_block(coeffs: FilterCoefficients, state: FilterState,
                 block: SampleBlock) -> SampleBlock:
    """Run one block through the cascade, carrying state across calls."""
    if state.n_channels != block.n_channels or state.n_sections != coeffs.n_sections:
        raise ShapeError(
            f"state is ({state.n_channels} ch, {state.n_sections} sections), "
            f"block has {block.n_channels} ch, cascade {coeffs.n_sections} sections"
        )
    y = _kernels.sosfilt_stream(coeffs.sos, block.samples, state.zi)
    return SampleBlock(first_sample_index=block.first_sample_index,
                       samples=y, fs=block.fs)


def spatial_filter(block: SampleBlock, montage: Montage, method: str) -> SampleBlock:
    """Re-reference a block: common average, Laplacian, or bipolar pairs."""
    if montage.n_channels != block.n_channels:
        raise ShapeError(
            f"montage has {montage.n_channels} channels, block {block.n_channels}"
        )
    x = block.samples
    if method == CAR:
        out = x - x.mean(axis=0, keepdims=True)
    elif method == LAPLACIAN:
        out = np.empty_like(x)
        for c, nbrs in enumerate(montage.neighbors):
            if not nbrs:
                raise MontageError(
                    f"channel {montage.channel_names[c]} has no Laplacian neighbors"
                )
            out[c] = x[c] - x[list(nbrs)].mean(axis=0)
    elif method == BIPOLAR:
        if not montage.bipolar_pairs:
            raise MontageError("montage defines no bipolar pairs")
        out = np.stack([x[a] - x[b] for a, b in montage.bipolar_pairs])
    else:
        raise SignalError(f"unknown spatial filter method {method!r}")
    return SampleBlock(first_sample_index=block.first_sample_index,
                       samples=out, fs=block.fs)


def artifact_mask(epoch: Epoch, threshold_uv: float) -> Epoch:
    """Flag the epoch when any sample magnitude exceeds the threshold."""
    if threshold_uv <= 0:
        raise SignalError("artifact threshold must be positive")
    flagged = bool(np.any(np.abs(epoch.samples) > threshold_uv))
    return replace(epoch, artifact_flag=flagged)


@dataclass(frozen=True)
class ChainConfig:
    """The canonical preprocessing chain parameters."""

    notch_hz: float = 50.0
    notch_q: float = 30.0
    bandpass_order: int = 4
    bandpass_lo_hz: float = 1.0
    bandpass_hi_hz: float = 45.0
    spatial: str = CAR
    artifact_threshold_uv: float = 100.0


class PreprocessChain:
    """Streaming chain: notch -> band-pass -> spatial filter.

    Owns the filter state for one stream; single-owner. Artifact masking is
    applied per epoch by the caller (see :func:`artifact_mask`), since it
    needs windowed data.
    """

    def __init__(self, config: ChainConfig, fs: float, montage: Montage):
        self.config = config
        self.montage = montage
        self.notch = design_notch(config.notch_hz, config.notch_q, fs)
        self.bandpass = design_bandpass(
            config.bandpass_order, config.bandpass_lo_hz,
            config.bandpass_hi_hz, fs)
        n_ch = montage.n_channels
        self._notch_state = FilterState.zeros(self.notch, n_ch)
        self._bp_state = FilterState.zeros(self.bandpass, n_ch)

    @property
    def out_channels(self) -> int:
        if self.config.spatial == BIPOLAR:
            return len(self.montage.bipolar_pairs)
        return self.montage.n_channels

    def process_block(self, block: SampleBlock) -> SampleBlock:
        block = filter_block(self.notch, self._notch_state, block)
        block = filter_block(self.bandpass, self._bp_state, block)
        return spatial_filter(block, self.montage, self.config.spatial)

    def reset(self):
        self._notch_state.zi[:] = 0.0
        self._bp_state.zi[:] = 0.0
