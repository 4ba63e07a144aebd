"""Per-epoch feature extraction.

Band power (Welch), Hjorth parameters, Burg autoregressive coefficients, and
Haar wavelet energies, assembled into a deterministically ordered feature
vector with optional z-scoring against running statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .sigcore import BandDef, Epoch, SignalError


class FeatureError(SignalError):
    """A sub-feature failed; carries the (channel, kind, param) descriptor."""

    def __init__(self, descriptor, cause):
        self.descriptor = descriptor
        self.cause = cause
        super().__init__(f"feature {descriptor} failed: {cause}")


class DegenerateSignalError(SignalError):
    """The signal has no variance/energy where the feature needs some."""


def welch_psd(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD per channel: Hann window, 50% overlap, one-sided, µV²/Hz.

    Segment length is min(n_samples, round(fs)) so a 1 s epoch is a single
    segment with 1 Hz bins, and longer stretches average several segments.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    nper = min(n, max(int(round(fs)), 8))
    step = max(nper // 2, 1)
    window = np.hanning(nper)
    u = float(window @ window)  # window power normalization
    n_freqs = nper // 2 + 1
    psd = np.zeros((x.shape[0], n_freqs))
    n_seg = 0
    for start in range(0, n - nper + 1, step):
        seg = x[:, start:start + nper] * window
        spec = np.abs(np.fft.rfft(seg, axis=1)) ** 2
        psd += spec
        n_seg += 1
    psd /= n_seg * fs * u
    # one-sided: double everything except DC (and Nyquist when nper is even)
    psd[:, 1:] *= 2.0
    if nper % 2 == 0:
        psd[:, -1] /= 2.0
    freqs = np.arange(n_freqs) * (fs / nper)
    return freqs, psd


def band_power(epoch: Epoch, band: BandDef) -> np.ndarray:
    """Per-channel power (µV²) integrated over [f_lo, f_hi]."""
    band.validate_for(epoch.fs)
    freqs, psd = welch_psd(epoch.samples, epoch.fs)
    sel = (freqs >= band.f_lo) & (freqs <= band.f_hi)
    df = freqs[1] - freqs[0]
    return psd[:, sel].sum(axis=1) * df


def hjorth_params(epoch: Epoch) -> np.ndarray:
    """Per-channel (activity, mobility, complexity); shape (n_channels, 3).

    activity = var(x); mobility = sqrt(var(x') / var(x)); complexity =
    mobility(x') / mobility(x), with derivatives as first differences scaled
    by fs. A constant channel has no defined mobility and raises.
    """
    if epoch.window_len < 3:
        raise SignalError("Hjorth parameters need a window of at least 3 samples")
    x = epoch.samples
    dx = np.diff(x, axis=1) * epoch.fs
    ddx = np.diff(dx, axis=1) * epoch.fs
    var_x = x.var(axis=1)
    var_dx = dx.var(axis=1)
    var_ddx = ddx.var(axis=1)
    for c, v in enumerate(var_x):
        if v == 0.0:
            raise DegenerateSignalError(f"channel {c} is constant (zero activity)")
    if np.any(var_dx == 0.0):
        raise DegenerateSignalError("zero first-difference variance")
    mobility = np.sqrt(var_dx / var_x)
    complexity = np.sqrt(var_ddx / var_dx) / mobility
    return np.stack([var_x, mobility, complexity], axis=1)


def ar_coefficients(epoch: Epoch, order: int) -> np.ndarray:
    """Per-channel Burg AR coefficients, convention x_t = sum a_k x_{t-k} + e.

    Shape (n_channels, order).
    """
    n = epoch.window_len
    if not 1 <= order < n / 2:
        raise SignalError(f"AR order must satisfy 1 <= order < window/2, got {order}")
    out = np.empty((epoch.n_channels, order))
    for c in range(epoch.n_channels):
        x = epoch.samples[c]
        if not np.any(x != x[0]):
            raise DegenerateSignalError(f"channel {c} has zero energy variation")
        try:
            out[c], _ = _kernels.burg(x, order)
        except FloatingPointError as exc:
            raise DegenerateSignalError(f"channel {c}: {exc}") from exc
    return out


def wavelet_energies(epoch: Epoch, levels: int) -> np.ndarray:
    """Haar DWT energies: per channel, one energy per detail level plus the
    final approximation. Shape (n_channels, levels + 1).

    The input is truncated to the largest power of two it contains; energy is
    conserved exactly over that prefix (orthonormal transform).
    """
    n = epoch.window_len
    if levels < 1:
        raise SignalError("levels must be >= 1")
    if n < 2 ** levels:
        raise SignalError(f"window of {n} samples cannot support {levels} Haar levels")
    n_pow2 = 1 << (n.bit_length() - 1)
    x = np.array(epoch.samples[:, :n_pow2], dtype=np.float64)
    energies = np.empty((epoch.n_channels, levels + 1))
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for lev in range(levels):
        even = x[:, 0::2]
        odd = x[:, 1::2]
        detail = (even - odd) * inv_sqrt2
        x = (even + odd) * inv_sqrt2
        energies[:, lev] = (detail ** 2).sum(axis=1)
    energies[:, levels] = (x ** 2).sum(axis=1)
    return energies


HJORTH_NAMES = ("activity", "mobility", "complexity")


@dataclass(frozen=True)
class FeatureSpec:
    """Which features to extract; ordering inside a channel is fixed:
    band powers (in the order given), Hjorth (activity, mobility,
    complexity, filtered to the selection), AR by lag, wavelet by level.
    """

    bands: tuple[BandDef, ...] = ()
    hjorth: tuple[str, ...] = ()
    ar_order: int = 0
    wavelet_levels: int = 0

    def __post_init__(self):
        for h in self.hjorth:
            if h not in HJORTH_NAMES:
                raise SignalError(f"unknown Hjorth selection {h!r}")
        if not (self.bands or self.hjorth or self.ar_order or self.wavelet_levels):
            raise SignalError("empty feature spec")

    def layout(self, n_channels: int) -> tuple[tuple[int, str, object], ...]:
        """Channel-major (channel, kind, param) descriptors."""
        per_channel: list[tuple[str, object]] = []
        per_channel += [("bandpower", b.name) for b in self.bands]
        per_channel += [("hjorth", h) for h in HJORTH_NAMES if h in self.hjorth]
        per_channel += [("ar", lag) for lag in range(1, self.ar_order + 1)]
        per_channel += [("wavelet", lev) for lev in range(1, self.wavelet_levels + 1)]
        if self.wavelet_levels:
            per_channel.append(("wavelet", "approx"))
        return tuple(
            (ch, kind, param)
            for ch in range(n_channels)
            for kind, param in per_channel
        )


@dataclass
class Normalizer:
    """Running per-feature mean/std (Welford); applied once warmed up.

    Never updated from artifact-flagged epochs; ``assemble_features``
    enforces that.
    """

    min_count: int = 10
    count: int = 0
    _mean: np.ndarray | None = field(default=None, repr=False)
    _m2: np.ndarray | None = field(default=None, repr=False)

    def update(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if self._mean is None:
            self._mean = np.zeros_like(values)
            self._m2 = np.zeros_like(values)
        self.count += 1
        delta = values - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (values - self._mean)

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            raise SignalError("normalizer has no data")
        return self._mean.copy()

    @property
    def std(self) -> np.ndarray:
        if self._m2 is None:
            raise SignalError("normalizer has no data")
        return np.sqrt(self._m2 / max(self.count, 1))

    @property
    def warmed_up(self) -> bool:
        return self.count >= self.min_count

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self._mean) / np.maximum(self.std, 1e-12)


@dataclass(frozen=True)
class FeatureVector:
    """Ordered feature values plus their layout descriptors."""

    values: np.ndarray
    layout: tuple[tuple[int, str, object], ...]
    epoch_start_index: int
    artifact_flag: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if len(values) != len(self.layout):
            raise SignalError("values/layout length mismatch")
        if not self.artifact_flag and not np.all(np.isfinite(values)):
            raise SignalError("non-finite feature values in a clean epoch")


def assemble_features(epoch: Epoch, spec: FeatureSpec,
                      normalizer: Normalizer | None = None) -> FeatureVector:
    """Extract the selected features in deterministic channel-major order.

    Clean epochs update the normalizer (when given) and are z-scored once it
    is warmed up. Artifact-flagged epochs are emitted raw: no normalizer
    update, no z-scoring, and sub-feature failures yield NaN values instead
    of raising.
    """
    n_ch = epoch.n_channels
    columns: list[np.ndarray] = []

    def compute(kind, fn, width):
        try:
            return np.asarray(fn(), dtype=np.float64).reshape(n_ch, width)
        except SignalError as exc:
            if epoch.artifact_flag:
                return np.full((n_ch, width), np.nan)
            raise FeatureError((kind,), exc) from exc

    if spec.bands:
        for b in spec.bands:
            columns.append(compute(("bandpower", b.name),
                                   lambda b=b: band_power(epoch, b), 1))
    if spec.hjorth:
        keep = [i for i, h in enumerate(HJORTH_NAMES) if h in spec.hjorth]
        hj = compute(("hjorth",), lambda: hjorth_params(epoch), 3)
        columns.append(hj[:, keep])
    if spec.ar_order:
        columns.append(compute(("ar",), lambda: ar_coefficients(epoch, spec.ar_order),
                               spec.ar_order))
    if spec.wavelet_levels:
        columns.append(compute(("wavelet",),
                               lambda: wavelet_energies(epoch, spec.wavelet_levels),
                               spec.wavelet_levels + 1))

    values = np.concatenate(columns, axis=1).reshape(-1)  # channel-major
    layout = spec.layout(n_ch)

    if normalizer is not None and not epoch.artifact_flag:
        normalizer.update(values)
        if normalizer.warmed_up:
            values = normalizer.apply(values)

    return FeatureVector(values=values, layout=layout,
                         epoch_start_index=epoch.start_sample_index,
                         artifact_flag=epoch.artifact_flag)
