"""Run configuration: generator, filter chain, windowing, feature selection,
and default policy, with JSON (de)serialization for the CLI and the service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .features import FeatureSpec
from .preprocess import ChainConfig
from .session import Policy
from .sigcore import DEFAULT_STEP_S, DEFAULT_WINDOW_S, Montage, band_table
from .synthgen import GeneratorConfig, Oscillator, default_generator_config


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=default_generator_config)
    chain: ChainConfig = field(default_factory=ChainConfig)
    window_s: float = DEFAULT_WINDOW_S
    step_s: float = DEFAULT_STEP_S
    feature_bands: tuple[str, ...] = ("theta", "alpha")
    feature_hjorth: tuple[str, ...] = ("complexity",)
    feature_ar_order: int = 0
    feature_wavelet_levels: int = 0
    policy_defaults: Policy = field(default_factory=Policy)
    stream_buffer_frames: int = 64

    @property
    def fs(self) -> float:
        return self.generator.fs

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.fs))

    @property
    def step_samples(self) -> int:
        return int(round(self.step_s * self.fs))

    def feature_spec(self) -> FeatureSpec:
        bands = band_table()
        return FeatureSpec(
            bands=tuple(bands[name] for name in self.feature_bands),
            hjorth=self.feature_hjorth,
            ar_order=self.feature_ar_order,
            wavelet_levels=self.feature_wavelet_levels,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, generator=replace(self.generator, seed=seed))

    def to_dict(self) -> dict:
        g = self.generator
        return {
            "generator": {
                "fs": g.fs,
                "montage": {
                    "channel_names": list(g.montage.channel_names),
                    "neighbors": [list(n) for n in g.montage.neighbors],
                    "bipolar_pairs": [list(p) for p in g.montage.bipolar_pairs],
                },
                "oscillators": {
                    name: {"freq_hz": osc.freq_hz, "amps_uv": list(osc.amps_uv)}
                    for name, osc in g.oscillators
                },
                "pink_amp_uv": g.pink_amp_uv,
                "pink_octaves": g.pink_octaves,
                "line_freq_hz": g.line_freq_hz,
                "line_amp_uv": g.line_amp_uv,
                "artifact_rate_per_min": g.artifact_rate_per_min,
                "artifact_amp_uv": g.artifact_amp_uv,
                "seed": g.seed,
            },
            "chain": {
                "notch_hz": self.chain.notch_hz,
                "notch_q": self.chain.notch_q,
                "bandpass_order": self.chain.bandpass_order,
                "bandpass_lo_hz": self.chain.bandpass_lo_hz,
                "bandpass_hi_hz": self.chain.bandpass_hi_hz,
                "spatial": self.chain.spatial,
                "artifact_threshold_uv": self.chain.artifact_threshold_uv,
            },
            "epoch": {"window_s": self.window_s, "step_s": self.step_s},
            "features": {
                "bands": list(self.feature_bands),
                "hjorth": list(self.feature_hjorth),
                "ar_order": self.feature_ar_order,
                "wavelet_levels": self.feature_wavelet_levels,
            },
            "policy_defaults": self.policy_defaults.to_dict(),
            "stream_buffer_frames": self.stream_buffer_frames,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        kwargs = {}
        if "generator" in doc:
            g = doc["generator"]
            gen_kwargs = {k: g[k] for k in (
                "fs", "pink_amp_uv", "pink_octaves", "line_freq_hz",
                "line_amp_uv", "artifact_rate_per_min", "artifact_amp_uv",
                "seed") if k in g}
            if "montage" in g:
                m = g["montage"]
                gen_kwargs["montage"] = Montage(
                    channel_names=tuple(m["channel_names"]),
                    neighbors=tuple(tuple(n) for n in m["neighbors"]),
                    bipolar_pairs=tuple(tuple(p) for p in m.get("bipolar_pairs", [])),
                )
            if "oscillators" in g:
                gen_kwargs["oscillators"] = tuple(
                    (name, Oscillator(o["freq_hz"], tuple(o["amps_uv"])))
                    for name, o in g["oscillators"].items()
                )
            kwargs["generator"] = GeneratorConfig(**gen_kwargs)
        if "chain" in doc:
            kwargs["chain"] = ChainConfig(**doc["chain"])
        if "epoch" in doc:
            kwargs["window_s"] = doc["epoch"].get("window_s", DEFAULT_WINDOW_S)
            kwargs["step_s"] = doc["epoch"].get("step_s", DEFAULT_STEP_S)
        if "features" in doc:
            f = doc["features"]
            kwargs["feature_bands"] = tuple(f.get("bands", ("theta", "alpha")))
            kwargs["feature_hjorth"] = tuple(f.get("hjorth", ("complexity",)))
            kwargs["feature_ar_order"] = f.get("ar_order", 0)
            kwargs["feature_wavelet_levels"] = f.get("wavelet_levels", 0)
        if "policy_defaults" in doc:
            kwargs["policy_defaults"] = Policy.from_dict(doc["policy_defaults"])
        if "stream_buffer_frames" in doc:
            kwargs["stream_buffer_frames"] = doc["stream_buffer_frames"]
        return cls(**kwargs)


def load_config(path) -> RunConfig:
    return RunConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_config(config: RunConfig, path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")
