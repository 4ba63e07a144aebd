import json

import numpy as np
import pytest

from neuroloop.sigcore import SignalError, default_montage
from neuroloop.synthgen import (CLEAR, CONFUSED, REST, GeneratorConfig,
                                MentalState, Oscillator, SyntheticEEG,
                                Timeline, default_generator_config,
                                generate_block, state_at, timeline_from_json,
                                timeline_to_json)
from oracles import dft_band_power


def tone_config(amp=2.0, freq=10.0, seed=42, **kw):
    """Single alpha oscillator, no noise, no artifacts."""
    defaults = dict(
        montage=default_montage(),
        oscillators=(("alpha", Oscillator(freq, (amp,) * 8)),),
        pink_amp_uv=0.0, line_amp_uv=0.0, artifact_rate_per_min=0.0, seed=seed,
    )
    defaults.update(kw)
    return GeneratorConfig(**defaults)


CLEAR_TL = Timeline(((0.0, CLEAR),))


class TestStateAt:
    TL = Timeline(((0.0, CLEAR), (30.0, CONFUSED)))

    def test_before_switch(self):
        assert state_at(self.TL, 10.0).label == "CLEAR"

    def test_left_closed(self):
        assert state_at(self.TL, 30.0).label == "CONFUSED"

    def test_just_before(self):
        assert state_at(self.TL, 29.999).label == "CLEAR"

    def test_negative_time(self):
        with pytest.raises(SignalError):
            state_at(self.TL, -0.1)

    def test_timeline_must_start_at_zero(self):
        with pytest.raises(SignalError):
            Timeline(((1.0, CLEAR),))

    def test_timeline_strictly_increasing(self):
        with pytest.raises(SignalError):
            Timeline(((0.0, CLEAR), (5.0, REST), (5.0, CONFUSED)))


class TestGenerateBlock:
    def test_all_zero_amplitudes(self):
        cfg = tone_config(amp=0.0)
        block = generate_block(cfg, CLEAR_TL, 0, 500)
        assert np.all(block.samples == 0.0)

    def test_alpha_power_matches_analytic(self):
        # 2 uV tone at 10 Hz: mean band power over 4 s should be A^2/2 = 2
        cfg = tone_config(amp=2.0)
        block = generate_block(cfg, CLEAR_TL, 0, 1000)
        power = dft_band_power(block.samples[0], cfg.fs, 8.0, 13.0)
        assert power == pytest.approx(2.0, rel=0.10)

    def test_confused_alpha_gain_ratio(self):
        cfg = tone_config(amp=2.0)
        half = MentalState("HALF_ALPHA", (("alpha", 0.5),))
        tl = Timeline(((0.0, CLEAR), (4.0, half)))
        ref = generate_block(cfg, tl, 0, 1000)
        act = generate_block(cfg, tl, 1000, 1000)
        p_ref = dft_band_power(ref.samples[0], cfg.fs, 8.0, 13.0)
        p_act = dft_band_power(act.samples[0], cfg.fs, 8.0, 13.0)
        assert p_act / p_ref == pytest.approx(0.25, rel=0.15)

    def test_determinism_bit_identical(self):
        cfg = default_generator_config(seed=5)
        a = generate_block(cfg, CLEAR_TL, 250, 750)
        b = generate_block(cfg, CLEAR_TL, 250, 750)
        assert np.array_equal(a.samples, b.samples)

    def test_different_seed_differs(self):
        a = generate_block(default_generator_config(seed=5), CLEAR_TL, 0, 250)
        b = generate_block(default_generator_config(seed=6), CLEAR_TL, 0, 250)
        assert not np.array_equal(a.samples, b.samples)

    def test_continuity_across_calls(self):
        cfg = default_generator_config(seed=9)
        whole = generate_block(cfg, CLEAR_TL, 0, 2000)
        first = generate_block(cfg, CLEAR_TL, 0, 1000)
        second = generate_block(cfg, CLEAR_TL, 1000, 1000)
        joined = np.concatenate([first.samples, second.samples], axis=1)
        assert np.array_equal(whole.samples, joined)

    def test_amplitude_soft_bound(self):
        # no artifacts: |x| <= sum(band amps) + line + 6 * pink, rare excursions
        cfg = GeneratorConfig(
            montage=default_montage(),
            oscillators=default_generator_config().oscillators,
            pink_amp_uv=4.0, line_amp_uv=2.0, artifact_rate_per_min=0.0, seed=3)
        n = 1_000_000 // cfg.n_channels + 1
        block = generate_block(cfg, CLEAR_TL, 0, n)
        bound = cfg.amplitude_bound_uv() + 6.0 * cfg.pink_amp_uv
        violations = np.mean(np.abs(block.samples) > bound)
        assert violations < 1e-4

    def test_negative_n_rejected(self):
        with pytest.raises(SignalError):
            generate_block(tone_config(), CLEAR_TL, 0, -1)

    def test_artifacts_appear(self):
        cfg = GeneratorConfig(montage=default_montage(),
                              oscillators=(), pink_amp_uv=0.0, line_amp_uv=0.0,
                              artifact_rate_per_min=30.0, artifact_amp_uv=350.0,
                              seed=1)
        block = generate_block(cfg, CLEAR_TL, 0, 250 * 120)
        assert np.abs(block.samples).max() > 100.0


class TestGeneratorConfig:
    def test_line_freq_below_nyquist(self):
        with pytest.raises(SignalError):
            GeneratorConfig(montage=default_montage(), line_freq_hz=125.0)

    def test_oscillator_channel_count(self):
        with pytest.raises(SignalError):
            GeneratorConfig(montage=default_montage(),
                            oscillators=(("alpha", Oscillator(10.0, (1.0,))),))

    def test_negative_gain_rejected(self):
        with pytest.raises(SignalError):
            MentalState("BAD", (("alpha", -0.5),))


class TestTimelineJson:
    def test_round_trip(self):
        tl = Timeline(((0.0, CLEAR), (30.0, CONFUSED), (60.0, REST)))
        again = timeline_from_json(timeline_to_json(tl))
        assert again == tl

    def test_known_labels_get_default_gains(self):
        tl = timeline_from_json(json.dumps(
            [{"t_start_s": 0, "label": "CLEAR"},
             {"t_start_s": 10, "label": "CONFUSED"}]))
        assert tl.entries[1][1].gain("theta") == 1.8
        assert tl.entries[1][1].gain("alpha") == 0.6

    def test_unknown_label_needs_gains(self):
        with pytest.raises(SignalError):
            timeline_from_json(json.dumps([{"t_start_s": 0, "label": "ODD"}]))


class TestSyntheticEEG:
    def test_cursor_matches_pure_function(self):
        cfg = default_generator_config(seed=2)
        gen = SyntheticEEG(cfg, CLEAR_TL)
        a = gen.next_block(300)
        b = gen.next_block(200)
        direct = generate_block(cfg, CLEAR_TL, 0, 500)
        assert np.array_equal(np.concatenate([a.samples, b.samples], axis=1),
                              direct.samples)

    def test_inject_state_overrides_from_now(self):
        cfg = tone_config(amp=2.0)
        gen = SyntheticEEG(cfg, CLEAR_TL)
        gen.next_block(500)
        gen.inject_state(MentalState("OFF", (("alpha", 0.0),)))
        quiet = gen.next_block(500)
        assert np.abs(quiet.samples).max() < 1e-12
