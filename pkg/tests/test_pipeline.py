import numpy as np
import pytest

from neuroloop.pipeline import (StreamPipeline, replay_session,
                                run_calibration, run_simulation)
from neuroloop.session import RunMode, events_to_jsonl
from neuroloop.sigcore import SignalError
from neuroloop.synthgen import (CLEAR, CONFUSED, SyntheticEEG, Timeline)


class TestCalibration:
    def test_separates_the_synthetic_states(self, calibration):
        assert calibration.training_accuracy >= 0.95
        assert calibration.n_clear >= 50
        assert calibration.n_confused >= 50

    def test_policy_thresholds_ordered(self, calibration):
        p = calibration.policy
        assert 0 <= p.theta_low < p.theta_high <= 1

    def test_model_carries_normalizer(self, calibration):
        assert calibration.model.normalizer_mean is not None
        assert len(calibration.model.normalizer_mean) == len(
            calibration.model.weights)

    def test_deterministic(self, run_config, calibration):
        again = run_calibration(run_config)
        assert np.array_equal(again.model.weights, calibration.model.weights)
        assert again.policy == calibration.policy


class TestStreamPipeline:
    def test_epoch_cadence(self, run_config, calibration):
        pipe = StreamPipeline(run_config, calibration.model, calibration.policy)
        gen = SyntheticEEG(run_config.generator, Timeline(((0.0, CLEAR),)))
        results = []
        for _ in range(10):  # 5 s of signal at 0.5 s blocks
            results.extend(pipe.process_block(gen.next_block(125)))
        # first epoch needs a full 1 s window, then one per step
        assert len(results) == 9
        assert [r.epoch_index for r in results] == list(range(9))
        assert results[0].t_end_s == pytest.approx(1.0)
        assert results[1].t_end_s == pytest.approx(1.5)

    def test_telemetry_bands_present(self, run_config, calibration):
        pipe = StreamPipeline(run_config, calibration.model, calibration.policy)
        gen = SyntheticEEG(run_config.generator, Timeline(((0.0, CLEAR),)))
        result = None
        while result is None:
            out = pipe.process_block(gen.next_block(125))
            result = out[0] if out else None
        assert set(result.band_powers) == {"theta", "alpha"}
        assert all(v >= 0 for v in result.band_powers.values())

    def test_layout_mismatch_rejected(self, run_config, calibration):
        from dataclasses import replace
        bad = replace(run_config, feature_bands=("theta",))
        with pytest.raises(SignalError):
            StreamPipeline(bad, calibration.model, calibration.policy)

    def test_confused_scores_higher(self, run_config, calibration):
        tl = Timeline(((0.0, CLEAR), (20.0, CONFUSED)))
        pipe = StreamPipeline(run_config, calibration.model, calibration.policy)
        gen = SyntheticEEG(run_config.generator, tl)
        results = []
        for _ in range(80):  # 40 s
            results.extend(pipe.process_block(gen.next_block(125)))
        clear = [r.detector.confusion for r in results if r.t_end_s <= 20.0]
        confused = [r.detector.confusion for r in results if r.t_end_s >= 23.0]
        assert np.mean(confused) > 0.9
        assert np.mean(clear) < 0.1


class TestSimulation:
    def test_all_clear_run_is_quiet(self, run_config, calibration, lesson):
        out = run_simulation(run_config, Timeline(((0.0, CLEAR),)), lesson,
                             calibration.model, calibration.policy)
        assert out.report.false_pauses == 0
        assert out.report.pauses == 0
        assert out.report.segments_completed == 2
        assert out.report.epochs == 240  # 2 min lesson at 0.5 s step

    def test_confused_onset_detected(self, run_config, calibration, lesson):
        tl = Timeline(((0.0, CLEAR), (30.0, CONFUSED), (50.0, CLEAR)))
        out = run_simulation(run_config, tl, lesson,
                             calibration.model, calibration.policy)
        assert out.report.missed_onsets == 0
        assert len(out.report.detection_latencies_s) == 1
        assert 0 < out.report.detection_latencies_s[0] <= 3.0

    def test_rows_and_events_replay_identically(self, run_config, calibration,
                                                lesson):
        tl = Timeline(((0.0, CLEAR), (25.0, CONFUSED), (40.0, CLEAR)))
        out = run_simulation(run_config, tl, lesson,
                             calibration.model, calibration.policy)
        events = replay_session(out.rows, lesson, calibration.policy,
                                RunMode(), run_config.step_s)
        assert events_to_jsonl(events) == events_to_jsonl(out.events)

    def test_identical_seeds_identical_reports(self, run_config, calibration,
                                               lesson):
        tl = Timeline(((0.0, CLEAR), (30.0, CONFUSED)))
        a = run_simulation(run_config, tl, lesson, calibration.model,
                           calibration.policy)
        b = run_simulation(run_config, tl, lesson, calibration.model,
                           calibration.policy)
        # wall-clock factor varies run to run; everything else is pinned
        assert a.report.to_dict(include_timing=False) == \
            b.report.to_dict(include_timing=False)
        assert events_to_jsonl(a.events) == events_to_jsonl(b.events)

    def test_replay_honors_operator_command_rows(self, run_config, calibration,
                                                 lesson):
        out = run_simulation(run_config, Timeline(((0.0, CLEAR),)), lesson,
                             calibration.model, calibration.policy)
        rows = out.rows[:40]
        rows.insert(20, {"kind": "command", "command": "pause",
                         "confusion": 0.0})
        # resume before the auto-resume dwell (4 low epochs) can fire
        rows.insert(23, {"kind": "command", "command": "resume",
                         "confusion": 0.0})
        events = replay_session(rows, lesson, calibration.policy, RunMode(),
                                run_config.step_s)
        kinds = [e["action"] for e in events]
        assert kinds[:2] == ["OperatorPause", "OperatorResume"]
