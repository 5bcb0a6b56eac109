import numpy as np
import pytest

from fallsense import fdnn as fdnn_mod
from fallsense import kan as kan_mod
from fallsense.kan import KanConfig
from fallsense.pipeline import (
    collect_fall_segments,
    fit_frame_standardizer,
    frames_to_example,
    orient_and_frame,
)
from fallsense.sisfall import TrialId
from fallsense.streaming import (
    StreamError,
    stream_trial,
    write_events_csv,
)
from fallsense.synthetic import SyntheticSpec, generate_synthetic_trial


@pytest.fixture(scope="module")
def trained(tmp_path_factory, subject):
    """Small trained pair of checkpoints plus the trials that fed them."""
    out = tmp_path_factory.mktemp("ckpts")
    falls, walks = [], []
    for i in range(4):
        ann, _ = generate_synthetic_trial(
            SyntheticSpec(duration_s=6.0, fall_onset_s=2.0,
                          impact_s=2.0 + 0.5 + 0.05 * i),
            seed=100 + i,
            trial_id=TrialId(f"F{i + 1:02d}", "SA01", i % 5 + 1))
        falls.append(ann)
    for i in range(3):
        ann, _ = generate_synthetic_trial(
            SyntheticSpec(kind="walk", duration_s=6.0), seed=200 + i,
            trial_id=TrialId(f"D{i + 1:02d}", "SA01", i % 5 + 1))
        walks.append(ann)

    pairs = [(a, orient_and_frame(a, subject)) for a in falls + walks]
    frames = [f for _, f in pairs]
    stats = fit_frame_standardizer(frames)
    examples = [frames_to_example(f, stats) for f in frames]

    cfg = fdnn_mod.FdnnConfig(epochs=12, batch_size=4, dropout_rate=0.0,
                              learning_rate=3e-3, seed=0)
    params, _ = fdnn_mod.train(cfg, examples, examples)
    fdnn_path = out / "detector.ckpt"
    fdnn_mod.save_checkpoint(fdnn_path, params, cfg, stats)

    segments = collect_fall_segments(pairs)
    kan_model, _ = kan_mod.fit(KanConfig(epochs=3, seed=0),
                               segments[:3], segments[3:])
    kan_path = out / "impact.ckpt"
    kan_mod.save_checkpoint(kan_path, kan_model)

    return fdnn_path, kan_path, pairs, params, cfg, stats


class TestStreamTrial:
    def test_event_count_equals_sample_count(self, trained, subject):
        fdnn_path, kan_path, pairs, *_ = trained
        annotated, _ = pairs[0]
        events, report = stream_trial(fdnn_path, kan_path, annotated.trial,
                                      subject)
        assert len(events) == len(annotated.trial)
        assert report.count == len(annotated.trial)
        assert [e.index for e in events] == list(range(len(events)))

    def test_stream_matches_batch_forward_bitexact(self, trained, subject):
        fdnn_path, kan_path, pairs, params, cfg, stats = trained
        for annotated, frames in pairs[:3]:
            events, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                                     subject)
            example = frames_to_example(frames, stats)
            trace = fdnn_mod.predict_trace(params, cfg, example.static,
                                           example.sequence)
            streamed = np.array([e.p_falling for e in events])
            assert np.array_equal(streamed, trace.p_falling)

    def test_fast_and_realtime_identical(self, trained, subject):
        fdnn_path, kan_path, *_ = trained
        annotated, _ = generate_synthetic_trial(
            SyntheticSpec(duration_s=1.2, fall_onset_s=0.6, impact_s=1.0),
            seed=5)
        fast, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                               _subject(), mode="fast")
        real, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                               _subject(), mode="realtime")
        assert [(e.p_falling, e.decision, e.tti_ms) for e in fast] == \
            [(e.p_falling, e.decision, e.tti_ms) for e in real]

    def test_prefix_equivalence(self, trained, subject):
        # causality: streaming a prefix (past the init window) yields the
        # identical event prefix
        fdnn_path, kan_path, pairs, *_ = trained
        annotated, _ = pairs[1]
        full, _ = stream_trial(fdnn_path, kan_path, annotated.trial, subject)
        trial = annotated.trial
        cut = 700
        import dataclasses
        prefix_trial = dataclasses.replace(
            trial,
            accel_adxl345=trial.accel_adxl345[:cut],
            gyro_itg3200=trial.gyro_itg3200[:cut],
            accel_mma8451q=trial.accel_mma8451q[:cut],
            t=trial.t[:cut])
        prefix, _ = stream_trial(fdnn_path, kan_path, prefix_trial, subject)
        assert [(e.p_falling, e.decision, e.tti_ms) for e in prefix] == \
            [(e.p_falling, e.decision, e.tti_ms) for e in full[:cut]]

    def test_tti_present_iff_falling(self, trained, subject):
        fdnn_path, kan_path, pairs, *_ = trained
        annotated, _ = pairs[0]
        events, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                                 subject)
        for e in events:
            assert (e.tti_ms is not None) == e.decision
            if e.tti_ms is not None:
                assert e.tti_ms >= 0.0

    def test_all_background_trial_has_no_tti(self, trained, subject):
        fdnn_path, kan_path, pairs, *_ = trained
        walk_pairs = [(a, f) for a, f in pairs
                      if not a.trial_id.activity.startswith("F")]
        annotated, _ = walk_pairs[0]
        events, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                                 subject)
        assert all(e.tti_ms is None for e in events)

    def test_latency_report_consistency(self, trained, subject):
        fdnn_path, kan_path, pairs, *_ = trained
        annotated, _ = pairs[0]
        events, report = stream_trial(fdnn_path, kan_path, annotated.trial,
                                      subject, deadline_us=5000.0)
        lats = np.array([e.latency_us for e in events])
        assert report.p99_us <= report.max_us
        assert report.deadline_misses == int((lats > 5000.0).sum())
        assert report.mean_us == pytest.approx(lats.mean())

    def test_feature_mismatch_rejected(self, trained, subject, tmp_path):
        fdnn_path, kan_path, pairs, *_ = trained
        model = kan_mod.load_checkpoint(kan_path)
        model.feature_names = ("bogus",) * len(model.feature_names)
        bad = tmp_path / "bad.kan"
        kan_mod.save_checkpoint(bad, model)
        annotated, _ = pairs[0]
        with pytest.raises(StreamError, match="not in the frame"):
            stream_trial(fdnn_path, bad, annotated.trial, subject)

    def test_events_csv(self, trained, subject, tmp_path):
        fdnn_path, kan_path, pairs, *_ = trained
        annotated, _ = pairs[0]
        events, _ = stream_trial(fdnn_path, kan_path, annotated.trial,
                                 subject)
        p = tmp_path / "events.csv"
        write_events_csv(p, events)
        lines = p.read_text().splitlines()
        assert lines[0] == "index,p_falling,decision,tti_ms,latency_us"
        assert len(lines) == len(events) + 1


def _subject():
    from fallsense.sisfall import SubjectProfile
    return SubjectProfile(subject_id="SA01", age=30.0, height_cm=175.0,
                          weight_kg=70.0, gender=1.0)
