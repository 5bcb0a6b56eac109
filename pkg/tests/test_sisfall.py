import numpy as np
import pytest

from fallsense import sisfall
from fallsense.sisfall import (
    AnnotationError,
    CalibrationError,
    IntegrityError,
    IngestError,
    TrialId,
    TrialParseError,
    annotate_trial,
    calibrate,
    calibrate_trial,
    import_annotations,
    load_subjects,
    parse_trial_file,
    parse_trial_filename,
    read_annotation_spans,
    verify_corpus,
)

from conftest import make_trial_text


class TestTrialId:
    def test_parse_filename(self):
        tid = parse_trial_filename("F01_SA05_R03.txt")
        assert tid == TrialId("F01", "SA05", 3)
        assert str(tid) == "F01_SA05_R03"
        assert tid.is_fall

    def test_adl_code(self):
        assert not TrialId("D19", "SE15", 5).is_fall

    @pytest.mark.parametrize("bad", ["F16_SA01_R01", "F01_SB01_R01",
                                     "F01_SA01_R06", "F01_SA01_R00",
                                     "walk.txt"])
    def test_rejects_bad_ids(self, bad):
        with pytest.raises(IngestError):
            TrialId.parse(bad)


class TestParseTrialFile:
    def test_zero_row(self):
        records = parse_trial_file("0,0,0,0,0,0,0,0,0")
        assert records.shape == (1, 9)
        assert np.all(records == 0)

    def test_fifteen_second_trial(self):
        rows = np.arange(3000 * 9).reshape(3000, 9) % 100
        records = parse_trial_file(make_trial_text(rows))
        assert records.shape[0] == 3000  # 15 s at 200 Hz

    def test_trailing_semicolon_and_blank_lines(self):
        records = parse_trial_file("1,2,3,4,5,6,7,8,9;\n\n9,8,7,6,5,4,3,2,1;\n")
        assert records.shape == (2, 9)

    def test_malformed_field_reports_line(self):
        with pytest.raises(TrialParseError, match="line 2"):
            parse_trial_file("1,2,3,4,5,6,7,8,9\n1,2,three,4,5,6,7,8,9")

    def test_wrong_field_count(self):
        with pytest.raises(TrialParseError, match="line 1"):
            parse_trial_file("1,2,3")

    def test_empty_file(self):
        with pytest.raises(TrialParseError, match="empty"):
            parse_trial_file("")


class TestCalibrate:
    def test_zero_counts_map_to_zero(self):
        s = calibrate(np.zeros(9, dtype=int))
        assert np.all(s.accel_adxl345 == 0)
        assert np.all(s.gyro_itg3200 == 0)
        assert np.all(s.accel_mma8451q == 0)

    def test_adxl345_scale(self):
        # +/-16 g at 13 bits: 256 counts = 1 g
        s = calibrate(np.array([256, 0, 0, 0, 0, 0, 0, 0, 0]))
        assert s.accel_adxl345[0] == pytest.approx(1.0)

    def test_itg3200_scale(self):
        # +/-2000 deg/s at 16 bits: 16384 counts = 1000 deg/s
        s = calibrate(np.array([0, 0, 0, 16384, 0, 0, 0, 0, 0]))
        assert s.gyro_itg3200[0] == pytest.approx(1000.0)

    def test_time_from_index(self):
        assert calibrate(np.zeros(9, dtype=int), index=7).t == pytest.approx(
            7 / 200.0)

    def test_linear_in_counts(self):
        r = np.array([100, -50, 3, 1000, -200, 7, 40, -40, 11])
        a = calibrate(r)
        b = calibrate(2 * r)
        assert np.allclose(b.accel_adxl345, 2 * a.accel_adxl345)
        assert np.allclose(b.gyro_itg3200, 2 * a.gyro_itg3200)
        assert np.allclose(b.accel_mma8451q, 2 * a.accel_mma8451q)

    def test_out_of_range_counts(self):
        bad = np.zeros(9, dtype=int)
        bad[0] = 5000  # beyond signed 13-bit
        with pytest.raises(CalibrationError):
            calibrate(bad)

    def test_parse_then_calibrate_preserves_count(self):
        rows = np.arange(600 * 9).reshape(600, 9) % 64
        records = parse_trial_file(make_trial_text(rows))
        trial = calibrate_trial(records, trial_id=TrialId("D01", "SA01", 1))
        assert len(trial) == records.shape[0]
        assert trial.t[1] - trial.t[0] == pytest.approx(0.005)


class TestSubjects:
    CSV = (
        "subject_id,age,height_cm,weight_kg,gender\n"
        "SA01,30,175,70,M\n"
        "SA02,25,160,55,F\n"
    )

    def test_load_and_gender_encoding(self, tmp_path):
        p = tmp_path / "subjects.csv"
        p.write_text(self.CSV)
        profiles = load_subjects(p)
        assert len(profiles) == 2
        assert profiles["SA01"].gender == 1.0
        assert profiles["SA02"].gender == 0.0
        assert np.allclose(profiles["SA01"].static_vector(),
                           [30, 175, 70, 1.0])

    def test_duplicate_subject(self, tmp_path):
        p = tmp_path / "subjects.csv"
        p.write_text(self.CSV + "SA01,31,175,70,M\n")
        with pytest.raises(IntegrityError, match="duplicate"):
            load_subjects(p)

    def test_missing_profile(self, tmp_path):
        p = tmp_path / "subjects.csv"
        p.write_text(self.CSV)
        profiles = load_subjects(p)
        with pytest.raises(IntegrityError, match="no subject profile"):
            sisfall.require_profile(profiles, TrialId("F01", "SA03", 1))

    def test_full_roster(self, tmp_path):
        rows = ["subject_id,age,height_cm,weight_kg,gender"]
        for i, sid in enumerate(
                sisfall.ADULT_SUBJECTS + sisfall.ELDERLY_SUBJECTS):
            rows.append(f"{sid},{25 + i},170,70,{'M' if i % 2 else 'F'}")
        p = tmp_path / "subjects.csv"
        p.write_text("\n".join(rows))
        assert len(load_subjects(p)) == 38


def _trial(n=3000, activity="F01"):
    records = np.zeros((n, 9), dtype=np.int32)
    return calibrate_trial(records, trial_id=TrialId(activity, "SA01", 1))


class TestAnnotations:
    def test_span_arithmetic(self):
        annotated = annotate_trial(_trial(), (1000, 1200))
        assert int((annotated.labels == sisfall.FALL).sum()) == 201
        assert int((annotated.labels == sisfall.BACKGROUND).sum()) == 2799
        assert annotated.fall_span() == (1000, 1200)

    def test_no_span_all_background(self):
        annotated = annotate_trial(_trial(), None)
        assert np.all(annotated.labels == sisfall.BACKGROUND)
        assert annotated.fall_span() is None

    def test_out_of_range_span(self):
        with pytest.raises(AnnotationError, match="outside"):
            annotate_trial(_trial(), (2900, 3100))

    def test_span_on_adl_trial(self):
        with pytest.raises(AnnotationError, match="ADL"):
            annotate_trial(_trial(activity="D05"), (10, 20))

    def test_multiple_spans_rejected(self, tmp_path):
        p = tmp_path / "ann.csv"
        p.write_text("trial_id,start_index,end_index\n"
                     "F01_SA01_R01,100,200\n"
                     "F01_SA01_R01,300,400\n")
        with pytest.raises(AnnotationError, match="multiple"):
            read_annotation_spans(p)

    def test_import_annotations(self, tmp_path):
        p = tmp_path / "ann.csv"
        p.write_text("trial_id,start_index,end_index\nF01_SA01_R01,5,9\n")
        annotated = import_annotations(p, _trial(n=20))
        assert annotated.fall_span() == (5, 9)
        assert len(annotated.labels) == 20

    def test_labels_align_with_samples(self):
        annotated = annotate_trial(_trial(n=50), (3, 7))
        assert len(annotated.labels) == len(annotated.trial)


def _write_trial_file(path, n=10):
    rows = np.zeros((n, 9), dtype=int)
    path.write_text(make_trial_text(rows))


class TestVerifyCorpus:
    def _build(self, root):
        for subject, activities in [("SA01", ["F01", "D01"]),
                                    ("SE01", ["D01"])]:
            d = root / subject
            d.mkdir()
            for act in activities:
                for rep in (1, 2, 3, 4, 5):
                    _write_trial_file(d / f"{act}_{subject}_R{rep:02d}.txt")

    def test_counts(self, tmp_path):
        self._build(tmp_path)
        s = verify_corpus(tmp_path)
        assert s.fall_trials == 5
        assert s.adl_trials == 10
        assert s.total_trials == 15
        assert s.per_subject == {"SA01": 10, "SE01": 5}
        assert s.per_activity == {"F01": 5, "D01": 10}
        assert not s.missing

    def test_empty_root(self, tmp_path):
        s = verify_corpus(tmp_path / "nowhere")
        assert s.total_trials == 0
        assert s.warnings

    def test_missing_repetitions_warn(self, tmp_path):
        d = tmp_path / "SE02"
        d.mkdir()
        _write_trial_file(d / "D01_SE02_R01.txt")
        s = verify_corpus(tmp_path)
        assert s.adl_trials == 1
        assert any("SE02" in w for w in s.warnings)
        assert "D01_SE02_R02" in s.missing

    def test_extra_files_flagged(self, tmp_path):
        d = tmp_path / "SA01"
        d.mkdir()
        (d / "notes.txt").write_text("hello")
        _write_trial_file(d / "F01_SA01_R01.txt")
        s = verify_corpus(tmp_path)
        assert any("notes.txt" in e for e in s.extra_files)

    def test_unreadable_listed_not_fatal(self, tmp_path):
        d = tmp_path / "SA01"
        d.mkdir()
        (d / "F01_SA01_R01.txt").write_text("")  # empty = unreadable
        _write_trial_file(d / "F01_SA01_R02.txt")
        s = verify_corpus(tmp_path)
        assert s.fall_trials == 1
        assert len(s.unreadable) == 1

    def test_deterministic(self, tmp_path):
        self._build(tmp_path)
        assert verify_corpus(tmp_path) == verify_corpus(tmp_path)
