import io
from datetime import datetime, timedelta

import numpy as np
import pytest

from stormcast.errors import FormatError, InsufficientDataError, ValidationError
from stormcast.features import FEATURE_NAMES, MSWS_INDEX, FeatureFrame
from stormcast.ingest import CycloneTrack, RawFix
from stormcast.windowing import (
    FoldPlan,
    WindowSample,
    WindowSpec,
    build_windows,
    count_windows,
    holdout_by_name,
    kfold_split,
    read_window_file,
    stack_windows,
    window_count,
    write_window_file,
)


def brute_force_count(length, t1, t2):
    """Oracle: enumerate every start index and keep the ones that fit."""
    count = 0
    for start in range(length + 1):
        if start + t1 + t2 <= length:
            count += 1
    return count


def scaled_frame(length, storm="A1", msws=None):
    rng = np.random.default_rng(hash(storm) % 2**32)
    values = rng.uniform(-1.0, 1.0, size=(length, len(FEATURE_NAMES)))
    values[:, MSWS_INDEX] = np.arange(length, dtype=np.float64) if msws is None else msws
    timestamps = tuple(datetime(2020, 1, 1) + timedelta(hours=3 * i) for i in range(length))
    return FeatureFrame(
        storm_id=storm, timestamps=timestamps, values=values, scaled=True
    )


def dummy_track(storm, length):
    fixes = tuple(
        RawFix(
            storm_id=storm,
            timestamp=datetime(2020, 1, 1) + timedelta(hours=3 * i),
            lat=10.0,
            lon=80.0,
            ecp=1000.0,
            msws=30.0,
        )
        for i in range(length)
    )
    return CycloneTrack(storm_id=storm, fixes=fixes, name=storm)


class TestBuildWindows:
    def test_counts_for_simple_cases(self):
        assert len(build_windows(scaled_frame(10), WindowSpec(4, 1))) == 6
        assert build_windows(scaled_frame(5), WindowSpec(4, 4)) == []

    def test_largest_storm_case(self):
        # longest observed storm: 90 fixes; t1=12, t2=24
        spec = WindowSpec(12, 24)
        samples = build_windows(scaled_frame(90), spec)
        assert len(samples) == brute_force_count(90, 12, 24) == 55

    def test_window_contents_are_contiguous(self):
        frame = scaled_frame(12)
        spec = WindowSpec(3, 2)
        for sample in build_windows(frame, spec):
            np.testing.assert_array_equal(
                sample.input, frame.values[sample.start : sample.start + 3]
            )
            np.testing.assert_array_equal(
                sample.target,
                frame.values[sample.start + 3 : sample.start + 5, MSWS_INDEX],
            )

    def test_targets_reconstruct_msws_series(self):
        # overlapped windows must agree with the source series everywhere
        frame = scaled_frame(20)
        spec = WindowSpec(4, 3)
        rebuilt = {}
        for sample in build_windows(frame, spec):
            for j, value in enumerate(sample.target):
                idx = sample.start + spec.t1 + j
                if idx in rebuilt:
                    assert rebuilt[idx] == value
                rebuilt[idx] = value
        for idx, value in rebuilt.items():
            assert value == frame.values[idx, MSWS_INDEX]

    def test_unscaled_frame_rejected(self):
        frame = scaled_frame(10)
        raw = FeatureFrame(
            storm_id=frame.storm_id,
            timestamps=frame.timestamps,
            values=frame.values,
            scaled=False,
        )
        with pytest.raises(ValidationError):
            build_windows(raw, WindowSpec(4, 1))


class TestCountWindows:
    def test_two_storm_example(self):
        tracks = [dummy_track("A", 10), dummy_track("B", 4)]
        assert count_windows(tracks, WindowSpec(4, 1)) == (6, 1)

    def test_empty_set(self):
        assert count_windows([], WindowSpec(4, 1)) == (0, 0)

    def test_monotone_in_t2(self):
        tracks = [dummy_track(f"S{i}", 5 + 3 * i) for i in range(6)]
        previous = None
        for t2 in range(1, 8):
            total, _ = count_windows(tracks, WindowSpec(4, t2))
            if previous is not None:
                assert total <= previous
            previous = total

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            lengths = rng.integers(1, 40, size=rng.integers(1, 8))
            t1 = int(rng.integers(1, 8))
            t2 = int(rng.integers(1, 8))
            tracks = [dummy_track(f"S{i}", int(n)) for i, n in enumerate(lengths)]
            total, contributing = count_windows(tracks, WindowSpec(t1, t2))
            want_total = sum(brute_force_count(int(n), t1, t2) for n in lengths)
            want_contrib = sum(1 for n in lengths if brute_force_count(int(n), t1, t2) > 0)
            assert (total, contributing) == (want_total, want_contrib)

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            WindowSpec(0, 1)
        with pytest.raises(ValueError):
            WindowSpec(4, 0)


class TestKfold:
    def test_341_storms_5_folds(self):
        ids = [f"S{i:03d}" for i in range(341)]
        plan = kfold_split(ids, 5, seed=1)
        sizes = sorted(len(plan.fold_members(f)) for f in range(5))
        assert sizes == [68, 68, 68, 68, 69]

    def test_one_storm_per_fold(self):
        plan = kfold_split(["A", "B", "C", "D", "E"], 5, seed=0)
        assert all(len(plan.fold_members(f)) == 1 for f in range(5))

    def test_determinism(self):
        ids = [f"S{i}" for i in range(23)]
        assert kfold_split(ids, 4, seed=9) == kfold_split(ids, 4, seed=9)

    def test_input_order_does_not_matter(self):
        ids = [f"S{i}" for i in range(23)]
        shuffled = list(reversed(ids))
        assert kfold_split(ids, 4, seed=9) == kfold_split(shuffled, 4, seed=9)

    def test_partition_properties(self):
        rng = np.random.default_rng(11)
        for k in (2, 3, 7):
            for seed in (0, 1, 99):
                n = int(rng.integers(k, 60))
                ids = [f"S{i}" for i in range(n)]
                plan = kfold_split(ids, k, seed)
                folds = [set(plan.fold_members(f)) for f in range(k)]
                assert set().union(*folds) == set(ids)
                for a in range(k):
                    for b in range(a + 1, k):
                        assert not folds[a] & folds[b]
                sizes = sorted(len(f) for f in folds)
                assert sizes[-1] - sizes[0] <= 1

    def test_no_storm_in_both_train_and_val(self):
        plan = kfold_split([f"S{i}" for i in range(20)], 4, seed=2)
        for fold in range(4):
            assert not set(plan.fold_members(fold)) & set(plan.training_members(fold))

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            kfold_split(["A", "B"], 3, seed=0)
        with pytest.raises(ValueError):
            kfold_split(["A", "B"], 1, seed=0)
        with pytest.raises(ValueError):
            kfold_split(["A", "A", "B"], 2, seed=0)


class TestHoldout:
    def test_matches_are_case_insensitive(self):
        tracks = [dummy_track("1", 5), dummy_track("2", 5), dummy_track("3", 5)]
        tracks[0] = CycloneTrack("1", tracks[0].fixes, name="Vayu")
        tracks[1] = CycloneTrack("2", tracks[1].fixes, name="FANI")
        remaining, holdout, unmatched = holdout_by_name(tracks, ["VAYU", "fani"])
        assert [t.storm_id for t in holdout] == ["1", "2"]
        assert [t.storm_id for t in remaining] == ["3"]
        assert unmatched == []

    def test_unmatched_name_is_reported_not_fatal(self):
        tracks = [dummy_track("1", 5)]
        remaining, holdout, unmatched = holdout_by_name(tracks, ["XYZ"])
        assert holdout == []
        assert len(remaining) == 1
        assert unmatched == ["XYZ"]

    def test_empty_track_set(self):
        assert holdout_by_name([], ["VAYU"]) == ([], [], ["VAYU"])


class TestWindowFile:
    def test_round_trip(self, tmp_path):
        spec = WindowSpec(4, 2)
        samples = build_windows(scaled_frame(12, storm="RT"), spec)
        path = tmp_path / "windows.bin"
        write_window_file(path, samples, spec)
        loaded, loaded_spec = read_window_file(path)
        assert loaded_spec == spec
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert (a.storm_id, a.start) == (b.storm_id, b.start)
            # payload is float32: values must match after the same cast
            np.testing.assert_array_equal(a.input.astype(np.float32), b.input.astype(np.float32))
            np.testing.assert_array_equal(a.target.astype(np.float32), b.target.astype(np.float32))

    def test_write_read_write_is_byte_identical(self, tmp_path):
        spec = WindowSpec(3, 1)
        samples = build_windows(scaled_frame(9, storm="RT2"), spec)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_window_file(p1, samples, spec)
        loaded, _ = read_window_file(p1)
        write_window_file(p2, loaded, spec)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError, match="magic"):
            read_window_file(path)

    def test_header_carries_spec(self, tmp_path):
        import struct

        spec = WindowSpec(5, 3)
        path = tmp_path / "w.bin"
        write_window_file(path, build_windows(scaled_frame(10, storm="H"), spec), spec)
        blob = path.read_bytes()
        assert blob[:4] == b"TCWD"
        version, t1, t2, nf, n = struct.unpack_from("<5I", blob, 4)
        assert (version, t1, t2, nf, n) == (1, 5, 3, 7, 3)


def test_stack_windows_shapes():
    spec = WindowSpec(4, 2)
    samples = build_windows(scaled_frame(10), spec)
    x, y = stack_windows(samples)
    assert x.shape == (5, 4, 7)
    assert y.shape == (5, 2)
    with pytest.raises(InsufficientDataError):
        stack_windows([])
