from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stormcast.errors import DegenerateFeatureError, ValidationError
from stormcast.features import (
    FEATURE_NAMES,
    GRADE_EDGES,
    MSWS_INDEX,
    SCALED_FEATURES,
    FeatureFrame,
    ScalerParams,
    apply_scaler,
    build_frame,
    classify_grade,
    derive_motion_features,
    fit_scaler,
    invert_scaler,
    load_scaler,
    save_scaler,
    scale_value,
    unscale_value,
)
from stormcast.geo import haversine_distance
from stormcast.ingest import CycloneTrack, RawFix


def track_from_positions(positions, storm="A1", msws=None):
    fixes = tuple(
        RawFix(
            storm_id=storm,
            timestamp=datetime(2020, 1, 1) + timedelta(hours=3 * i),
            lat=lat,
            lon=lon,
            ecp=1000.0 - i,
            msws=30.0 if msws is None else msws[i],
        )
        for i, (lat, lon) in enumerate(positions)
    )
    return CycloneTrack(storm_id=storm, fixes=fixes)


def frame_with(storm="A1", lat=(5.0, 25.0), **overrides):
    """Two-row unscaled frame with easy-to-reason values."""
    n = len(lat)
    values = np.zeros((n, len(FEATURE_NAMES)))
    defaults = {
        "lat": lat,
        "lon": (80.0, 85.0),
        "msws": (30.0, 40.0),
        "ecp": (1000.0, 990.0),
        "distance": (0.0, 50.0),
        "direction": (10.0, 350.0),
        "sst": (28.0, 29.0),
    }
    defaults.update(overrides)
    for name, column in defaults.items():
        values[:, FEATURE_NAMES.index(name)] = column
    timestamps = tuple(datetime(2020, 1, 1) + timedelta(hours=3 * i) for i in range(n))
    return FeatureFrame(storm_id=storm, timestamps=timestamps, values=values)


class TestMotion:
    def test_stationary_track(self):
        track = track_from_positions([(10.0, 80.0)] * 3)
        motion = derive_motion_features(track)
        assert list(motion[:, 0]) == [0.0, 0.0, 0.0]
        assert list(motion[:, 1]) == [0.0, 0.0, 0.0]

    def test_due_north_track(self):
        positions = [(10.0 + i, 80.0) for i in range(4)]
        track = track_from_positions(positions)
        motion = derive_motion_features(track)
        # oracle: per-step haversine distances, bearing 0 by symmetry
        for i in range(1, 4):
            assert motion[i, 0] == pytest.approx(
                haversine_distance(positions[i - 1], positions[i]), abs=1e-9
            )
            assert motion[i, 1] == pytest.approx(0.0, abs=1e-9)
        assert motion[0, 0] == 0.0
        assert motion[0, 1] == motion[1, 1]  # first fix borrows the next bearing

    def test_single_fix_defaults(self):
        track = track_from_positions([(10.0, 80.0)])
        motion = derive_motion_features(track)
        assert motion.shape == (1, 2)
        assert motion[0, 0] == 0.0 and motion[0, 1] == 0.0

    def test_length_matches_track(self):
        rng = np.random.default_rng(5)
        for n in (1, 2, 5, 17):
            positions = [(10.0 + rng.uniform(-1, 1), 80.0 + rng.uniform(-1, 1)) for _ in range(n)]
            track = track_from_positions(positions)
            assert derive_motion_features(track).shape == (n, 2)

    def test_incomplete_track_rejected(self):
        track = CycloneTrack(
            storm_id="A1",
            fixes=(
                RawFix("A1", datetime(2020, 1, 1), lat=None, lon=80.0, ecp=1000.0, msws=30.0),
            ),
        )
        with pytest.raises(ValidationError):
            derive_motion_features(track)


class TestScaler:
    def test_fit_min_max(self):
        params = fit_scaler([frame_with(lat=(5.0, 25.0))])
        i = SCALED_FEATURES.index("lat")
        assert params.mins[i] == 5.0
        assert params.maxs[i] == 25.0

    def test_constant_feature_rejected(self):
        frame = frame_with(ecp=(1000.0, 1000.0))
        with pytest.raises(DegenerateFeatureError, match="ecp"):
            fit_scaler([frame])

    def test_union_across_frames(self):
        params = fit_scaler([frame_with(lat=(5.0, 10.0)), frame_with(lat=(8.0, 20.0))])
        i = SCALED_FEATURES.index("lat")
        assert (params.mins[i], params.maxs[i]) == (5.0, 20.0)

    def test_endpoints_map_exactly(self):
        frame = frame_with()
        params = fit_scaler([frame])
        scaled = apply_scaler(params, frame)
        for i, name in enumerate(FEATURE_NAMES):
            if name == "msws":
                continue
            column = scaled.values[:, i]
            assert column.min() == -1.0
            assert column.max() == 1.0

    def test_midpoint_maps_to_zero(self):
        assert scale_value(
            ScalerParams(mins=np.full(6, 0.0), maxs=np.full(6, 10.0)), "lat", 5.0
        ) == pytest.approx(0.0, abs=1e-15)

    def test_known_value(self):
        # min 10, max 90, x 30 -> -1 + (2/80)*20 = -0.5
        params = ScalerParams(mins=np.full(6, 10.0), maxs=np.full(6, 90.0))
        assert scale_value(params, "ecp", 30.0) == pytest.approx(-0.5, abs=1e-12)

    def test_msws_passthrough(self):
        frame = frame_with()
        scaled = apply_scaler(fit_scaler([frame]), frame)
        assert list(scaled.values[:, MSWS_INDEX]) == list(frame.values[:, MSWS_INDEX])

    def test_out_of_range_flagged_not_rejected(self):
        fit_frame = frame_with(lat=(5.0, 25.0))
        params = fit_scaler([fit_frame])
        wild = frame_with(lat=(4.0, 30.0))
        scaled = apply_scaler(params, wild)
        assert scaled.out_of_range == 2
        i = FEATURE_NAMES.index("lat")
        assert scaled.values[0, i] < -1.0 and scaled.values[1, i] > 1.0

    def test_invert_is_exact_inverse(self):
        frame = frame_with()
        params = fit_scaler([frame])
        back = invert_scaler(params, apply_scaler(params, frame))
        np.testing.assert_allclose(back.values, frame.values, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        lo=st.floats(min_value=-1000, max_value=999, allow_nan=False),
        width=st.floats(min_value=1e-3, max_value=2000),
        frac=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_round_trip_property(self, lo, width, frac):
        params = ScalerParams(mins=np.full(6, lo), maxs=np.full(6, lo + width))
        x = lo + frac * width
        y = scale_value(params, "sst", x)
        assert -1.0 - 1e-12 <= y <= 1.0 + 1e-12
        assert unscale_value(params, "sst", y) == pytest.approx(x, abs=1e-9)

    def test_double_apply_rejected(self):
        frame = frame_with()
        params = fit_scaler([frame])
        with pytest.raises(ValidationError):
            apply_scaler(params, apply_scaler(params, frame))

    def test_json_round_trip(self, tmp_path):
        params = fit_scaler([frame_with()])
        path = tmp_path / "scaler.json"
        save_scaler(params, path)
        loaded = load_scaler(path)
        np.testing.assert_array_equal(loaded.mins, params.mins)
        np.testing.assert_array_equal(loaded.maxs, params.maxs)
        assert (loaded.a, loaded.b) == (params.a, params.b)


class TestGrade:
    @pytest.mark.parametrize(
        "msws,grade",
        [
            (0.0, 0),
            (16.0, 0),
            (16.999, 0),
            (17.0, 1),
            (27.0, 1),
            (27.5, 1),
            (28.0, 2),
            (33.0, 2),
            (34.0, 3),
            (47.0, 3),
            (48.0, 4),
            (63.0, 4),
            (63.5, 4),
            (64.0, 5),
            (89.0, 5),
            (90.0, 6),
            (119.0, 6),
            (120.0, 7),
            (200.0, 7),
        ],
    )
    def test_bands(self, msws, grade):
        assert classify_grade(msws) == grade

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            classify_grade(-1.0)
        with pytest.raises(ValueError):
            classify_grade(float("nan"))

    def test_monotone(self):
        values = np.linspace(0.0, 150.0, 1501)
        grades = [classify_grade(v) for v in values]
        assert grades == sorted(grades)
        assert set(grades) == set(range(8))

    def test_every_edge_starts_its_band(self):
        for band, edge in enumerate(GRADE_EDGES, start=1):
            assert classify_grade(edge) == band
            assert classify_grade(edge - 1e-9) == band - 1


class TestBuildFrame:
    def test_frame_assembles_all_features(self):
        from stormcast.synthetic import make_sst_grid

        grid = make_sst_grid(seed=0)
        positions = [(10.0 + 0.3 * i, 80.0 + 0.2 * i) for i in range(5)]
        track = track_from_positions(positions)
        frame = build_frame(track, grid)
        assert len(frame) == 5
        assert not frame.scaled
        assert frame.values[0, FEATURE_NAMES.index("lat")] == 10.0
        assert frame.values[0, FEATURE_NAMES.index("distance")] == 0.0
        assert np.all(np.isfinite(frame.values))

    def test_frame_matches_track_values(self):
        from stormcast.synthetic import make_benchmark

        tracks, grid = make_benchmark(2, seed=3)
        frame = build_frame(tracks[0], grid)
        np.testing.assert_array_equal(
            frame.values[:, MSWS_INDEX], [f.msws for f in tracks[0].fixes]
        )
