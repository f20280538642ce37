import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courttrack.court import indoor_court, outdoor_court
from courttrack.identity import (
    HIST_BINS,
    IdentityError,
    StartContext,
    assign_indoor_attributes,
    assign_outdoor_attributes,
    first_frame_positions,
    histogram_from_crop,
    histograms_from_manifest,
    js_divergence,
    load_crop_manifest,
    torso_histogram,
    tracklets_at_first_frame,
)
from courttrack.trackdata import (
    Detection,
    IdentityAttributes,
    JerseyPrediction,
    SequenceData,
)

COURT = indoor_court()


def delta_hist(bin_index):
    h = np.zeros(HIST_BINS)
    h[bin_index] = 1.0
    return h


class TestHistograms:
    def test_uniform_crop_single_bin(self):
        crop = np.full((8, 4, 3), 255, dtype=np.uint8)
        h = histogram_from_crop(crop)
        assert h.shape == (HIST_BINS,)
        assert h.sum() == pytest.approx(1.0)
        assert h[7 * 64 + 7 * 8 + 7] == 1.0

    def test_two_color_crop(self):
        crop = np.zeros((2, 2, 3), dtype=np.uint8)
        crop[0] = (255, 0, 0)  # two red pixels
        h = histogram_from_crop(crop)
        assert h[7 * 64] == 0.5
        assert h[0] == 0.5

    def test_quantization_boundary(self):
        crop = np.full((1, 1, 3), 31, dtype=np.uint8)
        assert histogram_from_crop(crop)[0] == 1.0
        crop = np.full((1, 1, 3), 32, dtype=np.uint8)
        assert histogram_from_crop(crop)[64 + 8 + 1] == 1.0

    def test_rejects_bad_shape(self):
        with pytest.raises(IdentityError):
            histogram_from_crop(np.zeros((4, 4), dtype=np.uint8))

    def test_torso_histogram_median(self):
        red = np.full((2, 2, 3), 255, dtype=np.uint8)
        red[..., 1:] = 0
        blue = np.zeros((2, 2, 3), dtype=np.uint8)
        blue[..., 2] = 255
        # Two red frames, one blue: median keeps red only.
        h = torso_histogram([(0, red), (1, red), (2, blue)])
        assert h[7 * 64] == 1.0

    def test_torso_histogram_first_100_frames(self):
        red = np.full((1, 1, 3), 255, dtype=np.uint8)
        blue = np.zeros((1, 1, 3), dtype=np.uint8)
        crops = [(f, red) for f in range(100)] + [(f, blue) for f in range(100, 300)]
        h = torso_histogram(crops)  # later blue crops must be ignored
        assert h[7 * 64 + 7 * 8 + 7] == 1.0

    def test_torso_histogram_empty(self):
        with pytest.raises(IdentityError):
            torso_histogram([])


class TestJsDivergence:
    def test_identical_zero(self):
        h = delta_hist(3)
        assert js_divergence(h, h) == 0.0

    def test_disjoint_is_ln2(self):
        assert js_divergence(delta_hist(0), delta_hist(1)) == pytest.approx(
            math.log(2.0)
        )

    def test_half_overlap_value(self):
        h1 = np.array([0.5, 0.5, 0.0, 0.0])
        h2 = np.array([0.5, 0.0, 0.5, 0.0])
        # Shared half contributes nothing; disjoint half contributes
        # 0.5 * ln 2.
        assert js_divergence(h1, h2) == pytest.approx(0.5 * math.log(2.0))

    def test_shape_mismatch(self):
        with pytest.raises(IdentityError):
            js_divergence(np.ones(4) / 4, np.ones(8) / 8)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_properties(self, seed):
        rng = np.random.default_rng(seed)
        h1 = rng.exponential(size=32)
        h2 = rng.exponential(size=32)
        h1[rng.random(32) < 0.3] = 0.0
        h2[rng.random(32) < 0.3] = 0.0
        if h1.sum() == 0 or h2.sum() == 0:
            return
        h1 /= h1.sum()
        h2 /= h2.sum()
        d = js_divergence(h1, h2)
        assert js_divergence(h2, h1) == pytest.approx(d, abs=1e-13)
        assert -1e-12 <= d <= math.log(2.0) + 1e-12


def indoor_layout():
    """Three clean offense/defense pairs (defender closer to the end line)."""
    return {
        1: (7.5, 3.0),  # top defense
        2: (7.5, 5.0),  # top offense
        3: (3.0, 2.0),  # left defense
        4: (3.5, 3.5),  # left offense
        5: (12.0, 2.0),  # right defense
        6: (11.5, 3.5),  # right offense
    }


class TestAssignIndoor:
    def test_canonical_layout(self):
        out = assign_indoor_attributes(indoor_layout(), COURT)
        expect = {
            1: ("defense", "top"),
            2: ("offense", "top"),
            3: ("defense", "left"),
            4: ("offense", "left"),
            5: ("defense", "right"),
            6: ("offense", "right"),
        }
        for tid, (team, pos) in expect.items():
            assert out[tid] == IdentityAttributes(team=team, initial_position=pos)

    def test_left_right_by_lateral_offset(self):
        # Mirror the layout: left/right labels must follow x, not IDs.
        mirrored = {tid: (COURT.width - x, y) for tid, (x, y) in indoor_layout().items()}
        out = assign_indoor_attributes(mirrored, COURT)
        assert out[3].initial_position == "right"
        assert out[5].initial_position == "left"
        assert out[1].initial_position == "top"

    def test_requires_six(self):
        with pytest.raises(IdentityError, match="6"):
            assign_indoor_attributes({1: (0.0, 0.0)}, COURT)

    def test_pairing_is_minimum_cost(self):
        # Interleaved x positions: naive nearest-neighbour chains would
        # pair wrongly; the global minimum pairs (1,2), (3,4), (5,6).
        positions = {
            1: (2.0, 2.0),
            2: (3.0, 4.0),
            3: (6.5, 2.0),
            4: (7.5, 4.0),
            5: (11.0, 2.0),
            6: (12.0, 4.0),
        }
        out = assign_indoor_attributes(positions, COURT)
        assert out[3].initial_position == out[4].initial_position == "top"
        assert out[1].initial_position == out[2].initial_position == "left"
        assert {out[1].team, out[2].team} == {"offense", "defense"}
        assert out[1].team == "defense"  # closer to the end line


def _outdoor_scene():
    court = outdoor_court()
    positions = {
        1: (7.5, 10.8),  # offense seed, at the check-ball spot
        2: (7.4, 10.0),  # marking defender
        3: (4.0, 8.0),  # offense teammate
        4: (11.0, 8.0),  # offense teammate
        5: (5.0, 6.0),  # defense
        6: (10.0, 6.0),  # defense
        9: (7.5, 1.0),  # referee, jersey recognition fails
    }
    jerseys = {
        tid: JerseyPrediction(tracklet_id=tid, number=10 + tid)
        for tid in (1, 2, 3, 4, 5, 6)
    }
    jerseys[9] = JerseyPrediction(tracklet_id=9, number=None)
    hists = {
        1: delta_hist(100),
        2: delta_hist(200),
        3: delta_hist(100),
        4: delta_hist(100),
        5: delta_hist(200),
        6: delta_hist(200),
        9: delta_hist(300),
    }
    return court, positions, jerseys, hists


class TestAssignOutdoor:
    def test_top_checkball(self):
        court, positions, jerseys, hists = _outdoor_scene()
        out = assign_outdoor_attributes(
            positions, jerseys, hists, StartContext.top_checkball(court)
        )
        assert 9 not in out  # referee dropped
        offense = {tid for tid, a in out.items() if a.team == "offense"}
        assert offense == {1, 3, 4}
        assert out[2].team == "defense"  # nearest neighbour of the seed
        assert out[1].jersey_number == 11

    def test_free_throw(self):
        court, positions, jerseys, hists = _outdoor_scene()
        # Shooter at the free-throw midpoint; no marking defender.
        positions[1] = (7.5, 5.9)
        out = assign_outdoor_attributes(
            positions, jerseys, hists, StartContext.free_throw(court)
        )
        offense = {tid for tid, a in out.items() if a.team == "offense"}
        assert offense == {1, 3, 4}

    def test_too_few_recognized_jerseys(self):
        court, positions, jerseys, hists = _outdoor_scene()
        jerseys[6] = JerseyPrediction(tracklet_id=6, number=None)
        with pytest.raises(IdentityError, match="jersey"):
            assign_outdoor_attributes(
                positions, jerseys, hists, StartContext.top_checkball(court)
            )

    def test_missing_histogram(self):
        court, positions, jerseys, hists = _outdoor_scene()
        del hists[4]
        with pytest.raises(IdentityError, match="histograms"):
            assign_outdoor_attributes(
                positions, jerseys, hists, StartContext.top_checkball(court)
            )

    def test_invalid_start_type(self):
        with pytest.raises(IdentityError):
            StartContext("jump_ball", (0.0, 0.0))


class TestPositionHelpers:
    def _seq(self):
        dets = (
            Detection(frame_id=0, tracklet_id=1, bbox=(0, 0, 1, 1), court_xy=(1.0, 1.0)),
            Detection(frame_id=0, tracklet_id=2, bbox=(0, 0, 1, 1), court_xy=(2.0, 2.0)),
            Detection(frame_id=5, tracklet_id=3, bbox=(0, 0, 1, 1), court_xy=(3.0, 3.0)),
        )
        return SequenceData(mode="drone", detections=dets)

    def test_first_frame_positions(self):
        assert first_frame_positions(self._seq()) == {
            1: (1.0, 1.0),
            2: (2.0, 2.0),
            3: (3.0, 3.0),
        }

    def test_tracklets_at_first_frame(self):
        # Tracklet 3 enters later and is excluded.
        assert tracklets_at_first_frame(self._seq()) == {
            1: (1.0, 1.0),
            2: (2.0, 2.0),
        }

    def test_missing_court_xy(self):
        s = SequenceData(
            mode="drone",
            detections=(
                Detection(frame_id=0, tracklet_id=1, bbox=(0, 0, 1, 1)),
            ),
        )
        with pytest.raises(IdentityError):
            first_frame_positions(s)


class TestCropManifest:
    def test_round_trip(self, tmp_path):
        from PIL import Image

        colors = {1: (255, 0, 0), 2: (0, 0, 255)}
        lines = ["tracklet_id,frame_id,path"]
        for tid, color in colors.items():
            for f in range(2):
                path = tmp_path / f"crop_{tid}_{f}.png"
                Image.new("RGB", (4, 8), color).save(path)
                lines.append(f"{tid},{f},{path}")
        manifest = load_crop_manifest(io.StringIO("\n".join(lines)))
        assert set(manifest) == {1, 2}
        hists = histograms_from_manifest(manifest)
        assert hists[1][7 * 64] == 1.0  # pure red
        assert hists[2][7] == 1.0  # pure blue
        assert js_divergence(hists[1], hists[2]) == pytest.approx(math.log(2.0))

    def test_bad_manifest_row(self):
        with pytest.raises(IdentityError, match="line 1"):
            load_crop_manifest(io.StringIO("1,2\n"))
