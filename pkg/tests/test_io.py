import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmts.core import BBox, f32
from rmts.errors import InputError
from rmts.io import (
    GmcTable,
    SequenceBundle,
    parse_gmc_file,
    parse_mot_detections,
    parse_mot_labels,
    parse_visdrone_annotations,
    write_results,
)
from rmts.tracker import FrameOutput, OutputTrack


class TestParseMotDetections:
    def test_single_line(self):
        frames = parse_mot_detections("1,-1,10,20,30,40,0.9,-1,-1,-1\n")
        assert list(frames) == [1]
        d = frames[1][0]
        assert d.bbox == BBox(10, 20, 30, 40)
        assert d.score == pytest.approx(0.9, abs=1e-7)

    def test_empty_file(self):
        assert parse_mot_detections("") == {}
        assert parse_mot_detections("\n\n") == {}

    def test_order_preserved_within_frame(self):
        text = "1,-1,0,0,5,5,0.5,-1,-1,-1\n1,-1,50,0,5,5,0.7,-1,-1,-1\n"
        frames = parse_mot_detections(text)
        assert [d.bbox.left for d in frames[1]] == [0.0, 50.0]

    def test_conf_clamped(self):
        frames = parse_mot_detections("1,-1,0,0,5,5,7.5,-1,-1,-1\n")
        assert frames[1][0].score == 1.0

    def test_malformed_line_names_line_number(self):
        text = "1,-1,0,0,5,5,0.5,-1,-1,-1\n2,-1,oops,0,5,5,0.5,-1,-1,-1\n"
        with pytest.raises(InputError, match="line 2"):
            parse_mot_detections(text)

    def test_wrong_field_count(self):
        with pytest.raises(InputError, match="line 1"):
            parse_mot_detections("1,-1,0,0,5,5,0.5\n")

    def test_crlf_accepted(self):
        frames = parse_mot_detections("1,-1,1,2,3,4,0.5,-1,-1,-1\r\n")
        assert frames[1][0].bbox == BBox(1, 2, 3, 4)


class TestParseVisdrone:
    def test_basic_mapping(self):
        got = parse_visdrone_annotations("1,5,100,100,50,60,1,4,0,0\n")
        item = got.frames[1][0]
        assert (item.identity, item.class_id) == (5, 4)
        assert item.bbox == BBox(100, 100, 50, 60)

    def test_ignored_region_excluded(self):
        assert parse_visdrone_annotations("1,0,0,0,10,10,0,0,0,0\n").frames == {}

    def test_excluded_categories(self):
        text = "1,1,0,0,10,10,1,0,0,0\n1,2,0,0,10,10,1,11,0,0\n1,3,0,0,10,10,1,4,0,0\n"
        got = parse_visdrone_annotations(text)
        assert [it.identity for it in got.frames[1]] == [3]

    def test_duplicate_identity_rejected(self):
        text = "1,5,0,0,10,10,1,4,0,0\n1,5,9,9,10,10,1,4,0,0\n"
        with pytest.raises(InputError, match="duplicate"):
            parse_visdrone_annotations(text)


class TestParseMotLabels:
    def test_result_file(self):
        got = parse_mot_labels("1,7,10,20,30,40,0.9,-1,-1,-1\n")
        assert got.frames[1][0].identity == 7
        assert got.frames[1][0].class_id == 0  # -1 treated as unlabelled

    def test_gt_flag_rows_dropped(self):
        text = "1,1,0,0,9,9,1,4,1\n1,2,0,0,9,9,0,4,1\n"
        got = parse_mot_labels(text, source="gt", treat_conf_as_flag=True)
        assert [it.identity for it in got.frames[1]] == [1]
        assert got.frames[1][0].class_id == 4


class TestParseGmc:
    def test_identity_and_translation(self):
        table = parse_gmc_file("1, 1, 0, 0, 1, 0, 0\n2, 1, 0, 0, 1, 5, 0\n")
        assert table.get(1).is_identity()
        t = table.get(2)
        assert np.array_equal(t.translation, [5.0, 0.0])

    def test_missing_frame_defaults_to_identity(self):
        table = parse_gmc_file("1, 1, 0, 0, 1, 0, 0\n")
        assert table.get(3).is_identity()

    def test_tab_separated(self):
        table = parse_gmc_file("1\t1\t0\t0\t1\t2\t3\n")
        assert np.array_equal(table.get(1).translation, [2.0, 3.0])

    def test_singular_matrix_names_frame(self):
        with pytest.raises(InputError, match="frame 4"):
            parse_gmc_file("4, 0, 0, 0, 0, 0, 0\n")

    def test_duplicate_frame_rejected(self):
        with pytest.raises(InputError, match="duplicate"):
            parse_gmc_file("1,1,0,0,1,0,0\n1,1,0,0,1,1,1\n")


class TestWriteResults:
    def test_exact_line_format(self):
        out = FrameOutput(1, (OutputTrack(1, BBox(10, 20, 30, 40), 0.9, 0),))
        assert write_results([out]) == "1,1,10.00,20.00,30.00,40.00,0.900000,-1,-1,-1\n"

    def test_empty(self):
        assert write_results([]) == ""

    def test_sorted_by_frame_then_id(self):
        outs = [
            FrameOutput(2, (OutputTrack(5, BBox(0, 0, 1, 1), 0.5, 0),
                            OutputTrack(2, BBox(0, 0, 1, 1), 0.5, 0))),
            FrameOutput(1, (OutputTrack(9, BBox(0, 0, 1, 1), 0.5, 0),)),
        ]
        lines = write_results(outs).strip().split("\n")
        heads = [tuple(map(int, ln.split(",")[:2])) for ln in lines]
        assert heads == [(1, 9), (2, 2), (2, 5)]

    def test_duplicate_id_in_frame_rejected(self):
        out = FrameOutput(1, (OutputTrack(1, BBox(0, 0, 1, 1), 0.5, 0),
                              OutputTrack(1, BBox(2, 2, 1, 1), 0.5, 0)))
        with pytest.raises(InputError):
            write_results([out])

    @settings(max_examples=60)
    @given(
        frame=st.integers(1, 500),
        tid=st.integers(1, 10_000),
        left=st.floats(-500, 5000),
        top=st.floats(-500, 5000),
        w=st.floats(0, 800),
        h=st.floats(0, 800),
        score=st.floats(0, 1),
    )
    def test_round_trip_through_parser(self, frame, tid, left, top, w, h, score):
        out = FrameOutput(frame, (OutputTrack(tid, BBox(left, top, w, h),
                                              float(score), 0),))
        text = write_results([out])
        parsed = parse_mot_labels(text)
        item = parsed.frames[frame][0]
        assert item.identity == tid
        assert item.bbox.left == pytest.approx(f32(left), abs=0.006)
        assert item.bbox.top == pytest.approx(f32(top), abs=0.006)
        assert item.bbox.width == pytest.approx(f32(w), abs=0.006)
        assert item.bbox.height == pytest.approx(f32(h), abs=0.006)


class TestSequenceBundle:
    def test_frame_count_derived(self):
        dets = parse_mot_detections("3,-1,0,0,5,5,0.5,-1,-1,-1\n")
        bundle = SequenceBundle(name="s", detections=dets)
        assert bundle.frame_count == 3

    def test_detections_beyond_declared_count_rejected(self):
        dets = parse_mot_detections("3,-1,0,0,5,5,0.5,-1,-1,-1\n")
        with pytest.raises(InputError):
            SequenceBundle(name="s", detections=dets, frame_count=2)
