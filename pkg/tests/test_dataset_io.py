import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from vsod.dataset_io import (
    DataError,
    FixationLog,
    FrameSequence,
    list_videos,
    load_fixations,
    load_object_masks,
    load_video,
    read_label_map,
    read_saliency_map,
    resize_max_side,
    suppress_small_regions,
    to_uint8,
    write_fixations,
    write_label_map,
    write_saliency_map,
)


def _write_frames(d, n=3, size=(20, 12), start=1):
    d.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        arr = np.full((size[1], size[0], 3), 10 * i, dtype=np.uint8)
        Image.fromarray(arr).save(d / f"frame_{start + i:06d}.png")


class TestLoadVideo:
    def test_frames_in_numeric_order(self, tmp_path):
        _write_frames(tmp_path / "v" / "frames", n=3)
        seq = load_video(tmp_path / "v")
        assert len(seq) == 3
        assert [int(f[0, 0, 0]) for f in seq.frames] == [0, 10, 20]
        assert seq.numbers == (1, 2, 3)
        assert seq.size == (20, 12)

    def test_meta_json(self, tmp_path):
        _write_frames(tmp_path / "v" / "frames", n=2)
        (tmp_path / "v" / "meta.json").write_text(json.dumps({"fps": 25, "video_id": "clip"}))
        seq = load_video(tmp_path / "v")
        assert seq.fps == 25.0 and seq.video_id == "clip"
        assert seq.time_of(2) == pytest.approx(1 / 25)

    def test_mismatched_size_names_file(self, tmp_path):
        d = tmp_path / "v" / "frames"
        _write_frames(d, n=2)
        Image.fromarray(np.zeros((5, 5, 3), np.uint8)).save(d / "frame_000003.png")
        with pytest.raises(DataError, match="frame_000003.png"):
            load_video(tmp_path / "v")

    def test_empty_dir(self, tmp_path):
        (tmp_path / "v" / "frames").mkdir(parents=True)
        with pytest.raises(DataError):
            load_video(tmp_path / "v")

    def test_frames_read_only(self, tmp_path):
        _write_frames(tmp_path / "v" / "frames", n=1)
        seq = load_video(tmp_path / "v")
        with pytest.raises(ValueError):
            seq.frames[0][0, 0, 0] = 1

    def test_list_videos(self, tmp_path):
        _write_frames(tmp_path / "b" / "frames", n=1)
        _write_frames(tmp_path / "a" / "frames", n=1)
        (tmp_path / "notes").mkdir()
        assert [p.name for p in list_videos(tmp_path)] == ["a", "b"]

    def test_bad_fps(self):
        with pytest.raises(DataError):
            FrameSequence("x", (np.zeros((2, 2, 3), np.uint8),), fps=0)


class TestResize:
    def test_long_side_400(self):
        out = resize_max_side(np.zeros((448, 800, 3), np.uint8))
        assert out.shape == (224, 400, 3)

    def test_never_upscales(self):
        f = np.zeros((100, 50, 3), np.uint8)
        assert resize_max_side(f) is f

    def test_portrait(self):
        assert resize_max_side(np.zeros((800, 300), np.uint8), 400).shape[0] == 400


class TestFixations:
    def test_round_trip(self, tmp_path):
        fix = FixationLog.from_records([(1.5, 2.0, 0.1, 0), (3.0, 4.0, 0.2, 1)])
        write_fixations(tmp_path / "f.csv", fix)
        back = load_fixations(tmp_path / "f.csv")
        assert back.records == fix.records

    def test_clamps_and_counts(self, tmp_path):
        (tmp_path / "f.csv").write_text("x,y,t,subject\n-5,3,0.1,0\n10,50,0.2,0\n4,4,0.3,0\n")
        fix = load_fixations(tmp_path / "f.csv", size=(20, 10))
        assert fix.n_clamped == 2
        assert fix.x.tolist() == [0, 10, 4] and fix.y.tolist() == [3, 9, 4]

    def test_bad_header(self, tmp_path):
        (tmp_path / "f.csv").write_text("a,b,c,d\n")
        with pytest.raises(DataError, match="line 1"):
            load_fixations(tmp_path / "f.csv")

    def test_malformed_row_reports_line(self, tmp_path):
        (tmp_path / "f.csv").write_text("x,y,t,subject\n1,2,0.1,0\n1,two,0.2,0\n")
        with pytest.raises(DataError, match="line 3"):
            load_fixations(tmp_path / "f.csv")

    def test_time_decrease_reports_line_after_blank(self, tmp_path):
        (tmp_path / "f.csv").write_text("x,y,t,subject\n1,2,0.5,0\n\n1,2,0.1,0\n")
        with pytest.raises(DataError, match="line 4"):
            load_fixations(tmp_path / "f.csv")

    def test_interleaved_subjects_ok(self, tmp_path):
        (tmp_path / "f.csv").write_text("x,y,t,subject\n1,2,0.5,0\n1,2,0.1,1\n1,2,0.6,0\n")
        assert len(load_fixations(tmp_path / "f.csv")) == 3


class TestLabelMaps:
    def test_uint16_round_trip(self, tmp_path):
        lab = np.zeros((8, 9), np.uint16)
        lab[2:5, 2:6] = 300
        lab[0, 0] = 65535
        write_label_map(tmp_path / "l.png", lab)
        assert np.array_equal(read_label_map(tmp_path / "l.png"), lab)

    def test_small_regions_suppressed(self):
        lab = np.zeros((20, 20), np.int64)
        lab[0:5, 0:5] = 1  # 25 px kept
        lab[10:13, 10:13] = 2  # 9 px removed
        out = suppress_small_regions(lab)
        assert set(np.unique(out)) == {0, 1}

    def test_load_object_masks(self, tmp_path):
        d = tmp_path / "objects"
        d.mkdir()
        lab = np.zeros((10, 10), np.uint16)
        lab[:5, :5] = 3
        write_label_map(d / "labels_000016.png", lab)
        write_label_map(d / "labels_000001.png", lab)
        ms = load_object_masks(d)
        assert [n for n, _ in ms.keyframes] == [1, 16]
        assert ms.labels() == [3]


class TestSaliencyPng:
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=64))
    def test_quantization_error_bounded(self, vals):
        v = np.asarray(vals)
        assert np.max(np.abs(to_uint8(v) / 255.0 - v)) <= 0.5 / 255 + 1e-12

    def test_round_trip(self, tmp_path):
        v = np.linspace(0, 1, 30).reshape(5, 6)
        write_saliency_map(tmp_path / "s.png", v)
        back = read_saliency_map(tmp_path / "s.png")
        assert np.max(np.abs(back - v)) <= 0.5 / 255 + 1e-12

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            to_uint8(np.array([np.nan]))
