import numpy as np
import pytest

import solarspot


def test_tiff_round_trip():
    frame = np.arange(48, dtype=np.uint16).reshape(6, 8) * 500
    back = solarspot.load_tiff(solarspot.write_tiff(frame))
    assert back.dtype == np.uint16
    assert np.array_equal(back, frame)


def test_bad_tiff_raises():
    with pytest.raises(solarspot.Error):
        solarspot.load_tiff(b"not a tiff")


def test_contrast_stretch_range():
    frame, _ = solarspot.synth_scene(defects=[(0, 0, 0, 2, 2)], seed=3)
    stretched = solarspot.contrast_stretch(frame, 1.0, 99.0)
    assert stretched.dtype == np.uint8
    assert stretched.shape == frame.shape
    assert stretched.max() == 255


def test_letterbox_pads_with_gray():
    image = np.full((10, 20), 7, dtype=np.uint8)
    boxed, transform = solarspot.letterbox(image, 32, 32)
    assert boxed.shape == (32, 32)
    assert transform["scale"] == pytest.approx(32 / 20)
    assert boxed[0, 0] == 128
    assert boxed[16, 16] == 7


def test_iou_and_nms():
    assert solarspot.iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    kept = solarspot.nms(
        [(0, 0.9, 0, 0, 10, 10), (0, 0.8, 1, 1, 10, 10), (1, 0.7, 0, 0, 10, 10)],
        0.45,
    )
    assert len(kept) == 2
    assert {d[0] for d in kept} == {0, 1}


def test_synth_and_baseline_agree():
    frame, truths = solarspot.synth_scene(defects=[(0, 1, 1, 4, 3)], seed=9)
    assert len(truths) == 1
    dets = solarspot.baseline_detect(frame, 3000, 400, 8)
    assert len(dets) == 1
    det = dets[0]
    assert det["class_id"] == 0
    assert det["class_name"] == "single_cell_hotspot"

    height, width = frame.shape
    cls, cx, cy, w, h = truths[0]
    truth_box = ((cx - w / 2) * width, (cy - h / 2) * height, w * width, h * height)
    assert solarspot.iou(det["bbox"], truth_box) > 0.9


def test_evaluate_perfect_score():
    frame, truths = solarspot.synth_scene(defects=[(1, 0, 2, 3, 1)], seed=4)
    height, width = frame.shape
    dets = [
        (cls, 0.9, (cx - w / 2) * width, (cy - h / 2) * height, w * width, h * height)
        for cls, cx, cy, w, h in truths
    ]
    result = solarspot.evaluate([("img", dets)], [("img", width, height, truths)], 0.5)
    assert result["map"] == pytest.approx(1.0)
    assert result["counts"]["1"]["n_tp"] == 1


def test_kmeans_anchors_exact_recovery():
    boxes = [(0.05, 0.05)] * 10 + [(0.4, 0.4)] * 10
    result = solarspot.kmeans_anchors(boxes, 2, 13, 13, seed=0)
    assert result["mean_best_iou"] == pytest.approx(1.0)
    assert len(result["anchors"]) == 2


def test_split_dataset_partitions():
    ids = [f"img_{i}" for i in range(100)]
    train, test = solarspot.split_dataset(ids, 0.2, 7)
    assert len(train) == 80
    assert len(test) == 20
    assert sorted(train + test) == sorted(ids)


def test_model_runs_end_to_end():
    cfg = (
        "[net]\nwidth=32\nheight=32\nchannels=1\n"
        "[convolutional]\nfilters=24\nsize=1\nstride=1\npad=0\nactivation=linear\n"
        "[region]\nanchors=1.0,1.2, 3.0,3.0, 6.0,5.0\nnum=3\nclasses=3\n"
    )
    header = np.array([0, 2, 0], dtype="<i4").tobytes() + bytes(8)
    weights = header + np.zeros(48, dtype="<f4").tobytes()
    model = solarspot.Model(cfg, weights)
    assert model.input_size == (32, 32)
    assert model.grid == (32, 32)
    assert len(model.anchors) == 3

    frame, _ = solarspot.synth_scene(seed=1)
    assert model.detect(frame) == []


def test_render_overlay_marks_boxes():
    image = np.zeros((20, 20), dtype=np.uint8)
    overlay = solarspot.render_overlay(image, [(0, 0.9, 5, 5, 8, 8)])
    assert overlay.shape == (20, 20, 3)
    assert overlay[:, :, 0].max() == 255


def test_encode_pnm_header():
    image = np.zeros((2, 3), dtype=np.uint8)
    data = solarspot.encode_pnm(image)
    assert data.startswith(b"P5\n3 2\n255\n")
