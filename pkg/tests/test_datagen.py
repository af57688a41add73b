import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinet.datagen import (CropSpec, FaceBox, ManifestEntry, Rect, crop_pair, expand_face_box,
                           read_boxes, read_decisions, read_manifest, review_manifest, write_manifest)
from sinet.errors import ConfigError, InputError


def test_unit_scale_is_identity():
    box = FaceBox(30, 12, 40, 25)
    assert expand_face_box(box, (100, 120), CropSpec(1, 1, 0)) == Rect(30, 12, 40, 25)


def test_closed_form_expansion():
    # centre (50, 50) moves down by 0.3 * 20 = 6; a 50x50 rectangle around (50, 56)
    rect = expand_face_box(FaceBox(40, 40, 20, 20), (200, 200), CropSpec(2.5, 2.5, 0.3))
    assert rect == Rect(25, 31, 50, 50)


def test_corner_box_is_clamped():
    rect = expand_face_box(FaceBox(0, 0, 10, 10), (50, 60), CropSpec(3, 3, 0))
    assert rect.x == 0 and rect.y == 0
    assert rect == Rect(0, 0, 20, 20)
    big = expand_face_box(FaceBox(0, 0, 50, 40), (40, 50), CropSpec(3, 3, 0.3))
    assert big == Rect(0, 0, 50, 40)


def test_invalid_boxes_and_specs():
    with pytest.raises(InputError):
        expand_face_box(FaceBox(0, 0, 0, 5), (10, 10))
    with pytest.raises(InputError):
        expand_face_box(FaceBox(8, 8, 5, 5), (10, 10))
    with pytest.raises(ConfigError):
        CropSpec(0.5, 1, 0)
    # shifted entirely below the image -> nothing left after clamping
    with pytest.raises(InputError):
        expand_face_box(FaceBox(0, 0, 4, 4), (10, 10), CropSpec(1, 1, 10))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 80), st.integers(0, 80), st.integers(1, 20), st.integers(1, 20),
       st.floats(1, 3), st.floats(0, 3), st.floats(0, 0.5))
def test_expansion_monotone_in_scale(x, y, w, h, s1, ds, shift):
    box = FaceBox(x, y, w, h)
    small = expand_face_box(box, (100, 100), CropSpec(s1, s1, shift))
    large = expand_face_box(box, (100, 100), CropSpec(s1 + ds, s1 + ds, shift))
    assert large.contains(small)
    assert 0 <= large.x and large.x + large.w <= 100 and 0 <= large.y and large.y + large.h <= 100


def _pair(h=12, w=10):
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8), (rng.random((h, w)) < 0.5).astype(np.uint8)


def test_full_crop_is_identity_and_binary():
    img, mask = _pair()
    ci, cm = crop_pair(img, mask, Rect(0, 0, 10, 12))
    np.testing.assert_array_equal(ci, img)
    np.testing.assert_array_equal(cm, mask)
    _, part = crop_pair(img, mask, Rect(2, 3, 4, 5))
    assert set(np.unique(part)) <= {0, 1}


def test_crop_of_crop_composes():
    img, mask = _pair()
    a_img, a_mask = crop_pair(img, mask, Rect(1, 2, 8, 9))
    b_img, b_mask = crop_pair(a_img, a_mask, Rect(2, 1, 3, 4))
    c_img, c_mask = crop_pair(img, mask, Rect(3, 3, 3, 4))
    np.testing.assert_array_equal(b_img, c_img)
    np.testing.assert_array_equal(b_mask, c_mask)


def test_crop_outside_image_fails():
    img, mask = _pair()
    with pytest.raises(InputError):
        crop_pair(img, mask, Rect(5, 5, 10, 10))
    with pytest.raises(InputError):
        crop_pair(img, mask[:5], Rect(0, 0, 2, 2))


def _entries():
    return [ManifestEntry(str(i), f"{i}.ppm", f"{i}_mask.pgm", Rect(i, i, 5, 5)) for i in range(3)]


def test_review_orders_and_pending():
    entries = _entries()
    res = review_manifest(entries, {"2": "accept", "0": "accept", "1": "reject"})
    assert [e.id for e in res.accepted] == ["0", "2"]
    assert [e.id for e in res.rejected] == ["1"]
    res = review_manifest(entries, {"1": "accept"})
    assert [e.id for e in res.pending] == ["0", "2"]
    all_reject = review_manifest(entries, {e.id: "reject" for e in entries})
    assert all_reject.accepted == []
    with pytest.raises(InputError):
        review_manifest(entries, {"0": "maybe"})


def test_manifest_round_trip(tmp_path):
    entries = review_manifest(_entries(), {"0": "accept", "1": "reject"})
    flat = entries.accepted + entries.rejected + entries.pending
    path = tmp_path / "m.jsonl"
    write_manifest(flat, path)
    assert read_manifest(path) == flat
    assert len(path.read_text().splitlines()) == 3


def test_boxes_and_decisions_csv(tmp_path):
    p = tmp_path / "boxes.csv"
    p.write_text("id,x,y,w,h\na,1,2,3,4\nb,5,6,7,8\n")
    assert read_boxes(p) == {"a": FaceBox(1, 2, 3, 4), "b": FaceBox(5, 6, 7, 8)}
    p.write_text("a,1,2,3\n")
    with pytest.raises(InputError):
        read_boxes(p)
    d = tmp_path / "d.csv"
    d.write_text("id,decision\na,accept\nb,reject\n")
    assert read_decisions(d) == {"a": "accept", "b": "reject"}
