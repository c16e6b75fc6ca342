"""Detection geometry: sectors, bbox heading bounds, relations, selection."""

from __future__ import annotations

import random

import pytest

from navinstruct.landmarks import (
    BBox, CategoryLibrary, Detection, DetectionSector, Relation,
    bbox_heading_bounds, best_detection, classify_landmark_relation,
    column_heading, detection_sector, in_sector, select_landmark,
)
from navinstruct.providers import MockDetector


def det(label: str, x0: float, conf: float, width: float = 20.0,
        y0: float = 400.0, height: float = 100.0) -> Detection:
    return Detection(label=label, bbox=BBox(x0, y0, x0 + width, y0 + height),
                     confidence=conf)


# --------------------------------------------------------------------------- #
# bbox validity
# --------------------------------------------------------------------------- #

def test_bbox_rejects_degenerate():
    with pytest.raises(ValueError):
        BBox(10.0, 0.0, 10.0, 5.0)
    with pytest.raises(ValueError):
        BBox(0.0, 5.0, 10.0, 5.0)
    with pytest.raises(ValueError):
        BBox(float("inf"), 0.0, 10.0, 5.0)


def test_detection_confidence_range():
    with pytest.raises(ValueError):
        det("chair", 0.0, 1.5)
    with pytest.raises(ValueError):
        det("chair", 0.0, -0.1)


# --------------------------------------------------------------------------- #
# sectors
# --------------------------------------------------------------------------- #

def test_sector_half_open_boundary():
    sector = DetectionSector(center=0.0)
    assert sector.contains(90.0)
    assert not sector.contains(-90.0)
    assert sector.contains(-89.999)
    assert sector.contains(0.0)
    assert not sector.contains(180.0)
    assert not sector.contains(270.0 - 360.0)


def test_sector_wraps_across_seam():
    sector = detection_sector(170.0)
    assert sector.contains(-170.0)
    assert sector.contains(100.0)
    assert not sector.contains(-20.0)
    assert sector.contains(170.0 + 720.0)


def test_sector_from_heading_normalizes():
    assert detection_sector(540.0).center == 180.0


# --------------------------------------------------------------------------- #
# column headings and bbox bounds
# --------------------------------------------------------------------------- #

def test_column_heading_pinned():
    assert column_heading(512.0, 1024.0) == pytest.approx(0.0, abs=1e-12)
    assert column_heading(0.0, 1024.0) == pytest.approx(-180.0, abs=1e-12)
    assert column_heading(1024.0, 1024.0) == pytest.approx(-180.0, abs=1e-12)
    assert column_heading(768.0, 1024.0) == pytest.approx(90.0, abs=1e-12)
    assert column_heading(512.0, 1024.0, 90.0) == pytest.approx(90.0, abs=1e-12)


def test_bbox_bounds_centered_box():
    bounds = bbox_heading_bounds(BBox(502.0, 0.0, 522.0, 10.0), 1024.0)
    assert bounds[0] == pytest.approx(-3.515625, abs=1e-9)
    assert bounds[1] == pytest.approx(3.515625, abs=1e-9)


def test_bbox_bounds_rotated_panorama():
    bounds = bbox_heading_bounds(BBox(0.0, 0.0, 1.0, 10.0), 1024.0, 90.0)
    assert bounds[0] == pytest.approx(-90.0, abs=1e-9)
    assert bounds[1] == pytest.approx(-90.0 + 360.0 / 1024.0, abs=1e-9)


def test_bbox_bounds_full_width():
    bounds = bbox_heading_bounds(BBox(0.0, 0.0, 1024.0, 10.0), 1024.0)
    assert bounds == (pytest.approx(-180.0), pytest.approx(180.0))


def test_bbox_bounds_seam_crossing():
    # A box near the right edge unwraps past +180.
    bounds = bbox_heading_bounds(BBox(1000.0, 0.0, 1024.0, 10.0), 1024.0)
    assert bounds[0] == pytest.approx(171.5625, abs=1e-9)
    assert bounds[1] == pytest.approx(180.0, abs=1e-9)


def test_bbox_bounds_width_matches_angle():
    rng = random.Random(5)
    for _ in range(50):
        x0 = rng.uniform(0.0, 900.0)
        w = rng.uniform(1.0, 124.0)
        bounds = bbox_heading_bounds(BBox(x0, 0.0, x0 + w, 10.0), 1024.0)
        assert bounds[1] - bounds[0] == pytest.approx(w * 360.0 / 1024.0,
                                                      abs=1e-9)
        assert -180.0 <= bounds[0] < 180.0


def test_bbox_bounds_rejects():
    with pytest.raises(ValueError, match="pano_width"):
        bbox_heading_bounds(BBox(0.0, 0.0, 1.0, 1.0), 0.0)
    with pytest.raises(ValueError, match="wider than panorama"):
        bbox_heading_bounds(BBox(0.0, 0.0, 600.0, 10.0), 512.0)


# --------------------------------------------------------------------------- #
# relations
# --------------------------------------------------------------------------- #

@pytest.mark.parametrize("psi, expected", [
    (0.0, Relation.TOWARDS),
    (10.0, Relation.TOWARDS),
    (-10.0, Relation.TOWARDS),
    (10.001, Relation.TOWARDS_RIGHT_OF),
    (-10.001, Relation.TOWARDS_LEFT_OF),
    (90.0, Relation.TOWARDS_RIGHT_OF),
    (-90.0, Relation.TOWARDS_LEFT_OF),
])
def test_relation_pinned(psi, expected):
    assert classify_landmark_relation(psi, (-10.0, 10.0)) == expected


def test_relation_turn_invariance():
    bounds = (-30.0, 40.0)
    for psi in (-170.0, 0.0, 35.0, 120.0):
        base = classify_landmark_relation(psi, bounds)
        assert classify_landmark_relation(psi + 360.0, bounds) == base
        assert classify_landmark_relation(psi - 720.0, bounds) == base


def test_relation_seam_crossing_bounds():
    bounds = (170.0, 190.0)
    assert classify_landmark_relation(-175.0, bounds) == Relation.TOWARDS
    assert classify_landmark_relation(175.0, bounds) == Relation.TOWARDS
    assert classify_landmark_relation(165.0, bounds) == Relation.TOWARDS_LEFT_OF
    assert classify_landmark_relation(-165.0, bounds) == Relation.TOWARDS_RIGHT_OF


def test_relation_sweep_is_total_and_ordered():
    bounds = (-30.0, 40.0)
    seen = set()
    for i in range(-360, 361):
        psi = i / 2.0
        rel = classify_landmark_relation(psi, bounds)
        seen.add(rel)
        if -30.0 <= psi <= 40.0:
            assert rel == Relation.TOWARDS
    assert seen == {Relation.TOWARDS, Relation.TOWARDS_LEFT_OF,
                    Relation.TOWARDS_RIGHT_OF}


def test_relation_rejects_bad_bounds():
    with pytest.raises(ValueError):
        classify_landmark_relation(0.0, (10.0, 10.0))


# --------------------------------------------------------------------------- #
# selection
# --------------------------------------------------------------------------- #

def test_in_sector_uses_center_column():
    sector = DetectionSector(center=0.0)
    ahead = det("chair", 502.0, 0.9)          # center col 512 -> 0 degrees
    behind = det("table", 0.0, 0.9)           # center col 10 -> -176.5
    assert in_sector(ahead, sector, 1024.0)
    assert not in_sector(behind, sector, 1024.0)


def test_best_detection_tie_breaks():
    by_conf = [det("b", 10.0, 0.8), det("a", 20.0, 0.9)]
    assert best_detection(by_conf).label == "a"
    by_label = [det("b", 10.0, 0.9), det("a", 20.0, 0.9)]
    assert best_detection(by_label).label == "a"
    by_x = [det("a", 30.0, 0.9), det("a", 20.0, 0.9)]
    assert best_detection(by_x).bbox.x_min == 20.0


def _detector(dets: list[dict]) -> MockDetector:
    return MockDetector({"s/vp": dets})


LIBRARY = CategoryLibrary({"s": ["chair", "table"]})


def test_select_landmark_filters_and_picks():
    detector = _detector([
        {"label": "chair", "bbox": [500.0, 400.0, 540.0, 500.0],
         "confidence": 0.7},
        {"label": "table", "bbox": [600.0, 400.0, 640.0, 500.0],
         "confidence": 0.9},
        {"label": "chair", "bbox": [10.0, 400.0, 50.0, 500.0],
         "confidence": 0.99},  # behind the agent
    ])
    landmark = select_landmark(detector, "s", "vp", DetectionSector(0.0),
                               LIBRARY)
    assert landmark is not None
    assert landmark.label == "table"
    assert landmark.viewpoint_id == "vp"
    lo, hi = landmark.heading_bounds
    assert lo == pytest.approx((600.0 / 1024.0) * 360.0 - 180.0)
    assert hi - lo == pytest.approx(40.0 * 360.0 / 1024.0)


def test_select_landmark_respects_categories():
    detector = _detector([
        {"label": "dragon", "bbox": [500.0, 400.0, 540.0, 500.0],
         "confidence": 0.99},
        {"label": "chair", "bbox": [520.0, 400.0, 560.0, 500.0],
         "confidence": 0.5},
    ])
    landmark = select_landmark(detector, "s", "vp", DetectionSector(0.0),
                               LIBRARY)
    assert landmark is not None and landmark.label == "chair"


def test_select_landmark_none_when_sector_empty():
    detector = _detector([
        {"label": "chair", "bbox": [10.0, 400.0, 50.0, 500.0],
         "confidence": 0.99},
    ])
    assert select_landmark(detector, "s", "vp", DetectionSector(0.0),
                           LIBRARY) is None
    assert select_landmark(MockDetector({}), "s", "vp", DetectionSector(0.0),
                           LIBRARY) is None


def test_select_landmark_unknown_scan():
    with pytest.raises(ValueError, match="no landmark categories"):
        select_landmark(MockDetector({}), "other", "vp", DetectionSector(0.0),
                        LIBRARY)
