"""Landmark selection from panoramic detections, with heading-bound geometry."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum

from .navgraph import normalize_angle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates of a W x H equirectangular panorama."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max)):
            raise ValueError("non-finite bbox coordinate")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate bbox {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def center_x(self) -> float:
        return (self.x_min + self.x_max) / 2.0


@dataclass(frozen=True)
class Detection:
    label: str
    bbox: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Landmark:
    viewpoint_id: str
    detection: Detection
    heading_bounds: tuple[float, float]

    @property
    def label(self) -> str:
        return self.detection.label


@dataclass(frozen=True)
class DetectionSector:
    """Half-panorama sector (center - 90, center + 90] in heading degrees."""

    center: float
    half_width: float = 90.0

    def contains(self, heading: float) -> bool:
        d = normalize_angle(heading - self.center)
        return -self.half_width < d <= self.half_width


def detection_sector(next_step_heading: float) -> DetectionSector:
    """The forward 180-degree sector around the intended movement heading."""
    return DetectionSector(center=normalize_angle(next_step_heading))


class Relation(Enum):
    TOWARDS = "towards"
    TOWARDS_LEFT_OF = "towards_left_of"
    TOWARDS_RIGHT_OF = "towards_right_of"


def column_heading(column: float, pano_width: float,
                   pano_center_heading: float = 0.0) -> float:
    """Heading of a panorama pixel column, wrapped into [-180, 180).

    Column 0 sits at center - 180 degrees; headings grow clockwise with x.
    """
    raw = pano_center_heading + (column / pano_width) * 360.0 - 180.0
    r = math.fmod(raw + 180.0, 360.0)
    if r < 0.0:
        r += 360.0
    return r - 180.0


def bbox_heading_bounds(bbox: BBox, pano_width: float,
                        pano_center_heading: float = 0.0) -> tuple[float, float]:
    """Headings of the left and right bbox edges, unwrapped so min < max.

    The lower bound lies in [-180, 180); the upper bound exceeds it by the
    box's angular width and may pass +180 when the box crosses the seam.
    """
    if pano_width <= 0:
        raise ValueError("pano_width must be positive")
    width = bbox.x_max - bbox.x_min
    if width > pano_width:
        raise ValueError("bbox wider than panorama")
    chi_min = column_heading(bbox.x_min, pano_width, pano_center_heading)
    chi_max = chi_min + width * 360.0 / pano_width
    return (chi_min, chi_max)


def classify_landmark_relation(next_heading: float,
                               bounds: tuple[float, float]) -> Relation:
    """Place a heading relative to unwrapped landmark bounds.

    The heading is shifted by a whole number of turns to the branch nearest
    the bounds' midpoint, then compared; the towards band is closed.
    """
    chi_min, chi_max = bounds
    if not chi_min < chi_max:
        raise ValueError("bounds must satisfy chi_min < chi_max")
    mid = (chi_min + chi_max) / 2.0
    psi = next_heading + 360.0 * round((mid - next_heading) / 360.0)
    if psi < chi_min:
        return Relation.TOWARDS_LEFT_OF
    if psi > chi_max:
        return Relation.TOWARDS_RIGHT_OF
    return Relation.TOWARDS


# --------------------------------------------------------------------------- #
# category library and selection
# --------------------------------------------------------------------------- #

@dataclass
class CategoryLibrary:
    """Per-scan lists of lowercase landmark category names."""

    by_scan: dict[str, list[str]]

    def categories_for(self, scan_id: str) -> list[str]:
        try:
            return self.by_scan[scan_id]
        except KeyError:
            raise ValueError(f"no landmark categories for scan {scan_id!r}") from None


def load_category_library(path: str) -> CategoryLibrary:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"category file {path}: top level must be an object")
    by_scan: dict[str, list[str]] = {}
    for scan, cats in raw.items():
        if not isinstance(cats, list) or not cats:
            raise ValueError(f"category file {path}: scan {scan!r} needs a non-empty list")
        by_scan[scan] = [str(c).lower() for c in cats]
    return CategoryLibrary(by_scan)


def in_sector(detection: Detection, sector: DetectionSector, pano_width: float,
              pano_center_heading: float = 0.0) -> bool:
    """Sector membership judged by the bbox's horizontal center column."""
    return sector.contains(column_heading(detection.bbox.center_x, pano_width,
                                          pano_center_heading))


def best_detection(detections: list[Detection]) -> Detection:
    """Highest confidence wins; ties fall to label order, then leftmost box."""
    return min(detections, key=lambda d: (-d.confidence, d.label, d.bbox.x_min))


def select_landmark(provider, scan: str, viewpoint_id: str,
                    sector: DetectionSector, library: CategoryLibrary, *,
                    pano_width: float = 1024.0, pano_height: float = 1024.0,
                    pano_center_heading: float = 0.0) -> Landmark | None:
    """One representative landmark at a viewpoint, or None.

    Queries the detector provider, keeps detections whose bbox center heading
    falls in the sector, and picks the best survivor.
    """
    categories = library.categories_for(scan)
    detections = provider.detect(scan, viewpoint_id, categories,
                                 pano_width, pano_height)
    survivors = [d for d in detections
                 if in_sector(d, sector, pano_width, pano_center_heading)]
    if not survivors:
        return None
    best = best_detection(survivors)
    bounds = bbox_heading_bounds(best.bbox, pano_width, pano_center_heading)
    return Landmark(viewpoint_id=viewpoint_id, detection=best,
                    heading_bounds=bounds)
