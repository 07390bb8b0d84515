"""Small 2-D raster helpers: convex hulls and polygon fills on pixel grids.

Pixel ``(row, col)`` covers ``[col, col + 1) x [row, row + 1)`` in continuous
image coordinates, so its center sits at ``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

import numpy as np


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull of 2-D points (monotone chain).

    Collinear points are dropped. Degenerate inputs return fewer than three
    vertices.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly: np.ndarray) -> float:
    poly = np.asarray(poly, dtype=np.float64)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def fill_convex(hull: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Boolean raster of pixels whose centers lie in the closed convex polygon.

    ``hull`` holds ``(x, y)`` vertices in counter-clockwise order as returned by
    :func:`convex_hull`.
    """
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    hull = np.asarray(hull, dtype=np.float64)
    if len(hull) < 3:
        return out
    x0 = max(int(np.floor(hull[:, 0].min() - 0.5)), 0)
    x1 = min(int(np.ceil(hull[:, 0].max() + 0.5)), w)
    y0 = max(int(np.floor(hull[:, 1].min() - 0.5)), 0)
    y1 = min(int(np.ceil(hull[:, 1].max() + 0.5)), h)
    if x0 >= x1 or y0 >= y1:
        return out
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones(gx.shape, dtype=bool)
    # scale-aware tolerance keeps pixel centers on an edge inside
    scale = max(float(np.abs(hull).max()), 1.0)
    eps = 1e-9 * scale * scale
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        cross = (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])
        inside &= cross >= -eps
    out[y0:y1, x0:x1] = inside
    return out


def fill_hull_of(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return fill_convex(convex_hull(points), shape)


def bbox_2d(points: np.ndarray) -> np.ndarray:
    """Axis-aligned ``[x0, y0, x1, y1]`` around 2-D points."""
    points = np.asarray(points, dtype=np.float64)
    return np.array([points[:, 0].min(), points[:, 1].min(), points[:, 0].max(), points[:, 1].max()])


def iou_2d(a: np.ndarray, b: np.ndarray) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0
