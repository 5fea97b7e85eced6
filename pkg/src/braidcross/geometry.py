"""Oriented-rectangle distance, vectorized over leading axes."""

from __future__ import annotations

import numpy as np

_UNIT = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])


def rect_corners(x, y, theta, length: float, width: float) -> np.ndarray:
    """Corners of car rectangles centred at (x, y) with heading theta, shape (..., 4, 2)."""
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    lx = _UNIT[:, 0] * length
    ly = _UNIT[:, 1] * width
    return np.stack([x + c * lx - s * ly, y + s * lx + c * ly], axis=-1)


def _separated(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """Separating-axis test over the edge normals of both rectangles."""
    sep = np.zeros(ca.shape[:-2], dtype=bool)
    for poly in (ca, cb):
        for k in range(2):
            edge = poly[..., k + 1, :] - poly[..., k, :]
            axis = np.stack([-edge[..., 1], edge[..., 0]], axis=-1)[..., None, :]
            pa = np.sum(ca * axis, axis=-1)
            pb = np.sum(cb * axis, axis=-1)
            sep |= (pa.max(-1) < pb.min(-1)) | (pb.max(-1) < pa.min(-1))
    return sep


def _point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.sum((p - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.sqrt(np.sum((p - proj) ** 2, axis=-1))


def polygon_distance(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """Boundary distance between convex quads (..., 4, 2); 0 when they overlap."""
    best = None
    for p_poly, e_poly in ((ca, cb), (cb, ca)):
        pts = p_poly[..., :, None, :]                        # (..., 4, 1, 2)
        a = e_poly[..., None, :, :]                          # (..., 1, 4, 2)
        b = np.roll(e_poly, -1, axis=-2)[..., None, :, :]
        d = _point_segment(pts, a, b).min(axis=(-1, -2))
        best = d if best is None else np.minimum(best, d)
    return np.where(_separated(ca, cb), best, 0.0)


def rect_distance(pose_a, pose_b, length: float, width: float) -> np.ndarray:
    """Distance between car rectangles given poses (..., 3)."""
    pa = np.asarray(pose_a, dtype=float)
    pb = np.asarray(pose_b, dtype=float)
    ca = rect_corners(pa[..., 0], pa[..., 1], pa[..., 2], length, width)
    cb = rect_corners(pb[..., 0], pb[..., 1], pb[..., 2], length, width)
    return polygon_distance(ca, cb)


def min_rect_distance(pose_a: np.ndarray, pose_b: np.ndarray, length: float, width: float) -> float:
    """min over samples of ``rect_distance``, evaluated only where the bound allows."""
    pa = np.asarray(pose_a, dtype=float)
    pb = np.asarray(pose_b, dtype=float)
    centre = np.hypot(pa[:, 0] - pb[:, 0], pa[:, 1] - pb[:, 1])
    diag = float(np.hypot(length, width))
    # rect distance lies in [centre - diag, centre]
    cand = np.nonzero(centre - diag <= centre.min())[0]
    return float(rect_distance(pa[cand], pb[cand], length, width).min())
