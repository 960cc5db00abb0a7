"""Region-wise ground plane fitting inside potentially dynamic bins."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig

log = logging.getLogger(__name__)

_EIG_TOL = 1e-12
_EMPTY = np.zeros(0, dtype=np.int64)


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PlaneModel:
    """Plane ``n . p + d = 0`` with unit, upward-facing normal and the centroid it was fitted at."""

    normal: np.ndarray
    d: float
    mean: np.ndarray

    def signed_distance(self, xyz: np.ndarray) -> np.ndarray:
        return xyz @ self.normal + self.d


@dataclass(frozen=True, eq=False)
class BinSplit:
    ground: np.ndarray
    dynamic: np.ndarray
    plane: PlaneModel | None
    degenerate: bool = False


def symmetric_eigen_3x3(m) -> tuple[list[float], list[list[float]]]:
    """Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix.

    Returns eigenvalues (unsorted) and the eigenvectors as columns of ``v``
    (``v[row][col]``). Sweeps until every off-diagonal entry is below 1e-12
    relative to the Frobenius norm.
    """
    a = [[float(m[i][j]) for j in range(3)] for i in range(3)]
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    scale = math.sqrt(sum(a[i][j] ** 2 for i in range(3) for j in range(3)))
    if scale == 0.0:
        return [0.0, 0.0, 0.0], v
    for _ in range(64):
        off = max(abs(a[0][1]), abs(a[0][2]), abs(a[1][2]))
        if off <= _EIG_TOL * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p][q]
            if apq == 0.0:
                continue
            theta = (a[q][q] - a[p][p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            for k in range(3):
                akp, akq = a[k][p], a[k][q]
                a[k][p] = c * akp - s * akq
                a[k][q] = s * akp + c * akq
            for k in range(3):
                apk, aqk = a[p][k], a[q][k]
                a[p][k] = c * apk - s * aqk
                a[q][k] = s * apk + c * aqk
            a[p][q] = a[q][p] = 0.0
            for k in range(3):
                vkp, vkq = v[k][p], v[k][q]
                v[k][p] = c * vkp - s * vkq
                v[k][q] = s * vkp + c * vkq
    return [a[0][0], a[1][1], a[2][2]], v


def select_seeds(z: np.ndarray, tau_seed: float, num_seed_points: int) -> np.ndarray:
    """Indices of points lower than the mean of the lowest ``num_seed_points`` heights plus ``tau_seed``."""
    z = np.asarray(z, dtype=np.float64)
    if not len(z):
        return _EMPTY
    k = min(num_seed_points, len(z))
    lowest = np.partition(z, k - 1)[:k] if k < len(z) else z
    z_bar = lowest.mean()
    return np.flatnonzero(z < z_bar + tau_seed)


def fit_plane_pca(points: np.ndarray) -> PlaneModel:
    """Least-squares plane through ``points``.

    The normal is the eigenvector of the (unnormalised) scatter matrix with the
    smallest eigenvalue, flipped so its z component is non-negative. Ties in
    the smallest eigenvalue go to the candidate with the largest |z|.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise DegenerateFitError(f"need at least 3 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered
    vals, vecs = symmetric_eigen_3x3(cov)
    order = sorted(range(3), key=lambda i: vals[i])
    lo, mid, hi = (vals[i] for i in order)
    if hi <= 0.0 or mid <= _EIG_TOL * hi:
        raise DegenerateFitError("points are coincident or collinear")
    tied = [i for i in order if vals[i] - lo <= _EIG_TOL * hi]
    best = max(tied, key=lambda i: (abs(vecs[2][i]), -i))
    normal = np.array([vecs[0][best], vecs[1][best], vecs[2][best]])
    normal /= np.linalg.norm(normal)
    if normal[2] < 0:
        normal = -normal
    return PlaneModel(normal, float(-normal @ mean), mean)


def extract_inliers(points: np.ndarray, plane: PlaneModel, tau_g: float) -> np.ndarray:
    """Points below the plane or at most ``tau_g`` above it.

    With ``d_hat = -n . p`` the test is ``d - d_hat < tau_g``, i.e. the signed
    distance along the upward normal is below the margin.
    """
    d_hat = -(np.asarray(points, dtype=np.float64) @ plane.normal)
    return np.flatnonzero(plane.d - d_hat < tau_g)


def level_plane(points: np.ndarray) -> PlaneModel:
    """Horizontal plane through the centroid of ``points``."""
    mean = np.asarray(points, dtype=np.float64).mean(axis=0)
    return PlaneModel(np.array([0.0, 0.0, 1.0]), float(-mean[2]), mean)


def _seed_fit_extract(points: np.ndarray, cfg: PipelineConfig) -> BinSplit:
    n = len(points)
    if n == 0:
        return BinSplit(_EMPTY, _EMPTY, None)
    inliers = select_seeds(points[:, 2], cfg.tau_seed, cfg.num_seed_points)
    min_up = math.cos(math.radians(cfg.max_ground_tilt))
    plane = None
    try:
        for _ in range(cfg.num_rgpf_iterations):
            plane = fit_plane_pca(points[inliers])
            if plane.normal[2] < min_up:
                # thin ground strips plus object undersides can tip the fit onto its side
                plane = level_plane(points[inliers])
            inliers = extract_inliers(points, plane, cfg.tau_g)
    except DegenerateFitError as exc:
        log.debug("degenerate ground fit over %d points (%s); keeping all", n, exc)
        return BinSplit(np.arange(n), _EMPTY, None, degenerate=True)
    mask = np.zeros(n, dtype=bool)
    mask[inliers] = True
    return BinSplit(inliers, np.flatnonzero(~mask), plane)


def rgpf_bin(points: np.ndarray, cfg: PipelineConfig) -> BinSplit:
    """Split the map points of one potentially dynamic bin into ground and dynamic.

    Seeds start the fit; each round refits on the previous inliers and
    re-extracts over the whole bin. A degenerate fit keeps the whole bin.
    """
    return _seed_fit_extract(np.asarray(points, dtype=np.float64).reshape(-1, 3), cfg)


def fit_ground_global(points: np.ndarray, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Single-plane baseline: one seed/fit/extract loop over all points jointly.

    A deliberately simple stand-in for whole-scene ground fitting, used only
    to compare against the per-bin fit.
    """
    split = _seed_fit_extract(np.asarray(points, dtype=np.float64).reshape(-1, 3), cfg)
    return split.ground, split.dynamic
