"""Procedural test objects: asymmetric assemblies of boxes.

They stand in for CAD models when no mesh dataset is available.  Each object
is a handful of axis-aligned boxes of random size glued at random offsets, so
it has no rotational symmetry in practice.
"""

from __future__ import annotations

import numpy as np

from ..core import PointCloud, normalize_to_unit_cube
from ..io import TriangleMesh, sample_mesh
from .perturb import make_rng

__all__ = ["box_mesh", "primitive_mesh", "primitive_cloud"]

_BOX_FACES = np.array([
    [0, 1, 3], [0, 3, 2],  # x = lo
    [4, 6, 7], [4, 7, 5],  # x = hi
    [0, 4, 5], [0, 5, 1],  # y = lo
    [2, 3, 7], [2, 7, 6],  # y = hi
    [0, 2, 6], [0, 6, 4],  # z = lo
    [1, 5, 7], [1, 7, 3],  # z = hi
])


def box_mesh(lo, hi) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    # corner i takes hi on x, y, z where bits 2, 1, 0 of i are set
    corners = np.array([[(hi if i & bit else lo)[axis] for axis, bit in enumerate((4, 2, 1))] for i in range(8)])
    return corners, _BOX_FACES.copy()


def primitive_mesh(seed: int, n_boxes: tuple[int, int] = (3, 5)) -> TriangleMesh:
    rng = make_rng(seed)
    verts, faces = [], []
    count = int(rng.integers(n_boxes[0], n_boxes[1] + 1))
    anchor = np.zeros(3)
    for i in range(count):
        size = rng.uniform(0.15, 1.0, size=3)
        # each box touches the previous one so the object stays connected
        lo = anchor + rng.uniform(-0.5, 0.5, size=3) * size
        v, f = box_mesh(lo, lo + size)
        faces.append(f + 8 * i)
        verts.append(v)
        anchor = lo + rng.uniform(0.2, 0.8, size=3) * size
    return TriangleMesh.from_arrays(np.vstack(verts), np.vstack(faces))


def primitive_cloud(seed: int, n_points: int = 1024, sample_seed: int | None = None) -> PointCloud:
    """Sampled primitive object, normalized to the unit cube."""
    mesh = primitive_mesh(seed)
    cloud = sample_mesh(mesh, n_points, seed if sample_seed is None else sample_seed,
                        name=f"primitive-{seed}")
    return normalize_to_unit_cube(cloud)[0]
