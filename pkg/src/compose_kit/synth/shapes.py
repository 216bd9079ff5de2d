"""Parametric desk-scale shapes with uniform-by-area surface sampling.

Each generator returns surface points with exact outward normals, already
normalized so the bounding-box diagonal is 1 and the center sits at the
origin (the canonical model frame). Per-axis extents of the normalized
shape come back as the canonical size vector, with unit norm.

Categories: a box (with a dense sample patch at one corner so the six
faces are statistically distinguishable), a cylinder (rotationally
symmetric about z), a mug (cylinder plus an off-center handle, which kills
both the spin and the flip symmetry), and an L-bracket (no symmetry).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BadSpec

CATEGORIES = ("box", "cylinder", "mug", "lbracket")


@dataclass
class ShapeSpec:
    category: str
    params: dict[str, float] = field(default_factory=dict)
    n_points: int = 1024

    def validate(self) -> None:
        if self.category not in CATEGORIES:
            raise BadSpec(f"unknown category {self.category!r}")
        if self.n_points < 8:
            raise BadSpec(f"too few surface samples: {self.n_points}")
        if any(v <= 0 for v in self.params.values()):
            raise BadSpec(f"dimensions must be positive: {self.params}")


def sample_shape_spec(category: str, rng: np.random.Generator,
                      n_points: int = 1024) -> ShapeSpec:
    """Random within-category dimensions, deterministically from ``rng``."""
    if category == "box":
        # distinct edge lengths keep the box's 180-degree flips
        # geometrically inequivalent in aspect, not just in the marker
        while True:
            dims = np.sort(rng.uniform(0.4, 1.0, 3))[::-1]
            if dims[0] > 1.15 * dims[1] and dims[1] > 1.15 * dims[2]:
                break
        params = {"w": dims[0], "h": dims[1], "depth": dims[2]}
    elif category == "cylinder":
        params = {"r": rng.uniform(0.2, 0.35), "h": rng.uniform(0.7, 1.0)}
    elif category == "mug":
        params = {"r": rng.uniform(0.25, 0.38), "h": rng.uniform(0.6, 0.9)}
    elif category == "lbracket":
        params = {
            "w": rng.uniform(0.6, 1.0),
            "h": rng.uniform(0.6, 1.0),
            "t": rng.uniform(0.18, 0.3),
            "depth": rng.uniform(0.3, 0.6),
        }
    else:
        raise BadSpec(f"unknown category {category!r}")
    return ShapeSpec(category, params, n_points)


def generate_shape(spec: ShapeSpec, rng: np.random.Generator):
    """Sample the surface; returns (points, unit normals, canonical size).

    Points and extents are normalized so the bounding-box diagonal is 1 and
    the box center is the origin; normals are unaffected by that similarity.
    """
    spec.validate()
    builder = {
        "box": _box,
        "cylinder": _cylinder,
        "mug": _mug,
        "lbracket": _lbracket,
    }[spec.category]
    points, normals, lo, hi = builder(spec, rng)
    center = (lo + hi) / 2.0
    extents = hi - lo
    diag = float(np.linalg.norm(extents))
    points = (points - center) / diag
    size = extents / diag
    return points, normals, size


def _pick_faces(rng, areas: np.ndarray, n: int) -> np.ndarray:
    return rng.choice(len(areas), size=n, p=areas / areas.sum())


def _box(spec: ShapeSpec, rng):
    w, h, d = spec.params["w"], spec.params["h"], spec.params["depth"]
    n = spec.n_points
    n_marker = max(1, int(round(0.12 * n)))

    # faces: +x, -x, +y, -y, +z, -z
    areas = np.array([h * d, h * d, w * d, w * d, w * h, w * h])
    half = np.array([w, h, d]) / 2.0
    axes = [0, 0, 1, 1, 2, 2]
    signs = [1, -1, 1, -1, 1, -1]

    def face_points(count, face, patch=False):
        axis, sign = axes[face], signs[face]
        others = [i for i in range(3) if i != axis]
        pts = np.empty((count, 3))
        pts[:, axis] = sign * half[axis]
        for o in others:
            if patch:
                # marker patch hugs the (+,+,+) corner on adjacent faces
                pts[:, o] = half[o] * rng.uniform(0.5, 1.0, count)
            else:
                pts[:, o] = rng.uniform(-half[o], half[o], count)
        nrm = np.zeros((count, 3))
        nrm[:, axis] = sign
        return pts, nrm

    faces = _pick_faces(rng, areas, n - n_marker)
    pts, nrm = [], []
    for face in range(6):
        count = int((faces == face).sum())
        if count:
            p, m = face_points(count, face)
            pts.append(p)
            nrm.append(m)
    marker_faces = rng.integers(0, 3, n_marker) * 2  # +x, +y, +z faces
    for face in (0, 2, 4):
        count = int((marker_faces == face).sum())
        if count:
            p, m = face_points(count, face, patch=True)
            pts.append(p)
            nrm.append(m)
    points = np.concatenate(pts)
    normals = np.concatenate(nrm)
    return points, normals, -half, half


def _cylinder_surface(r, h, n, rng):
    lateral = 2 * np.pi * r * h
    cap = np.pi * r * r
    areas = np.array([lateral, cap, cap])
    part = _pick_faces(rng, areas, n)
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    theta = rng.uniform(0, 2 * np.pi, n)
    lat = part == 0
    pts[lat] = np.stack(
        [r * np.cos(theta[lat]), r * np.sin(theta[lat]),
         rng.uniform(-h / 2, h / 2, int(lat.sum()))], axis=1
    )
    nrm[lat] = np.stack(
        [np.cos(theta[lat]), np.sin(theta[lat]), np.zeros(int(lat.sum()))], axis=1
    )
    for which, sign in ((1, 1.0), (2, -1.0)):
        m = part == which
        count = int(m.sum())
        rad = r * np.sqrt(rng.uniform(0, 1, count))
        pts[m] = np.stack(
            [rad * np.cos(theta[m]), rad * np.sin(theta[m]),
             np.full(count, sign * h / 2)], axis=1
        )
        nrm[m] = np.stack(
            [np.zeros(count), np.zeros(count), np.full(count, sign)], axis=1
        )
    return pts, nrm


def _cylinder(spec: ShapeSpec, rng):
    r, h = spec.params["r"], spec.params["h"]
    pts, nrm = _cylinder_surface(r, h, spec.n_points, rng)
    lo = np.array([-r, -r, -h / 2])
    return pts, nrm, lo, -lo


def _mug(spec: ShapeSpec, rng):
    r, h = spec.params["r"], spec.params["h"]
    arc_r = 0.30 * h       # handle arc radius
    tube_r = 0.11 * r      # handle tube radius
    z_off = 0.12 * h       # vertical offset breaks the flip symmetry
    n = spec.n_points

    body_area = 2 * np.pi * r * h + 2 * np.pi * r * r
    handle_area = np.pi * arc_r * 2 * np.pi * tube_r  # half torus
    n_handle = max(8, int(round(n * handle_area / (body_area + handle_area))))
    n_body = n - n_handle

    body_pts, body_nrm = _cylinder_surface(r, h, n_body, rng)

    # handle: half-torus arc in the xz-plane, bulging toward +x,
    # ring center shifted up by z_off
    phi = rng.uniform(-np.pi / 2, np.pi / 2, n_handle)
    # tube angle with area weight (arc_r + tube_r*cos(psi)) via rejection
    psi = np.empty(n_handle)
    filled = 0
    while filled < n_handle:
        cand = rng.uniform(-np.pi, np.pi, 2 * (n_handle - filled))
        accept = rng.uniform(0, 1, cand.size) < (
            (arc_r + tube_r * np.cos(cand)) / (arc_r + tube_r)
        )
        take = cand[accept][: n_handle - filled]
        psi[filled:filled + take.size] = take
        filled += take.size

    ring = np.stack(
        [r + arc_r * np.cos(phi), np.zeros(n_handle), z_off + arc_r * np.sin(phi)],
        axis=1,
    )
    radial = np.stack([np.cos(phi), np.zeros(n_handle), np.sin(phi)], axis=1)
    binormal = np.array([0.0, 1.0, 0.0])
    handle_nrm = np.cos(psi)[:, None] * radial + np.sin(psi)[:, None] * binormal
    handle_pts = ring + tube_r * handle_nrm

    pts = np.concatenate([body_pts, handle_pts])
    nrm = np.concatenate([body_nrm, handle_nrm])
    lo = np.array([-r, -r, -h / 2])
    hi = np.array([r + arc_r + tube_r, r, h / 2])
    return pts, nrm, lo, hi


def _lbracket(spec: ShapeSpec, rng):
    w, h, t, d = (spec.params[k] for k in ("w", "h", "t", "depth"))
    if t >= min(w, h):
        raise BadSpec(f"bracket thickness {t} must be below w={w}, h={h}")
    n = spec.n_points

    # L cross-section polygon, counterclockwise
    poly = np.array([[0, 0], [w, 0], [w, t], [t, t], [t, h], [0, h]], dtype=float)
    cap_area = w * t + t * (h - t)
    edges = list(zip(poly, np.roll(poly, -1, axis=0)))
    edge_lens = np.array([np.linalg.norm(b - a) for a, b in edges])
    areas = np.concatenate([edge_lens * d, [cap_area, cap_area]])
    part = _pick_faces(rng, areas, n)

    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    for e, (a, b) in enumerate(edges):
        m = part == e
        count = int(m.sum())
        if not count:
            continue
        u = rng.uniform(0, 1, count)
        xy = a[None, :] + u[:, None] * (b - a)[None, :]
        pts[m, 0], pts[m, 1] = xy[:, 0], xy[:, 1]
        pts[m, 2] = rng.uniform(-d / 2, d / 2, count)
        tangent = (b - a) / np.linalg.norm(b - a)
        nrm[m] = np.array([tangent[1], -tangent[0], 0.0])  # outward for CCW polygon
    for which, sign in ((len(edges), 1.0), (len(edges) + 1, -1.0)):
        m = part == which
        count = int(m.sum())
        if not count:
            continue
        # rejection-sample the L cross-section from its bounding rectangle
        got = 0
        xy = np.empty((count, 2))
        while got < count:
            cand = rng.uniform(0, 1, (2 * (count - got), 2)) * np.array([w, h])
            inside = (cand[:, 1] <= t) | (cand[:, 0] <= t)
            take = cand[inside][: count - got]
            xy[got:got + take.shape[0]] = take
            got += take.shape[0]
        pts[m, 0], pts[m, 1] = xy[:, 0], xy[:, 1]
        pts[m, 2] = sign * d / 2
        nrm[m] = np.array([0.0, 0.0, sign])
    lo = np.array([0.0, 0.0, -d / 2])
    hi = np.array([w, h, d / 2])
    return pts, nrm, lo, hi
