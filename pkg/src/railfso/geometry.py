"""Track, base-station, and mirror-array geometry.

Coordinate frame: x runs along the track, y is the lateral offset away from
the rail, z is height.  Each base station stands on a pole beside the track
at ``(0, lateral_offset, pole_height)`` for its own serving period, the
train-roof detector rides at ``(x, 0, roof_height)``, and the mirror array
hangs in the y-z plane just down-track of the base station, centered at
``position``.

Two lateral conventions coexist deliberately: the direct-link distance
helper uses the flat two-parameter form (fixed cross-track drop plus the
lateral offset growing with travel), while the mirror-array frame above
resolves the full three-dimensional layout.  The planner uses each where it
is defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Invalid geometric configuration or query."""


@dataclass(frozen=True)
class TrackLayout:
    """Static deployment geometry for one serving period.

    ``l_d`` is the cross-track drop used by the direct-link distance form,
    ``l_0`` the lateral offset of the base station from the track, ``l_b``
    the leading stretch served by the direct link, ``l_m`` the stretch
    served by the mirror array, and ``bs_spacing`` the full period between
    consecutive base stations.  ``v_hst`` is the train speed in m/s and
    ``psi`` the transmit beam divergence half-angle in radians.
    """

    l_d: float = 2.5
    l_0: float = 8.0
    l_b: float = 50.0
    l_m: float = 950.0
    v_hst: float = 300.0 / 3.6
    psi: float = math.radians(3.5)
    bs_spacing: float = 1000.0
    pole_height: float = 5.0
    roof_height: float = 4.0

    def __post_init__(self):
        for name in ("l_d", "l_0", "l_b", "l_m", "v_hst", "bs_spacing", "pole_height", "roof_height"):
            if getattr(self, name) <= 0.0:
                raise GeometryError(f"{name} must be positive")
        if not 0.0 < self.psi < math.pi / 2.0:
            raise GeometryError("psi must lie in (0, pi/2)")
        if self.l_b + self.l_m > self.bs_spacing * (1.0 + 1e-12):
            raise GeometryError("l_b + l_m must not exceed bs_spacing")

    @property
    def period(self) -> float:
        """Time to traverse one serving period, in seconds."""
        return self.bs_spacing / self.v_hst


@dataclass(frozen=True)
class RisLayout:
    """Mirror-array panel: ``n_m`` cells, each an ``n_k`` x ``n_l`` element grid.

    ``a_r`` is the element aperture radius (elements are packed at pitch
    ``a_r``), ``a_p`` the receiver aperture radius, ``rho`` the element
    reflection efficiency, and ``position`` the panel center in the frame
    described in the module docstring.
    """

    n_k: int = 10
    n_l: int = 10
    n_m: int = 25
    a_r: float = 0.025
    a_p: float = 0.20
    rho: float = 0.95
    position: tuple = (0.5, 0.0, 6.0)

    def __post_init__(self):
        for name in ("n_k", "n_l", "n_m"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise GeometryError(f"{name} must be a positive integer")
        if self.a_r <= 0.0 or self.a_p <= 0.0:
            raise GeometryError("aperture radii must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise GeometryError("rho must lie in (0, 1]")
        if len(self.position) != 3:
            raise GeometryError("position must be a 3-vector")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def elements_per_cell(self) -> int:
        return self.n_k * self.n_l

    @property
    def total_elements(self) -> int:
        return self.n_m * self.n_k * self.n_l

    @property
    def relay_elements(self) -> int:
        """Element count of the single-mirror relay baseline.

        The relay mirror matches the receiver aperture, so it stands in for
        ``round((a_p / a_r)**2)`` array elements.
        """
        return int(round((self.a_p / self.a_r) ** 2))


@dataclass(frozen=True)
class ElementGeometry:
    """Resolved geometry of one element for one detector position."""

    d_in: float
    d_out: float
    theta_in: float
    theta_out: float

    def __post_init__(self):
        if self.d_in <= 0.0 or self.d_out <= 0.0:
            raise GeometryError("distances must be positive")
        for name in ("theta_in", "theta_out"):
            v = getattr(self, name)
            if not 0.0 <= v < math.pi / 2.0:
                raise GeometryError(f"{name} must lie in [0, pi/2)")

    @property
    def d_e(self) -> float:
        """End-to-end propagation distance through the element."""
        return self.d_in + self.d_out


@dataclass(frozen=True)
class ServingSegment:
    """Which serving condition applies at a queried time.

    ``kind`` is one of ``"C1_direct"`` (direct link), ``"C2_for_grid"``
    (fixed-orientation array, also used by the relay baseline), or
    ``"C3_dor"`` (dynamically re-aimed array).  ``active_cell`` is the
    1-based fixed-grid cell serving a ``C2_for_grid`` segment, ``t_b`` the
    period start, ``t_bm`` the direct-to-array handover instant, ``t_next``
    the next period start, and ``t_m`` the dwell time of one grid cell.
    """

    kind: str
    active_cell: int | None
    t_b: float
    t_bm: float
    t_next: float
    t_m: float


SEGMENT_KINDS = ("C1_direct", "C2_for_grid", "C3_dor")
STRATEGIES = ("direct", "for", "dor", "relay")


def direct_distance(layout: TrackLayout, t: float, t_b: float) -> float:
    """Base-station-to-detector distance on the direct link at time ``t``.

    ``t_b`` is the instant the train passed the serving base station's
    period start; querying earlier times is a domain error.
    """
    if t < t_b:
        raise GeometryError("time precedes the serving period start")
    x = (t - t_b) * layout.v_hst
    return math.hypot(layout.l_d, layout.l_0 + x)


def segment_at(layout: TrackLayout, ris: RisLayout, t: float, strategy: str) -> ServingSegment:
    """Map a time onto the periodic serving pattern for a strategy.

    The pattern repeats every ``bs_spacing / v_hst`` seconds: a direct-link
    stretch of length ``l_b`` and then the array-served stretch, which for
    the fixed-orientation strategies is divided into ``n_m`` equal cells.
    A position exactly on a cell boundary belongs to the lower-index cell.
    """
    if strategy not in STRATEGIES:
        raise GeometryError(f"unknown strategy {strategy!r}")
    if t < 0.0:
        raise GeometryError("time must be nonnegative")
    period = layout.period
    k = math.floor(t / period)
    t_b = k * period
    x = (t - t_b) * layout.v_hst
    t_bm = t_b + layout.l_b / layout.v_hst
    t_next = t_b + period
    t_m = layout.l_m / (ris.n_m * layout.v_hst)

    if strategy == "direct" or x < layout.l_b:
        return ServingSegment("C1_direct", None, t_b, t_bm, t_next, t_m)
    if strategy == "dor":
        return ServingSegment("C3_dor", None, t_b, t_bm, t_next, t_m)
    return ServingSegment(
        "C2_for_grid", active_cell_at(layout, ris, x), t_b, t_bm, t_next, t_m
    )


def active_cell_at(layout: TrackLayout, ris: RisLayout, x: float) -> int:
    """1-based fixed-grid cell serving track offset ``x`` within one period.

    ``x`` must lie at or past the direct-link stretch.  A position exactly
    on a cell boundary belongs to the lower-index cell, and positions past
    the array-served stretch stay with the last cell.
    """
    if x < layout.l_b:
        raise GeometryError("offset lies in the direct-link stretch")
    cell_len = layout.l_m / ris.n_m
    return max(1, min(ris.n_m, math.ceil((x - layout.l_b) / cell_len)))


def cell_grid_aim(layout: TrackLayout, ris: RisLayout, cell: int) -> float:
    """Track position the fixed-orientation array points cell ``cell`` at.

    Each cell covers an equal slice of the array-served stretch and is aimed
    at the middle of its own slice.
    """
    if not 1 <= cell <= ris.n_m:
        raise GeometryError(f"cell must lie in [1, {ris.n_m}]")
    cell_len = layout.l_m / ris.n_m
    return layout.l_b + (cell - 0.5) * cell_len


def element_centers(ris: RisLayout) -> np.ndarray:
    """Element center coordinates, shape ``(n_m, n_k * n_l, 3)``.

    Cells tile a near-square grid in the y-z plane around the panel center;
    inside each cell, elements tile an ``n_k`` x ``n_l`` grid at pitch
    ``a_r``.  Cell index order is row-major, matching the 1-based cell
    numbering used elsewhere.
    """
    pitch = ris.a_r
    cell_w = ris.n_k * pitch
    cell_h = ris.n_l * pitch
    ncols = math.ceil(math.sqrt(ris.n_m))
    nrows = math.ceil(ris.n_m / ncols)

    cx, cy, cz = ris.position
    cells = []
    for idx in range(ris.n_m):
        row, col = divmod(idx, ncols)
        oy = (col - (ncols - 1) / 2.0) * cell_w
        oz = (row - (nrows - 1) / 2.0) * cell_h
        ky = (np.arange(ris.n_k) - (ris.n_k - 1) / 2.0) * pitch
        lz = (np.arange(ris.n_l) - (ris.n_l - 1) / 2.0) * pitch
        yy, zz = np.meshgrid(ky, lz, indexing="ij")
        pts = np.stack(
            [np.full(yy.size, cx), cy + oy + yy.ravel(), cz + oz + zz.ravel()], axis=1
        )
        cells.append(pts)
    return np.stack(cells, axis=0)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def element_path_geometry(
    layout: TrackLayout,
    ris: RisLayout,
    detector_pos,
    cells=None,
    aim_pos=None,
):
    """Vectorized element geometry for a set of cells and one detector spot.

    Each element reflects specularly about its surface normal; the normal is
    set so the incoming beam bounces exactly toward ``aim_pos`` (the
    detector itself when ``aim_pos`` is None, as the re-aimed strategy
    does).  Returns a dict of arrays over the selected elements: ``d_in``,
    ``d_out``, ``d_e``, ``cos_in``, ``cos_out``.
    """
    centers = element_centers(ris)
    if cells is None:
        pts = centers.reshape(-1, 3)
    else:
        idx = np.atleast_1d(np.asarray(cells, dtype=int)) - 1
        if np.any(idx < 0) or np.any(idx >= ris.n_m):
            raise GeometryError("cell index out of range")
        pts = centers[idx].reshape(-1, 3)

    bs = np.array([0.0, layout.l_0, layout.pole_height])
    det = np.asarray(detector_pos, dtype=float)
    aim = det if aim_pos is None else np.asarray(aim_pos, dtype=float)

    v_in = pts - bs
    d_in = np.linalg.norm(v_in, axis=1)
    u_in = v_in / d_in[:, None]

    v_out = det - pts
    d_out = np.linalg.norm(v_out, axis=1)
    u_out = v_out / d_out[:, None]

    u_aim = _unit(aim - pts)
    normal = _unit(u_aim - u_in)

    cos_in = np.clip(-(u_in * normal).sum(axis=1), 1e-9, 1.0)
    cos_out = np.clip((u_out * normal).sum(axis=1), 1e-9, 1.0)
    return {
        "d_in": d_in,
        "d_out": d_out,
        "d_e": d_in + d_out,
        "cos_in": cos_in,
        "cos_out": cos_out,
    }


def element_path_geometry_multi(
    layout: TrackLayout,
    ris: RisLayout,
    detector_pos,
    cells=None,
    aim_pos=None,
):
    """Element geometry for many detector positions at once.

    ``detector_pos`` has shape ``(P, 3)``; ``cells`` is None (whole panel)
    or a length-``P`` sequence of 1-based cell indices, one serving cell per
    position; ``aim_pos`` is None (aim at each detector) or ``(P, 3)`` aim
    points.  Returns the same dict as :func:`element_path_geometry` with
    arrays of shape ``(P, E)``.
    """
    centers = element_centers(ris)
    det = np.asarray(detector_pos, dtype=float).reshape(-1, 3)
    if cells is None:
        pts = np.broadcast_to(centers.reshape(-1, 3), (det.shape[0],) + centers.reshape(-1, 3).shape)
    else:
        idx = np.asarray(cells, dtype=int) - 1
        if idx.shape != (det.shape[0],):
            raise GeometryError("cells must give one serving cell per position")
        if np.any(idx < 0) or np.any(idx >= ris.n_m):
            raise GeometryError("cell index out of range")
        pts = centers[idx]

    bs = np.array([0.0, layout.l_0, layout.pole_height])
    aim = det if aim_pos is None else np.asarray(aim_pos, dtype=float).reshape(-1, 3)

    v_in = pts - bs
    d_in = np.linalg.norm(v_in, axis=2)
    u_in = v_in / d_in[..., None]

    v_out = det[:, None, :] - pts
    d_out = np.linalg.norm(v_out, axis=2)
    u_out = v_out / d_out[..., None]

    u_aim = _unit(aim[:, None, :] - pts)
    normal = _unit(u_aim - u_in)

    cos_in = np.clip(-(u_in * normal).sum(axis=2), 1e-9, 1.0)
    cos_out = np.clip((u_out * normal).sum(axis=2), 1e-9, 1.0)
    return {
        "d_in": d_in,
        "d_out": d_out,
        "d_e": d_in + d_out,
        "cos_in": cos_in,
        "cos_out": cos_out,
    }


def element_geometry(
    layout: TrackLayout,
    ris: RisLayout,
    cell: int,
    k: int,
    l: int,
    detector_pos,
    aim_pos=None,
    normal=None,
) -> ElementGeometry:
    """Resolved geometry of one element toward one detector position.

    ``cell``, ``k``, ``l`` are 1-based indices into the panel.  By default
    the element normal bisects the incoming ray and the ray toward
    ``aim_pos`` (the detector when None); passing ``normal`` overrides the
    aiming rule with an explicit unit normal.
    """
    if not 1 <= cell <= ris.n_m:
        raise GeometryError(f"cell must lie in [1, {ris.n_m}]")
    if not 1 <= k <= ris.n_k or not 1 <= l <= ris.n_l:
        raise GeometryError("element index out of range")

    centers = element_centers(ris)
    pt = centers[cell - 1, (k - 1) * ris.n_l + (l - 1)]

    bs = np.array([0.0, layout.l_0, layout.pole_height])
    det = np.asarray(detector_pos, dtype=float)

    v_in = pt - bs
    d_in = float(np.linalg.norm(v_in))
    u_in = v_in / d_in
    v_out = det - pt
    d_out = float(np.linalg.norm(v_out))
    u_out = v_out / d_out

    if normal is not None:
        nrm = _unit(np.asarray(normal, dtype=float))
    else:
        aim = det if aim_pos is None else np.asarray(aim_pos, dtype=float)
        nrm = _unit(_unit(aim - pt) - u_in)

    cos_in = float(np.clip(-np.dot(u_in, nrm), -1.0, 1.0))
    cos_out = float(np.clip(np.dot(u_out, nrm), -1.0, 1.0))
    if cos_in <= 0.0 or cos_out <= 0.0:
        raise GeometryError("detector or base station lies behind the element face")
    return ElementGeometry(
        d_in=d_in,
        d_out=d_out,
        theta_in=math.acos(min(cos_in, 1.0)),
        theta_out=math.acos(min(cos_out, 1.0)),
    )


def detector_position(layout: TrackLayout, x: float) -> np.ndarray:
    """Detector coordinates at track position ``x`` within the period."""
    return np.array([x, 0.0, layout.roof_height])
