"""Hexagonal 7-cell layout with wraparound, UE trajectories and distances.

The seven base stations form one hexagonal cluster: cell 0 at the origin and
cells 1..6 at distance `inter_site_distance` at angles 30 + 60k degrees.
Wraparound replicates the cluster on its own hexagonal lattice (generators of
length sqrt(7)*ISD), so the playground is a torus and a UE never leaves
coverage. All positions are kept folded into the fundamental domain (the
Voronoi cell of the cluster lattice around the origin); wrapped distances are
the minimum over the identity image and the 6 nearest cluster translations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CELLS = 7


def cell_centers(isd: float) -> np.ndarray:
    """Return the (7, 2) base-station positions for the given inter-site distance."""
    if isd <= 0:
        raise ValueError(f"inter-site distance must be positive, got {isd}")
    angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
    centers = np.zeros((N_CELLS, 2))
    centers[1:, 0] = isd * np.cos(angles)
    centers[1:, 1] = isd * np.sin(angles)
    return centers


def _cluster_translations(isd: float) -> np.ndarray:
    # Shortest vectors of the 7-cell cluster lattice: rotations of isd*(sqrt(3), 2).
    base = np.array([np.sqrt(3.0), 2.0]) * isd
    out = np.zeros((6, 2))
    for k in range(6):
        a = np.deg2rad(60.0 * k)
        c, s = np.cos(a), np.sin(a)
        out[k] = (c * base[0] - s * base[1], s * base[0] + c * base[1])
    return out


@dataclass(frozen=True)
class CellLayout:
    """Immutable 7-cell hexagonal layout with wraparound."""

    inter_site_distance: float = 400.0
    bs_height: float = 25.0
    centers: np.ndarray = field(init=False, repr=False)
    wrap_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        isd = self.inter_site_distance
        object.__setattr__(self, "centers", cell_centers(isd))
        offsets = np.vstack([np.zeros((1, 2)), _cluster_translations(isd)])
        object.__setattr__(self, "wrap_offsets", offsets)
        # Images of every center under every wrap translation: (7 images, 7 cells, 2).
        object.__setattr__(self, "_center_images", offsets[:, None, :] + self.centers[None, :, :])
        basis = np.column_stack([offsets[1], offsets[2]])
        object.__setattr__(self, "_basis", basis)
        object.__setattr__(self, "_basis_inv", np.linalg.inv(basis))
        shifts = np.array([[a, b] for a in (0.0, 1.0, -1.0) for b in (0.0, 1.0, -1.0)])
        object.__setattr__(self, "_fold_shifts", shifts)

    @property
    def cell_radius(self) -> float:
        """Circumradius of one hexagonal cell."""
        return self.inter_site_distance / np.sqrt(3.0)

    def fold(self, pos: np.ndarray) -> np.ndarray:
        """Map positions into the fundamental domain of the cluster lattice.

        Subtracts the nearest cluster-lattice point; works on (..., 2) arrays.
        """
        pos = np.asarray(pos, dtype=float)
        frac = pos @ self._basis_inv.T
        cand = (np.floor(frac)[..., None, :] + self._fold_shifts) @ self._basis.T
        diff = pos[..., None, :] - cand  # (..., 9, 2)
        d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        best = np.argmin(d2, axis=-1)
        flat = diff.reshape(-1, 9, 2)
        picked = flat[np.arange(flat.shape[0]), best.ravel()]
        return picked.reshape(pos.shape)

    def d2d_to_centers(self, pos: np.ndarray) -> np.ndarray:
        """Wrapped planar distance from positions (..., 2) to all 7 centers -> (..., 7)."""
        pos = np.asarray(pos, dtype=float)
        diff = pos[..., None, None, :] - self._center_images  # (..., 7 images, 7 cells, 2)
        d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        return np.sqrt(d2.min(axis=-2))

    def assign_cell(self, pos: np.ndarray) -> np.ndarray:
        """Nearest-center cell index under wraparound; ties go to the lowest index."""
        return np.argmin(self.d2d_to_centers(pos), axis=-1)


def wrapped_distance_2d(a: np.ndarray, b: np.ndarray, layout: CellLayout) -> np.ndarray:
    """Toroidal planar distance: min over the 7 wrap images of b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a[..., None, :] - (b[..., None, :] + layout.wrap_offsets)
    return np.sqrt(np.sum(diff * diff, axis=-1).min(axis=-1))


def d3d(ue_pos: np.ndarray, ue_height: float, bs_index: int, layout: CellLayout) -> float:
    """3D distance between a UE and base station `bs_index` (wrapped in the plane)."""
    if not 0 <= bs_index < N_CELLS:
        raise ValueError(f"bs_index must be in [0, {N_CELLS}), got {bs_index}")
    d2d = wrapped_distance_2d(ue_pos, layout.centers[bs_index], layout)
    return np.sqrt(d2d**2 + (layout.bs_height - ue_height) ** 2)


@dataclass(frozen=True)
class Trajectory:
    """Fixed linear trajectory: origin, unit direction, speed in [1, 5] m/s."""

    origin: tuple[float, float]
    direction: tuple[float, float]
    speed: float
    start_time: float = 0.0

    def __post_init__(self):
        norm = float(np.hypot(*self.direction))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"direction must have unit norm, got |d| = {norm}")
        if not 1.0 <= self.speed <= 5.0:
            raise ValueError(f"speed must lie in [1, 5] m/s, got {self.speed}")


def position_at(traj: Trajectory, t: float, layout: CellLayout) -> np.ndarray:
    """UE position at time t, folded into the fundamental domain."""
    if t < traj.start_time:
        raise ValueError(f"t = {t} precedes trajectory start {traj.start_time}")
    raw = np.asarray(traj.origin, dtype=float) + traj.speed * (t - traj.start_time) * np.asarray(
        traj.direction, dtype=float
    )
    return layout.fold(raw)


def random_trajectory(origin, rng, start_time: float = 0.0) -> Trajectory:
    """Direction uniform on the circle, speed Unif[1, 5] m/s."""
    angle = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(1.0, 5.0)
    return Trajectory(
        origin=(float(origin[0]), float(origin[1])),
        direction=(float(np.cos(angle)), float(np.sin(angle))),
        speed=float(speed),
        start_time=start_time,
    )


def random_point_in_cell(cell: int, layout: CellLayout, rng) -> np.ndarray:
    """Uniform point over the hexagonal area of one cell (rejection sampling)."""
    center = layout.centers[cell]
    r = layout.cell_radius
    while True:
        p = center + rng.uniform(-r, r, size=2)
        if layout.assign_cell(layout.fold(p)) == cell:
            return layout.fold(p)
