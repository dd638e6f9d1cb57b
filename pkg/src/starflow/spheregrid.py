"""Cell-centered latitude grids on the sphere and their difference stencils.

Nodes sit at θ_i = (i + 1/2)Δθ with Δθ = π/m_theta, so neither pole carries a
node and the chart metric e = dθ² + sin²θ dφ² stays invertible on the grid.
Two layouts are supported:

- ``axisym``: profiles γ(θ) on S^n that are rotation-invariant about the polar
  axis; a single θ column represents the whole sphere.
- ``full_s2``: the full (θ, φ) chart of S², φ_j = jΔφ, Δφ = 2π/m_phi, with
  m_phi even.

Crossing a pole lands on the antipodal meridian, so θ-ghost rows are filled by
the mirrored row shifted half a period in φ (for axisym profiles the shift is
the identity).  With those ghosts every interior stencil is plain second-order
central differencing; there are no one-sided formulas anywhere.

Covariant θφ-chart Hessians use the sphere Christoffels
Γ^θ_{φφ} = -sinθ cosθ and Γ^φ_{θφ} = cotθ.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "axisym_grid",
    "full_s2_grid",
    "grids_compatible",
    "ScalarField",
    "pad_theta",
    "grad",
    "grad_norm_sq",
    "covariant_hessian",
    "min_metric_spacing",
    "write_field_csv",
    "read_field_csv",
]

FIELD_CSV_MAGIC = "starflow-field-v1"


@dataclass
class Grid:
    """Node locations and spacings; treat instances as immutable."""

    mode: str
    n: int
    m_theta: int
    m_phi: int
    theta: np.ndarray = field(repr=False, default=None)
    phi: np.ndarray = field(repr=False, default=None)
    dtheta: float = 0.0
    dphi: float = 0.0

    def __post_init__(self):
        if self.mode not in ("axisym", "full_s2"):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.m_theta < 8:
            raise ValueError("m_theta must be at least 8")
        if self.n < 2:
            raise ValueError("hypersurface dimension n must be at least 2")
        self.dtheta = np.pi / self.m_theta
        self.theta = (np.arange(self.m_theta) + 0.5) * self.dtheta
        if self.mode == "full_s2":
            if self.n != 2:
                raise ValueError("full_s2 grids are two-dimensional: n must be 2")
            if self.m_phi < 8 or self.m_phi % 2:
                raise ValueError("m_phi must be even and at least 8")
            self.dphi = 2.0 * np.pi / self.m_phi
            self.phi = np.arange(self.m_phi) * self.dphi
        else:
            if self.m_phi:
                raise ValueError("axisym grids carry no phi direction")
            self.phi = None
        # trig tables, broadcast-ready against field arrays
        st, ct = np.sin(self.theta), np.cos(self.theta)
        if self.mode == "full_s2":
            st, ct = st[:, None], ct[:, None]
        self.sin_theta = st
        self.cos_theta = ct
        self.cot_theta = ct / st

    @property
    def shape(self) -> tuple:
        if self.mode == "full_s2":
            return (self.m_theta, self.m_phi)
        return (self.m_theta,)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))


def axisym_grid(n: int, m_theta: int) -> Grid:
    """Rotation-invariant profile grid on S^n."""
    return Grid(mode="axisym", n=n, m_theta=m_theta, m_phi=0)


def full_s2_grid(m_theta: int, m_phi: int) -> Grid:
    """Full (θ, φ) chart of S²."""
    return Grid(mode="full_s2", n=2, m_theta=m_theta, m_phi=m_phi)


def grids_compatible(a: Grid, b: Grid) -> bool:
    return (
        a.mode == b.mode
        and a.n == b.n
        and a.m_theta == b.m_theta
        and a.m_phi == b.m_phi
    )


@dataclass
class ScalarField:
    """A scalar sampled at every grid node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )


def _check_shape(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f


def pad_theta(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Append one ghost row beyond each pole.

    Row -1 mirrors row 0 across the north pole, row m_theta mirrors the last
    row across the south pole; on full_s2 the mirrored rows are rolled by half
    a period in φ, which is what stepping over a pole does to the meridian.
    """
    f = _check_shape(grid, f)
    if grid.mode == "axisym":
        return np.concatenate(([f[0]], f, [f[-1]]))
    half = grid.m_phi // 2
    north = np.roll(f[0], half)[None, :]
    south = np.roll(f[-1], half)[None, :]
    return np.concatenate((north, f, south), axis=0)


def grad(grid: Grid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chart partials (∂_θ f, ∂_φ f) by central differences.

    The φ component is identically zero on axisym grids.
    """
    f = _check_shape(grid, f)
    p = pad_theta(grid, f)
    f_t = (p[2:] - p[:-2]) / (2.0 * grid.dtheta)
    if grid.mode == "axisym":
        return f_t, np.zeros_like(f)
    f_p = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * grid.dphi)
    return f_t, f_p


def grad_norm_sq(grid: Grid, f_t: np.ndarray, f_p: np.ndarray) -> np.ndarray:
    """|Df|² in the round chart metric: f_θ² + f_φ²/sin²θ."""
    if grid.mode == "axisym":
        return f_t * f_t
    return f_t * f_t + (f_p / grid.sin_theta) ** 2


def covariant_hessian(
    grid: Grid, f: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariant chart Hessian (f_{;θθ}, f_{;θφ}, f_{;φφ}) on the round sphere.

        f_{;θθ} = ∂²_θ f
        f_{;θφ} = ∂_θ∂_φ f - cotθ ∂_φ f
        f_{;φφ} = ∂²_φ f + sinθ cosθ ∂_θ f

    Axisym grids return the same triple with ∂_φ terms dropped; the φφ slot is
    then sinθ cosθ ∂_θ f, the S² chart value shared by every parallel direction.
    """
    f = _check_shape(grid, f)
    p = pad_theta(grid, f)
    dt = grid.dtheta
    f_tt = (p[2:] - 2.0 * f + p[:-2]) / (dt * dt)
    f_t = (p[2:] - p[:-2]) / (2.0 * dt)
    if grid.mode == "axisym":
        h_pp = grid.sin_theta * grid.cos_theta * f_t
        return f_tt, np.zeros_like(f), h_pp
    dp = grid.dphi
    f_p = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * dp)
    f_pp = (np.roll(f, -1, axis=1) - 2.0 * f + np.roll(f, 1, axis=1)) / (dp * dp)
    f_tp = (np.roll(f_t, -1, axis=1) - np.roll(f_t, 1, axis=1)) / (2.0 * dp)
    h_tt = f_tt
    h_tp = f_tp - grid.cot_theta * f_p
    h_pp = f_pp + grid.sin_theta * grid.cos_theta * f_t
    return h_tt, h_tp, h_pp


def min_metric_spacing(grid: Grid, rho: np.ndarray) -> np.ndarray:
    """Per-node smallest physical spacing: ρΔθ, and ρ sinθ Δφ on full_s2."""
    rho = _check_shape(grid, rho)
    s_theta = rho * grid.dtheta
    if grid.mode == "axisym":
        return s_theta
    s_phi = rho * grid.sin_theta * grid.dphi
    return np.minimum(s_theta, s_phi)


# ---------------------------------------------------------------------------
# field CSV round trip


def write_field_csv(path, grid: Grid, values: np.ndarray) -> None:
    """Dump a field as CSV with a metadata comment line for reconstruction."""
    values = _check_shape(grid, values)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# {FIELD_CSV_MAGIC} mode={grid.mode} n={grid.n}"
            f" m_theta={grid.m_theta} m_phi={grid.m_phi}\n"
        )
        writer = csv.writer(fh)
        # repr(float(x)) round-trips doubles exactly; numpy scalar reprs do not
        if grid.mode == "axisym":
            writer.writerow(["theta", "value"])
            for i in range(grid.m_theta):
                writer.writerow([repr(float(grid.theta[i])), repr(float(values[i]))])
        else:
            writer.writerow(["theta", "phi", "value"])
            for i in range(grid.m_theta):
                for j in range(grid.m_phi):
                    writer.writerow(
                        [
                            repr(float(grid.theta[i])),
                            repr(float(grid.phi[j])),
                            repr(float(values[i, j])),
                        ]
                    )


def read_field_csv(path) -> tuple[Grid, np.ndarray]:
    """Rebuild (grid, values) from a file written by write_field_csv."""
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# {FIELD_CSV_MAGIC}"):
            raise ValueError(f"not a {FIELD_CSV_MAGIC} file: {path}")
        meta = dict(tok.split("=") for tok in header.split()[2:])
        grid = Grid(
            mode=meta["mode"],
            n=int(meta["n"]),
            m_theta=int(meta["m_theta"]),
            m_phi=int(meta["m_phi"]),
        )
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    expect_cols = 2 if grid.mode == "axisym" else 3
    body = rows[1:]  # skip column header
    if len(body) != grid.node_count:
        raise ValueError(
            f"expected {grid.node_count} rows, found {len(body)} in {path}"
        )
    values = np.empty(grid.shape)
    if grid.mode == "axisym":
        for i, row in enumerate(body):
            if len(row) != expect_cols:
                raise ValueError(f"malformed row {row!r}")
            values[i] = float(row[1])
    else:
        for idx, row in enumerate(body):
            if len(row) != expect_cols:
                raise ValueError(f"malformed row {row!r}")
            i, j = divmod(idx, grid.m_phi)
            values[i, j] = float(row[2])
    return grid, values
