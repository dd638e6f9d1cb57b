"""The time stepper: evolve γ = log ρ until the curvature residual dies.

The evolution law is

    ∂_t γ = Ψ(Q) - Ψ(1),      Q = G(X, ν) · F(κ)^{-β},

with Ψ either the identity (expanding normalization) or s ↦ -1/s (the
contracting form; the two agree about where the flow is stationary because
both vanish at Q = 1).  Stationary states solve the prescribed-curvature
equation F^β = G.

Stepping is explicit midpoint (RK2) under a parabolic step-size bound

    dt = dt_safety · min over nodes of Δs_min² / (2 n D),
    D  = β · u · Ψ'(Q) · Q · λ_max(∂F/∂κ) / F,

where Δs_min is the smallest physical grid spacing at the node.  There is no
implicit smoothing, no filtering, and no clamping: when curvatures leave the
admissibility cone, or a node stops being star-shaped, the run aborts with a
status saying which guard fired and where.  A run therefore ends in exactly
one of five states: converged, diverged, cone_exit, star_shape_lost, or
time_cap (which also covers detected stalls).

run() is deterministic: identical configs and initial data reproduce
identical histories bit for bit.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .geometry import GeometryState, assemble
from .speed import G_eval, SpeedSpec
from .spheregrid import Grid, min_metric_spacing
from .symfunc import (
    Cone,
    F_eval,
    F_grad,
    cone_failure,
    in_cone,
    natural_cone,
)

__all__ = [
    "PSI_IDENTITY",
    "PSI_NEG_RECIPROCAL",
    "psi_apply",
    "psi_prime",
    "FlowConfig",
    "FlowState",
    "FlowAbort",
    "RunResult",
    "speed_field",
    "cfl_dt",
    "step",
    "run",
    "Constant",
    "Spheroid",
    "Perturbed",
    "initial_gamma",
    "normalized_time_map",
]

PSI_IDENTITY = "identity"
PSI_NEG_RECIPROCAL = "neg_reciprocal"

STATUS_CONVERGED = "converged"
STATUS_DIVERGED = "diverged"
STATUS_CONE_EXIT = "cone_exit"
STATUS_STAR_SHAPE_LOST = "star_shape_lost"
STATUS_TIME_CAP = "time_cap"


def psi_apply(mode: str, s):
    """Ψ(s): identity, or -1/s for the contracting normalization."""
    if mode == PSI_IDENTITY:
        return s
    if mode == PSI_NEG_RECIPROCAL:
        return -1.0 / s
    raise ValueError(f"unknown psi mode {mode!r}")


def psi_prime(mode: str, s):
    """Ψ'(s); strictly positive on s > 0 for both modes."""
    if mode == PSI_IDENTITY:
        return np.ones_like(np.asarray(s, dtype=float))
    if mode == PSI_NEG_RECIPROCAL:
        return 1.0 / (np.asarray(s, dtype=float) ** 2)
    raise ValueError(f"unknown psi mode {mode!r}")


@dataclass
class FlowConfig:
    """Everything run() needs besides the initial profile."""

    grid: Grid
    F: object
    G: SpeedSpec
    beta: float
    psi_mode: str = PSI_IDENTITY
    dt_safety: float = 0.2
    t_max: float = 50.0
    tol_residual: float = 1e-6
    # minimum residual decrease demanded over each stall_window of accepted
    # steps; 0 disables stall detection entirely
    tol_stall: float = 0.0
    cadence: int = 50
    guard: Cone | None = None
    rho_floor: float = 1e-6
    rho_ceil: float = 1e6
    stall_window: int = 200

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.psi_mode not in (PSI_IDENTITY, PSI_NEG_RECIPROCAL):
            raise ValueError(f"unknown psi mode {self.psi_mode!r}")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValueError("dt_safety must lie in (0, 1]")
        if self.cadence < 1:
            raise ValueError("cadence must be a positive step count")
        if self.guard is None:
            self.guard = natural_cone(self.F)
        if self.grid.mode == "axisym" and not self.G.axis_aligned():
            raise ValueError(
                "axisym grids require every anisotropy direction to be the polar axis"
            )


@dataclass(frozen=True)
class FlowState:
    t: float
    step: int
    gamma: np.ndarray


class FlowAbort(RuntimeError):
    """Internal signal carrying the abort status and a human-readable detail."""

    def __init__(self, status: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass
class RunResult:
    status: str
    state: FlowState
    history: list
    residual: float
    steps: int
    wall_seconds: float
    stalled: bool = False
    detail: str = ""


def speed_field(config: FlowConfig, gamma: np.ndarray):
    """Pointwise speed Ψ(Q) - Ψ(1) plus the geometry it was computed from.

    Returns (speed, Q, F values, geometry).  Raises FlowAbort when the profile
    stops being an admissible star-shaped graph; the detail names the first
    offending node.
    """
    grid = config.grid
    geom = assemble(grid, gamma, check=False)
    if not np.all(np.isfinite(geom.kappa)) or np.any(geom.u <= 0.0):
        u_min = float(np.min(geom.u)) if np.all(np.isfinite(geom.u)) else float("nan")
        raise FlowAbort(
            STATUS_STAR_SHAPE_LOST,
            f"non-finite state or u <= 0 (min u = {u_min:.6g})",
        )
    ok = in_cone(geom.kappa, config.guard)
    if not np.all(ok):
        flat = np.asarray(ok).reshape(-1)
        bad = int(np.argmin(flat))
        node = np.unravel_index(bad, grid.shape)
        kappa_bad = geom.kappa.reshape(-1, geom.kappa.shape[-1])[bad]
        raise FlowAbort(
            STATUS_CONE_EXIT,
            f"curvature left {config.guard.describe()} at node {tuple(int(i) for i in node)}: "
            f"{cone_failure(kappa_bad, config.guard)}",
        )
    f_val = F_eval(config.F, geom.kappa, checked=False)
    q = G_eval(config.G, geom.xi, geom.u, geom.rho, checked=False) * f_val ** (
        -config.beta
    )
    speed = psi_apply(config.psi_mode, q) - psi_apply(config.psi_mode, 1.0)
    return speed, q, f_val, geom


def cfl_dt(
    config: FlowConfig, geom: GeometryState, q: np.ndarray, f_val: np.ndarray
) -> float:
    """Parabolic step bound dt = dt_safety · min(Δs_min² / (2 n D))."""
    lam = np.max(F_grad(config.F, geom.kappa, checked=False), axis=-1)
    diff = (
        config.beta
        * geom.u
        * psi_prime(config.psi_mode, q)
        * q
        * lam
        / f_val
    )
    ds = min_metric_spacing(config.grid, geom.rho)
    dt = config.dt_safety * float(np.min(ds * ds / (2.0 * config.grid.n * diff)))
    if not (np.isfinite(dt) and dt > 0.0):
        raise FlowAbort(STATUS_DIVERGED, f"step-size bound degenerated to dt = {dt}")
    return dt


def step(
    config: FlowConfig,
    state: FlowState,
    dt: float,
    k1: np.ndarray | None = None,
) -> FlowState:
    """One explicit midpoint (RK2) update of γ.

    k1, when given, must be the speed field already evaluated at state.gamma;
    passing it avoids recomputing the first stage.
    """
    if k1 is None:
        k1, _, _, _ = speed_field(config, state.gamma)
    half = state.gamma + 0.5 * dt * k1
    k2, _, _, _ = speed_field(config, half)
    return FlowState(t=state.t + dt, step=state.step + 1, gamma=state.gamma + dt * k2)


def run(config: FlowConfig, gamma0: np.ndarray, on_record=None) -> RunResult:
    """Drive the flow from gamma0 until one of the five terminal states.

    The history receives one record at step 0, one every config.cadence
    accepted steps, and one for the final state.  Aborts raised mid-step
    (cone exit, star shape loss) report the last healthy state.  on_record,
    when given, is called as on_record(state, record, geometry) right after
    each history row is appended; it must not mutate anything it is handed.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    if gamma0.shape != config.grid.shape:
        raise ValueError(
            f"initial field shape {gamma0.shape} does not match grid {config.grid.shape}"
        )
    t_start = time.perf_counter()
    state = FlowState(t=0.0, step=0, gamma=gamma0)
    history: list = []
    window: deque = deque(maxlen=config.stall_window + 1)
    last_recorded = -1
    residual = float("inf")
    stalled = False
    detail = ""

    def record(geom, q, f_val, res):
        nonlocal last_recorded
        if state.step != last_recorded:
            history.append(
                diagnostics.snapshot(state.step, state.t, geom, q, f_val, res, config.guard)
            )
            last_recorded = state.step
            if on_record is not None:
                on_record(state, history[-1], geom)

    while True:
        try:
            speed, q, f_val, geom = speed_field(config, state.gamma)
        except FlowAbort as abort:
            status = abort.status
            detail = abort.detail
            break
        residual = float(np.max(np.abs(speed)))

        if state.step % config.cadence == 0:
            record(geom, q, f_val, residual)

        if residual <= config.tol_residual:
            status = STATUS_CONVERGED
            record(geom, q, f_val, residual)
            break
        if np.min(geom.rho) < config.rho_floor or np.max(geom.rho) > config.rho_ceil:
            status = STATUS_DIVERGED
            detail = (
                f"radius left [{config.rho_floor:g}, {config.rho_ceil:g}] "
                f"(range [{float(np.min(geom.rho)):.3g}, {float(np.max(geom.rho)):.3g}])"
            )
            record(geom, q, f_val, residual)
            break
        if state.t >= config.t_max:
            status = STATUS_TIME_CAP
            record(geom, q, f_val, residual)
            break

        window.append(residual)
        if (
            config.tol_stall > 0.0
            and len(window) == config.stall_window + 1
            and window[0] - residual < config.tol_stall
        ):
            status = STATUS_TIME_CAP
            stalled = True
            detail = (
                f"residual stalled: decrease over {config.stall_window} steps was "
                f"{window[0] - residual:.3g} < {config.tol_stall:g}"
            )
            record(geom, q, f_val, residual)
            break

        try:
            dt = cfl_dt(config, geom, q, f_val)
            dt = min(dt, config.t_max - state.t)
            state = step(config, state, dt, k1=speed)
        except FlowAbort as abort:
            status = abort.status
            detail = abort.detail
            break

    wall = time.perf_counter() - t_start
    return RunResult(
        status=status,
        state=state,
        history=history,
        residual=residual,
        steps=state.step,
        wall_seconds=wall,
        stalled=stalled,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class Constant:
    """Round sphere of radius R."""

    R: float


@dataclass(frozen=True)
class Spheroid:
    """Spheroid with equatorial semi-axis a and polar semi-axis b."""

    a: float
    b: float


@dataclass(frozen=True)
class Perturbed:
    """Sphere of radius R with a single low-mode bump of the given amplitude."""

    R: float
    amplitude: float


def initial_gamma(kind, grid: Grid) -> np.ndarray:
    """Build a starting profile γ and validate it is a star-shaped graph.

    Constant:  γ = log R.
    Spheroid:  ρ(θ) = ab / sqrt(b² sin²θ + a² cos²θ).
    Perturbed: γ = log R + amplitude · cosθ on axisym grids,
               γ = log R + amplitude · sinθ cosφ on full_s2 grids.

    Raises ValueError (with the offending minimum of u) when the profile
    fails the star-shape check.
    """
    theta = grid.theta
    if grid.mode == "full_s2":
        theta = theta[:, None]
    if isinstance(kind, Constant):
        if kind.R <= 0.0:
            raise ValueError("radius must be positive")
        gamma = np.full(grid.shape, np.log(kind.R))
    elif isinstance(kind, Spheroid):
        if kind.a <= 0.0 or kind.b <= 0.0:
            raise ValueError("spheroid semi-axes must be positive")
        rho = (
            kind.a
            * kind.b
            / np.sqrt(kind.b**2 * np.sin(theta) ** 2 + kind.a**2 * np.cos(theta) ** 2)
        )
        gamma = np.broadcast_to(np.log(rho), grid.shape).copy()
    elif isinstance(kind, Perturbed):
        if kind.R <= 0.0:
            raise ValueError("radius must be positive")
        if grid.mode == "axisym":
            bump = np.cos(theta)
        else:
            bump = np.sin(theta) * np.cos(grid.phi[None, :])
        gamma = np.log(kind.R) + kind.amplitude * bump
    else:
        raise TypeError(f"unknown initial-data kind {kind!r}")

    ok, u_min = _star_check(grid, gamma)
    if not ok:
        raise ValueError(
            f"initial profile is not a star-shaped graph (min u = {u_min:.6g})"
        )
    return gamma


def _star_check(grid: Grid, gamma: np.ndarray) -> tuple[bool, float]:
    from .geometry import star_shape_check

    return star_shape_check(grid, gamma)


def normalized_time_map(
    alpha: float, beta: float, delta: float, eta: float, c0: float, t
):
    """Scale factor and stretched time for the self-similar normalization.

    With m = 1 - α - β - δ (m ≠ 0) and C₀ > 0:

        φ(t) = (C₀ + m η t)^{1/m},
        τ(t) = [log(C₀ + m η t) - log C₀] / (m η),

    so τ(0) = 0 and φ(t)^m grows linearly: the pair turns a power-law
    expansion into a unit-rate flow in the stretched time τ.  Requires the
    argument C₀ + m η t to stay positive.
    """
    m = 1.0 - alpha - beta - delta
    if m == 0.0:
        raise ValueError("normalization degenerates at alpha + beta + delta = 1")
    if c0 <= 0.0:
        raise ValueError("C0 must be positive")
    if eta == 0.0:
        raise ValueError("eta must be nonzero")
    t = np.asarray(t, dtype=float)
    arg = c0 + m * eta * t
    if np.any(arg <= 0.0):
        raise ValueError("time map argument C0 + (1-a-b-d) eta t must stay positive")
    phi = arg ** (1.0 / m)
    tau = (np.log(arg) - np.log(c0)) / (m * eta)
    if phi.ndim == 0:
        return float(phi), float(tau)
    return phi, tau
