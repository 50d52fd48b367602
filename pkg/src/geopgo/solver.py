"""Reference solver: synchronous consensus flow on poses.

Each node applies feedback assembled only from its own estimate, its
neighbors' estimates, and the measurements on its incident edges:

* translation velocity: consensus difference minus the rotated
  translation measurement (three variants, see ``TRANSLATION_MODES``);
* rotation velocity: sum of logs of the per-edge rotation residuals
  ``R_i.T @ R_j @ r_ij.T``, applied in the body frame.

Both are integrated with a shared explicit step ``dt``. All nodes update
simultaneously from the previous iterate, so a distributed execution with
a synchronization barrier reproduces this solver exactly, bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import so3
from .consistency import MissingNeighborDataError, averaged_translation
from .graph import Pose, PoseGraph, compose, inverse, max_degree

TRANSLATION_MODES = ("per_step_averaged", "online_averaged", "raw")


class StepSizeUnstableError(ValueError):
    """dt is large enough to make the translation consensus diverge."""


class StepSizeUnstableWarning(UserWarning):
    """dt is within a factor of two of the provable divergence threshold."""


@dataclass
class SolverConfig:
    dt: float = 0.05
    stop_tol: float = 1e-2
    max_iters: int = 20000
    translation_mode: str = "per_step_averaged"
    record_history: bool = True
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        if self.translation_mode not in TRANSLATION_MODES:
            raise ValueError(
                f"unknown translation mode {self.translation_mode!r}; "
                f"expected one of {TRANSLATION_MODES}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class ObjectiveValue:
    """Objective decomposition at one state.

    ``geodesic`` is the full objective with squared log-residual rotation
    terms; ``chordal`` swaps those for squared Frobenius residuals. Both
    include ``translation_only``. ``rotation_only`` is the geodesic
    rotation part alone, which is twice the descent certificate that the
    rotation flow decreases.
    """

    geodesic: float
    chordal: float
    rotation_only: float
    translation_only: float


@dataclass
class SolverState:
    """One iterate of the flow.

    ``controls`` holds the most recently computed per-node velocity pair
    (the one that produced this state's estimates), as ``(n, 3)`` arrays.
    ``objective_history`` is shared along a solve and has one entry per
    visited state when history recording is on.
    """

    estimates: list[Pose]
    iter: int = 0
    objective_history: list[ObjectiveValue] = field(default_factory=list)
    controls: tuple[np.ndarray, np.ndarray] | None = None
    latest_objective: ObjectiveValue | None = None
    last_control_norm: float = float("nan")


@dataclass
class SolveResult:
    estimates: list[Pose]
    objective_history: list[ObjectiveValue]
    iterations: int
    converged: bool
    control_norm_history: list[float] = field(default_factory=list)
    trajectory: list[list[Pose]] | None = None


def node_controls(
    own: Pose,
    neighbors: Sequence[int],
    neighbor_poses: Mapping[int, Pose],
    r_out: Mapping[int, np.ndarray],
    t_out: Mapping[int, np.ndarray],
    t_in: Mapping[int, np.ndarray],
    translation_mode: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity pair ``(nu, omega)`` for one node from local data only.

    This function is the single definition of the per-node update; the
    reference solver and the message-passing workers both call it, which
    is what makes their trajectories bitwise identical. Neighbors are
    accumulated in the order given (ascending by convention).

    Args:
        own: this node's estimate.
        neighbors: incident neighbor ids, ascending.
        neighbor_poses: neighbor estimates by id.
        r_out, t_out: measurements from this node toward each neighbor.
        t_in: translation measurements from each neighbor toward this node.
        translation_mode: one of ``TRANSLATION_MODES``.

    Raises:
        MissingNeighborDataError: a neighbor id has no pose or measurement.
        so3.AngleAtPiError: an edge's rotation residual left the log chart.
    """
    nu = np.zeros(3)
    omega = np.zeros(3)
    for j in neighbors:
        if j not in neighbor_poses:
            raise MissingNeighborDataError(f"no pose for neighbor {j}")
        if j not in r_out or j not in t_out or j not in t_in:
            raise MissingNeighborDataError(
                f"missing measurement on edge with neighbor {j}")
        pj = neighbor_poses[j]
        rrel = own.r.T @ pj.r
        omega = omega + so3.log_map(rrel @ r_out[j].T)
        if translation_mode == "raw":
            nu = nu + (pj.t - own.t) - own.r @ t_out[j]
        elif translation_mode == "per_step_averaged":
            t_avg = averaged_translation(t_out[j], t_in[j], rrel)
            nu = nu + (pj.t - own.t) - own.r @ t_avg
        else:  # online_averaged
            nu = nu + (pj.t - own.t) + 0.5 * (pj.r @ t_in[j] - own.r @ t_out[j])
    return nu, omega


def _local_views(g: PoseGraph, i: int):
    """Measurement maps for node ``i``: outgoing rotations/translations
    and incoming translations."""
    r_out = {}
    t_out = {}
    t_in = {}
    for j in g.neighbors(i):
        m_out = g.measurement(i, j)
        r_out[j] = m_out.r_rel
        t_out[j] = m_out.t_rel
        t_in[j] = g.measurement(j, i).t_rel
    return r_out, t_out, t_in


def rotation_control(i: int, estimates: Sequence[Pose], g: PoseGraph) -> np.ndarray:
    """Body-frame angular velocity for node ``i``."""
    r_out, t_out, t_in = _local_views(g, i)
    nbrs = g.neighbors(i)
    _, omega = node_controls(estimates[i], nbrs,
                             {j: estimates[j] for j in nbrs},
                             r_out, t_out, t_in, "raw")
    return omega


def translation_control(
    i: int, estimates: Sequence[Pose], g: PoseGraph,
    translation_mode: str = "per_step_averaged",
) -> np.ndarray:
    """Translation velocity for node ``i`` under the given mode."""
    r_out, t_out, t_in = _local_views(g, i)
    nbrs = g.neighbors(i)
    nu, _ = node_controls(estimates[i], nbrs,
                          {j: estimates[j] for j in nbrs},
                          r_out, t_out, t_in, translation_mode)
    return nu


def all_controls(
    estimates: Sequence[Pose], g: PoseGraph, translation_mode: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``(n, 3)`` velocity arrays for every node, ascending id."""
    nu = np.zeros((g.n, 3))
    omega = np.zeros((g.n, 3))
    for i in range(g.n):
        r_out, t_out, t_in = _local_views(g, i)
        nbrs = g.neighbors(i)
        nu[i], omega[i] = node_controls(
            estimates[i], nbrs, {j: estimates[j] for j in nbrs},
            r_out, t_out, t_in, translation_mode)
    return nu, omega


def integrate_pose(p: Pose, nu: np.ndarray, omega: np.ndarray, dt: float) -> Pose:
    """Explicit update of one pose; re-projects the rotation on drift."""
    return Pose(p.t + dt * nu,
                so3.renormalize(p.r @ so3.exp_map(dt * omega)))


def _check_step_size(g: PoseGraph, dt: float) -> None:
    s = dt * max_degree(g)
    if s >= 2.0:
        raise StepSizeUnstableError(
            f"dt * max_degree = {s:.3f} >= 2; translation consensus would "
            "diverge on this graph")
    if s >= 1.0:
        warnings.warn(
            f"dt * max_degree = {s:.3f} >= 1; within a factor of two of "
            "the divergence threshold", StepSizeUnstableWarning, stacklevel=3)


def evaluate_objective(estimates: Sequence[Pose], g: PoseGraph) -> ObjectiveValue:
    """Objective over all directed measurements, in ``(src, dst)`` order.

    The summation order is fixed so that two evaluations of the same
    state are bitwise equal wherever they run.
    """
    trans = 0.0
    rot = 0.0
    chord = 0.0
    for m in g.measurements:
        pi = estimates[m.src]
        pj = estimates[m.dst]
        rrel = pi.r.T @ pj.r
        w = so3.log_map(rrel @ m.r_rel.T)
        rot += float(w @ w)
        d = rrel - m.r_rel
        chord += float(np.sum(d * d))
        e = pj.t - pi.t - pi.r @ m.t_rel
        trans += float(e @ e)
    return ObjectiveValue(
        geodesic=trans + rot,
        chordal=trans + chord,
        rotation_only=rot,
        translation_only=trans,
    )


def evaluate_lyapunov(estimates: Sequence[Pose], g: PoseGraph) -> float:
    """Half the summed squared rotation residual logs (descent certificate)."""
    return 0.5 * evaluate_objective(estimates, g).rotation_only


def desired_offsets(estimates: Sequence[Pose], g: PoseGraph) -> np.ndarray:
    """Per-node measurement offset: row ``i`` is ``sum_j R_i @ t_ij``.

    Subtracting these from the plain consensus term gives the raw-mode
    translation velocity in stacked form.
    """
    delta = np.zeros((g.n, 3))
    for i in range(g.n):
        for j in g.neighbors(i):
            delta[i] += estimates[i].r @ g.measurement(i, j).t_rel
    return delta


def in_basin(estimates: Sequence[Pose], g: PoseGraph, epsilon: float = 0.01) -> bool:
    """True when every directed rotation residual angle is at most
    ``pi/2 - epsilon``."""
    bound = np.pi / 2.0 - epsilon
    for m in g.measurements:
        ang = so3.rotation_angle(
            estimates[m.src].r.T @ estimates[m.dst].r @ m.r_rel.T)
        if ang > bound:
            return False
    return True


def is_equilibrium(
    estimates: Sequence[Pose], g: PoseGraph, tol: float = 1e-9,
    translation_mode: str = "per_step_averaged",
) -> bool:
    """True when every node's velocity pair is below ``tol`` in norm."""
    nu, omega = all_controls(estimates, g, translation_mode)
    return bool(max(np.linalg.norm(nu, axis=1).max(initial=0.0),
                    np.linalg.norm(omega, axis=1).max(initial=0.0)) <= tol)


def max_control_norm(nu: np.ndarray, omega: np.ndarray) -> float:
    """Largest per-node velocity norm across both control families."""
    return float(max(np.linalg.norm(nu, axis=1).max(initial=0.0),
                     np.linalg.norm(omega, axis=1).max(initial=0.0)))


def step(state: SolverState, g: PoseGraph, config: SolverConfig) -> SolverState:
    """One synchronous iteration: all controls from the previous state,
    then all integrations.

    Returns a new state with ``iter + 1``. The new state's objective is
    always evaluated (the stop rule needs it); it is appended to the
    shared history list only when the config records history.
    """
    _check_step_size(g, config.dt)
    nu, omega = all_controls(state.estimates, g, config.translation_mode)
    new_estimates = [
        integrate_pose(state.estimates[i], nu[i], omega[i], config.dt)
        for i in range(g.n)
    ]
    obj = evaluate_objective(new_estimates, g)
    history = state.objective_history
    if config.record_history:
        history.append(obj)
    return SolverState(
        estimates=new_estimates,
        iter=state.iter + 1,
        objective_history=history,
        controls=(nu, omega),
        latest_objective=obj,
        last_control_norm=max_control_norm(nu, omega),
    )


def solve(
    g: PoseGraph, init: Sequence[Pose], config: SolverConfig | None = None,
) -> SolveResult:
    """Iterate the flow to convergence.

    Stops when the geodesic objective changes by less than
    ``config.stop_tol`` between consecutive iterations, or immediately
    when the initial controls are exactly zero (a fixed point). Hitting
    ``max_iters`` is reported through ``converged=False``, not an error.
    """
    if config is None:
        config = SolverConfig()
    if len(init) != g.n:
        raise ValueError(f"expected {g.n} initial poses, got {len(init)}")
    _check_step_size(g, config.dt)

    obj0 = evaluate_objective(init, g)
    history = [obj0]
    norms: list[float] = []
    trajectory: list[list[Pose]] | None = None
    if config.record_trajectory:
        trajectory = [list(init)]

    nu0, omega0 = all_controls(init, g, config.translation_mode)
    if not np.any(nu0) and not np.any(omega0):
        if config.record_history:
            norms.append(max_control_norm(nu0, omega0))
        return SolveResult(list(init), history, 0, True,
                           norms, trajectory)

    state = SolverState(estimates=list(init), iter=0,
                        objective_history=history)
    converged = False
    prev_geo = obj0.geodesic
    while state.iter < config.max_iters:
        state = step(state, g, config)
        if config.record_history:
            norms.append(state.last_control_norm)
        if trajectory is not None:
            trajectory.append(list(state.estimates))
        geo = state.latest_objective.geodesic
        if abs(geo - prev_geo) < config.stop_tol:
            converged = True
            break
        prev_geo = geo

    if not config.record_history and state.latest_objective is not None:
        history.append(state.latest_objective)
    if config.record_history:
        nu_f, omega_f = all_controls(state.estimates, g,
                                     config.translation_mode)
        norms.append(max_control_norm(nu_f, omega_f))
    return SolveResult(state.estimates, history, state.iter, converged,
                       norms, trajectory)


def align_gauge(
    estimates: Sequence[Pose], reference: Sequence[Pose], anchor: int = 0,
) -> list[Pose]:
    """Left-multiply all estimates by the rigid transform that carries
    ``estimates[anchor]`` onto ``reference[anchor]``.

    The objective is invariant under this (all residuals are built from
    pose differences), so it is pure reporting convenience.
    """
    t = compose(reference[anchor], inverse(estimates[anchor]))
    return [compose(t, p) for p in estimates]


def pose_errors(
    estimates: Sequence[Pose], reference: Sequence[Pose],
) -> tuple[float, float]:
    """Max translation distance (m) and rotation angle (rad) to a reference."""
    et = max(float(np.linalg.norm(e.t - r.t))
             for e, r in zip(estimates, reference))
    er = max(so3.rotation_angle(e.r.T @ r.r)
             for e, r in zip(estimates, reference))
    return et, er
