"""Measurement-consistency checks and repairs.

Three nested notions are checked, weakest to strongest:

* minimal: the directed sums of log-rotations and of translation
  measurements both vanish.
* pairwise: the two directions of every edge are rigid inverses of each
  other, i.e. ``r_ji == r_ij.T`` and ``t_ij == -r_ij @ t_ji``.
* global: composing measurements around every fundamental cycle returns
  the identity.

Pairwise rotation consistency can be enforced exactly by splitting each
edge's two-direction disagreement evenly between the directions; the
translation analogue is an averaging that solvers re-apply every step
with their current rotation estimates.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import so3
from .graph import Pose, PoseGraph, RelativeMeasurement, build_graph, spanning_tree


class MissingNeighborDataError(KeyError):
    """A control computation lacks a pose or measurement for a neighbor."""


@dataclass
class ConsistencyReport:
    """Defect magnitudes per consistency notion; None where not evaluated.

    Rotation defects are radians, translation defects meters. All defects
    are nonnegative. Serializes cleanly to JSON via :meth:`to_json`.
    """

    pairwise_rot_max_defect: float | None = None
    pairwise_trans_max_defect: float | None = None
    pairwise_pass: bool | None = None
    minimal_rot_defect: float | None = None
    minimal_trans_defect: float | None = None
    global_checked: bool = False
    global_max_cycle_rot_defect: float | None = None
    global_max_cycle_trans_defect: float | None = None
    cycles_checked: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_pairwise(
    g: PoseGraph,
    rot_tol: float = 1e-6,
    trans_tol: float = 1e-6,
) -> ConsistencyReport:
    """Measure how far each edge's two directions are from rigid inverses.

    Rotation defect per edge is the angle of ``r_ij @ r_ji``; translation
    defect is ``norm(t_ij + r_ij @ t_ji)``. Both vanish exactly when the
    reverse direction equals the rigid inverse of the forward one.
    """
    rot_defect = 0.0
    trans_defect = 0.0
    for i, j in g.undirected_edges():
        fwd = g.measurement(i, j)
        rev = g.measurement(j, i)
        rot_defect = max(rot_defect,
                         so3.rotation_angle(fwd.r_rel @ rev.r_rel))
        trans_defect = max(trans_defect, float(np.linalg.norm(
            fwd.t_rel + fwd.r_rel @ rev.t_rel)))
    return ConsistencyReport(
        pairwise_rot_max_defect=rot_defect,
        pairwise_trans_max_defect=trans_defect,
        pairwise_pass=(rot_defect <= rot_tol and trans_defect <= trans_tol),
    )


def check_minimal(g: PoseGraph) -> ConsistencyReport:
    """Norms of the directed sums of log-rotations and translations."""
    rot_sum = np.zeros(3)
    trans_sum = np.zeros(3)
    for m in g.measurements:
        rot_sum += so3.log_map(m.r_rel)
        trans_sum += m.t_rel
    return ConsistencyReport(
        minimal_rot_defect=float(np.linalg.norm(rot_sum)),
        minimal_trans_defect=float(np.linalg.norm(trans_sum)),
    )


def check_global(
    g: PoseGraph,
    cycle_basis_limit: int | None = None,
) -> ConsistencyReport:
    """Compose measurements around fundamental cycles of a BFS tree.

    Every undirected edge outside the spanning tree closes exactly one
    cycle: tree path from one endpoint to the other, then the edge back.
    A consistent graph composes to the identity on each. ``cycle_basis_limit``
    caps how many cycles are evaluated (ascending edge order); the report
    records how many actually were.
    """
    parent = spanning_tree(g, root=0)
    tree_edges = {(min(c, p), max(c, p)) for c, p in parent.items()}

    def path_to_root(v: int) -> list[int]:
        path = [v]
        while path[-1] in parent:
            path.append(parent[path[-1]])
        return path

    rot_defect = 0.0
    trans_defect = 0.0
    checked = 0
    for u, v in g.undirected_edges():
        if (u, v) in tree_edges:
            continue
        if cycle_basis_limit is not None and checked >= cycle_basis_limit:
            break
        up, vp = path_to_root(u), path_to_root(v)
        shared = set(up) & set(vp)
        anc = next(x for x in up if x in shared)
        walk = up[: up.index(anc) + 1] + list(reversed(vp[: vp.index(anc)]))
        walk.append(u)  # close through the non-tree edge (v, u)
        acc = Pose.identity()
        for a, b in zip(walk[:-1], walk[1:]):
            m = g.measurement(a, b)
            acc = Pose(acc.t + acc.r @ m.t_rel, acc.r @ m.r_rel)
        rot_defect = max(rot_defect, so3.rotation_angle(acc.r))
        trans_defect = max(trans_defect, float(np.linalg.norm(acc.t)))
        checked += 1
    return ConsistencyReport(
        global_checked=True,
        global_max_cycle_rot_defect=rot_defect,
        global_max_cycle_trans_defect=trans_defect,
        cycles_checked=checked,
    )


def full_report(
    g: PoseGraph,
    rot_tol: float = 1e-6,
    trans_tol: float = 1e-6,
    cycle_basis_limit: int | None = None,
) -> ConsistencyReport:
    """Run all three checks and merge their fields into one report."""
    pw = check_pairwise(g, rot_tol, trans_tol)
    mn = check_minimal(g)
    gl = check_global(g, cycle_basis_limit)
    return ConsistencyReport(
        pairwise_rot_max_defect=pw.pairwise_rot_max_defect,
        pairwise_trans_max_defect=pw.pairwise_trans_max_defect,
        pairwise_pass=pw.pairwise_pass,
        minimal_rot_defect=mn.minimal_rot_defect,
        minimal_trans_defect=mn.minimal_trans_defect,
        global_checked=gl.global_checked,
        global_max_cycle_rot_defect=gl.global_max_cycle_rot_defect,
        global_max_cycle_trans_defect=gl.global_max_cycle_trans_defect,
        cycles_checked=gl.cycles_checked,
    )


def paired_rotation_correction(
    r_fwd: np.ndarray, r_rev: np.ndarray,
) -> np.ndarray:
    """One direction's exact pairwise-rotation repair.

    Returns ``r_fwd @ exp(0.5 * log(r_fwd.T @ r_rev.T))``. Applying this
    to both directions (swapping the roles) yields rotations that are
    exact transposes of one another: the two corrections conjugate onto
    the same half-angle rotation.
    """
    half = 0.5 * so3.log_map(r_fwd.T @ r_rev.T)
    return r_fwd @ so3.exp_map(half)


def enforce_pairwise_rotations(g: PoseGraph) -> PoseGraph:
    """Split each edge's rotation disagreement evenly between directions.

    Runs once, up front. Translations are untouched. The result is exact:
    post-repair ``r_ij @ r_ji`` has zero angle to machine precision, and
    a second application is the identity on already-consistent input.

    Raises:
        so3.AngleAtPiError: if an edge's two directions disagree by a
            rotation whose angle reaches pi, where the even split is
            ambiguous.
    """
    replaced: dict[tuple[int, int], np.ndarray] = {}
    for i, j in g.undirected_edges():
        fwd = g.measurement(i, j).r_rel
        rev = g.measurement(j, i).r_rel
        replaced[(i, j)] = paired_rotation_correction(fwd, rev)
        replaced[(j, i)] = paired_rotation_correction(rev, fwd)
    new_measurements = [
        RelativeMeasurement(m.src, m.dst, m.t_rel, replaced[(m.src, m.dst)])
        for m in g.measurements
    ]
    return build_graph(g.n, new_measurements)


def averaged_translation(
    t_ij: np.ndarray, t_ji: np.ndarray, r_ij_est: np.ndarray,
) -> np.ndarray:
    """Average an edge's two translation measurements in one frame.

    ``r_ij_est`` carries frame ``j`` vectors into frame ``i``; solvers
    pass their current estimate ``R_i.T @ R_j``. The reverse measurement
    enters negated because the two directions point opposite ways. For
    any inputs, the pair of averages built this way satisfies
    ``t'_ij + r_ij_est @ t'_ji == 0`` identically.
    """
    return 0.5 * (np.asarray(t_ij, dtype=float)
                  - np.asarray(r_ij_est, dtype=float) @ np.asarray(t_ji, dtype=float))


def averaged_velocity_control(
    own: Pose,
    neighbors: Sequence[int],
    neighbor_poses: Mapping[int, Pose],
    t_out: Mapping[int, np.ndarray],
    t_in: Mapping[int, np.ndarray],
) -> np.ndarray:
    """Translation velocity with the measurement term averaged in place.

    Equivalent to first averaging each edge's translations with the
    current rotation estimates and then applying the plain consensus
    feedback; here the averaging is folded into the sum so a node needs
    only one pass over its neighbors:

        sum_j (t_j - t_i) + 0.5 * (R_j t_in[j] - R_i t_out[j])

    Args:
        own: this node's current pose estimate.
        neighbors: neighbor ids; callers pass them in ascending order and
            the sum follows that order term by term.
        neighbor_poses: current neighbor estimates keyed by id.
        t_out: translation measurements from this node toward each neighbor.
        t_in: translation measurements from each neighbor toward this node.

    Raises:
        MissingNeighborDataError: a neighbor id lacks a pose or an entry
            in either measurement map.
    """
    nu = np.zeros(3)
    for j in neighbors:
        if j not in neighbor_poses:
            raise MissingNeighborDataError(f"no pose for neighbor {j}")
        if j not in t_out or j not in t_in:
            raise MissingNeighborDataError(
                f"missing translation measurement on edge with neighbor {j}")
        pj = neighbor_poses[j]
        nu = nu + (pj.t - own.t) + 0.5 * (pj.r @ t_in[j] - own.r @ t_out[j])
    return nu
