"""Distributed execution: one worker thread per pose, neighbor-only messages.

Workers never see the graph object. Each holds its own id, its current
pose, the measurements on its incident edges, and one inbound queue per
neighbor. A round is: broadcast the current pose to all neighbors,
receive one message per neighbor for this round, compute the velocity
pair from those values only, integrate. A barrier separates rounds; its
action runs the monitor, which owns the global stopping rule (it
aggregates the objective across the per-round snapshots, a privilege of
simulation rather than something a deployed node could do).

Because updates are simultaneous, neighbor sums run in ascending id
order, and the per-node arithmetic is the same function the reference
solver calls, the resulting trajectory is bitwise identical to
``solver.solve`` on the same inputs.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .consistency import paired_rotation_correction
from .graph import Pose, PoseGraph, RelativeMeasurement, build_graph
from .solver import (SolverConfig, all_controls, evaluate_objective,
                     integrate_pose, node_controls)


class DeadlockError(RuntimeError):
    """A worker waited past the wall-clock bound; indicates a harness bug."""


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    round: int
    t: np.ndarray
    r: np.ndarray


@dataclass
class _MessageLog:
    """Thread-safe send log; one JSONL row per message."""

    lock: threading.Lock = field(default_factory=threading.Lock)
    rows: list[dict] = field(default_factory=list)

    def record(self, round_no: int, sender: int, receiver: int) -> None:
        with self.lock:
            self.rows.append(
                {"round": round_no, "sender": sender, "receiver": receiver})

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row) + "\n")


class NodeWorker:
    """Per-pose worker holding only local state.

    ``outboxes``/``inboxes`` are the channels to and from each neighbor;
    the worker owns its pose exclusively and publishes it once per round
    into its slot of the shared snapshot list (read by the monitor only
    while all workers sit at the barrier).
    """

    def __init__(
        self,
        node_id: int,
        pose: Pose,
        neighbors: tuple[int, ...],
        r_out: dict[int, np.ndarray],
        t_out: dict[int, np.ndarray],
        t_in: dict[int, np.ndarray],
        inboxes: dict[int, "queue.Queue[RoundMessage]"],
        outboxes: dict[int, "queue.Queue[RoundMessage]"],
        config: SolverConfig,
        timeout: float,
        log: _MessageLog | None,
    ) -> None:
        self.id = node_id
        self.pose = pose
        self.neighbors = neighbors
        self.r_out = r_out
        self.t_out = t_out
        self.t_in = t_in
        self.inboxes = inboxes
        self.outboxes = outboxes
        self.config = config
        self.timeout = timeout
        self.log = log

    def broadcast(self, round_no: int) -> None:
        for j in self.neighbors:
            if self.log is not None:
                self.log.record(round_no, self.id, j)
            self.outboxes[j].put(RoundMessage(
                sender=self.id, round=round_no, t=self.pose.t, r=self.pose.r))

    def collect(self, round_no: int) -> dict[int, Pose]:
        received: dict[int, Pose] = {}
        for j in self.neighbors:
            try:
                msg = self.inboxes[j].get(timeout=self.timeout)
            except queue.Empty:
                raise DeadlockError(
                    f"worker {self.id} timed out waiting for neighbor {j} "
                    f"in round {round_no}") from None
            if msg.sender != j or msg.round != round_no:
                raise DeadlockError(
                    f"worker {self.id} got message from {msg.sender} for "
                    f"round {msg.round}, expected {j} round {round_no}")
            received[j] = Pose(msg.t, msg.r)
        return received

    def compute_round(self, round_no: int) -> None:
        self.broadcast(round_no)
        neighbor_poses = self.collect(round_no)
        nu, omega = node_controls(
            self.pose, self.neighbors, neighbor_poses,
            self.r_out, self.t_out, self.t_in,
            self.config.translation_mode)
        self.pose = integrate_pose(self.pose, nu, omega, self.config.dt)


@dataclass
class DistributedResult:
    estimates: list[Pose]
    objective_history: list
    iterations: int
    converged: bool
    trajectory: list[list[Pose]] | None = None
    messages_per_round: int = 0


def _local_measurement_views(g: PoseGraph, i: int):
    r_out = {}
    t_out = {}
    t_in = {}
    for j in g.neighbors(i):
        m = g.measurement(i, j)
        r_out[j] = m.r_rel
        t_out[j] = m.t_rel
        t_in[j] = g.measurement(j, i).t_rel
    return r_out, t_out, t_in


def run_distributed(
    g: PoseGraph,
    init: list[Pose],
    config: SolverConfig | None = None,
    deadlock_timeout: float = 30.0,
    message_log_path=None,
) -> DistributedResult:
    """Execute the flow with one thread per pose and a round barrier.

    The caller should have applied pairwise rotation enforcement first,
    mirroring the reference pipeline. The monitor replays the reference
    solver's stopping rule exactly: same initial fixed-point check, same
    objective differences, same iteration cap.

    Raises:
        DeadlockError: a worker starved past ``deadlock_timeout``.
    """
    if config is None:
        config = SolverConfig()
    if len(init) != g.n:
        raise ValueError(f"expected {g.n} initial poses, got {len(init)}")

    history = [evaluate_objective(init, g)]
    nu0, omega0 = all_controls(init, g, config.translation_mode)
    trajectory: list[list[Pose]] | None = None
    if config.record_trajectory:
        trajectory = [list(init)]
    if not np.any(nu0) and not np.any(omega0):
        return DistributedResult(list(init), history, 0, True,
                                 trajectory, g.directed_count)

    log = _MessageLog() if message_log_path is not None else None
    channels: dict[tuple[int, int], queue.Queue] = {
        (m.src, m.dst): queue.Queue() for m in g.measurements
    }
    snapshots: list[Pose] = list(init)
    workers: list[NodeWorker] = []
    for i in range(g.n):
        r_out, t_out, t_in = _local_measurement_views(g, i)
        workers.append(NodeWorker(
            node_id=i,
            pose=init[i],
            neighbors=g.neighbors(i),
            r_out=r_out, t_out=t_out, t_in=t_in,
            inboxes={j: channels[(j, i)] for j in g.neighbors(i)},
            outboxes={j: channels[(i, j)] for j in g.neighbors(i)},
            config=config,
            timeout=deadlock_timeout,
            log=log,
        ))

    state = {
        "round": 0,
        "stop": False,
        "converged": False,
        "prev_geo": history[0].geodesic,
    }
    errors: list[BaseException] = []

    def monitor() -> None:
        # Runs as the barrier action while every worker is parked.
        round_no = state["round"] + 1
        obj = evaluate_objective(snapshots, g)
        history.append(obj)
        if trajectory is not None:
            trajectory.append(list(snapshots))
        if abs(obj.geodesic - state["prev_geo"]) < config.stop_tol:
            state["stop"] = True
            state["converged"] = True
        elif round_no >= config.max_iters:
            state["stop"] = True
        state["prev_geo"] = obj.geodesic
        state["round"] = round_no

    barrier = threading.Barrier(g.n, action=monitor)

    def work(w: NodeWorker) -> None:
        try:
            while True:
                round_no = state["round"]
                w.compute_round(round_no)
                snapshots[w.id] = w.pose
                try:
                    barrier.wait(timeout=deadlock_timeout)
                except threading.BrokenBarrierError:
                    if errors:
                        return  # another worker already failed
                    raise DeadlockError(
                        f"worker {w.id} broke the round barrier") from None
                if state["stop"]:
                    return
        except BaseException as exc:  # noqa: BLE001 - surfaced to caller
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=work, args=(w,), daemon=True)
               for w in workers]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=max(deadlock_timeout * (config.max_iters + 2), 60.0))
        if th.is_alive():
            barrier.abort()
            raise DeadlockError("worker thread failed to terminate")
    if errors:
        raise errors[0]

    if message_log_path is not None and log is not None:
        log.dump(message_log_path)

    return DistributedResult(
        estimates=[w.pose for w in workers],
        objective_history=history,
        iterations=state["round"],
        converged=state["converged"],
        trajectory=trajectory,
        messages_per_round=g.directed_count,
    )


def one_shot_pairwise_round(
    g: PoseGraph, message_log_path=None,
) -> PoseGraph:
    """Distributed pairwise rotation enforcement in a single round.

    Every node sends each neighbor the raw rotation it measured toward
    them (one message per directed edge) and locally replaces each of its
    outgoing rotations by the evenly split correction. The assembled
    graph equals the centralized enforcement bitwise.
    """
    log = _MessageLog() if message_log_path is not None else None
    channels: dict[tuple[int, int], queue.Queue] = {
        (m.src, m.dst): queue.Queue() for m in g.measurements
    }
    corrected: dict[tuple[int, int], np.ndarray] = {}
    lock = threading.Lock()
    errors: list[BaseException] = []

    def work(i: int, r_out: dict[int, np.ndarray]) -> None:
        try:
            for j, r in r_out.items():
                if log is not None:
                    log.record(0, i, j)
                channels[(i, j)].put(r)
            local = {}
            for j in r_out:
                rev = channels[(j, i)].get(timeout=30.0)
                local[(i, j)] = paired_rotation_correction(r_out[j], rev)
            with lock:
                corrected.update(local)
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)

    threads = []
    for i in range(g.n):
        r_out = {j: g.measurement(i, j).r_rel for j in g.neighbors(i)}
        threads.append(threading.Thread(target=work, args=(i, r_out),
                                        daemon=True))
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=60.0)
    if errors:
        raise errors[0]

    if message_log_path is not None and log is not None:
        log.dump(message_log_path)

    new_measurements = [
        RelativeMeasurement(m.src, m.dst, m.t_rel, corrected[(m.src, m.dst)])
        for m in g.measurements
    ]
    return build_graph(g.n, new_measurements)
