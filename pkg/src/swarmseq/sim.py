"""Deterministic tick-based world: motion integration, sensing, delayed messages.

Every tick: deliver due messages, step every agent against the previous
tick's snapshot (so agents are order-independent within a tick), saturate
controls, integrate positions with explicit Euler, recompute the proximity
graph, and enqueue the new broadcasts with sampled delays. Identical
(mission, config, seed) triples produce byte-identical outputs; message
delays are drawn from a stream keyed by (seed, sender, tick) so scheduling
order cannot perturb them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

import numpy as np

from .agent import EXECUTING, AgentNode, Delivery, StepEnv, step
from .geometry import RobotState, proximity_graph


class SimConfigError(ValueError):
    """Configuration rejected before the run starts."""


@dataclass(frozen=True)
class DelaySpec:
    kind: str  # "none" | "uniform"
    min_ticks: int = 0
    max_ticks: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform"):
            raise SimConfigError(f"unknown delay kind '{self.kind}'")
        if self.min_ticks < 0 or self.max_ticks < self.min_ticks:
            raise SimConfigError("delay bounds must satisfy 0 <= min <= max")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", lo, hi)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    max_ticks: int = 20000
    delta: float = 0.5
    speed_limit: float = 0.2
    delay: DelaySpec = field(default_factory=DelaySpec.none)
    seed: int = 0
    oracle_sensing: bool = True
    sigma_bar: float = 0.8
    eta_bar: float = 0.8
    staleness_ticks: int = 50
    glue_transitions: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise SimConfigError("dt must be positive")
        if self.delta <= 0:
            raise SimConfigError("delta must be positive")
        if self.speed_limit <= 0:
            raise SimConfigError("speed limit must be positive")
        if self.max_ticks < 1:
            raise SimConfigError("max_ticks must be at least 1")


@dataclass
class WorldState:
    tick: int
    positions: np.ndarray  # (n, 2)
    live_graph: object
    in_flight: list  # (deliver_tick, recipient, send_tick, AgentMessage)
    event_log: list

    def states(self):
        return [RobotState(i + 1, self.positions[i]) for i in range(len(self.positions))]


@dataclass
class RunRecord:
    n: int
    dt: float
    outcome: str  # done | timeout | infeasible_hard
    ticks: int
    positions: np.ndarray  # (ticks + 1, n, 2)
    controls: np.ndarray  # (ticks, n, 2)
    sigma: np.ndarray  # (ticks, n)
    eta: np.ndarray  # (ticks, n)
    mode: np.ndarray  # (ticks, n) int
    behavior_index: np.ndarray  # (ticks, n) int
    events: list
    config: SimConfig
    plan: object

    def behavior_windows(self):
        return compute_behavior_windows(self)


def _delay_ticks(config, sender, tick):
    if config.delay.kind == "none":
        return 0
    key = (config.seed * 1000003 + sender) * 1000003 + tick
    rng = random.Random(key & 0xFFFFFFFFFFFFFFFF)
    return rng.randint(config.delay.min_ticks, config.delay.max_ticks)


def _specs_for(node, plan):
    """(nominal spec, target spec) per the node's stage; either may be None."""
    k = node.behavior_index
    specs = plan.behaviors
    m = len(specs)
    if node.done:
        return None, None
    if node.mode == EXECUTING:
        nominal = specs[k - 1]
        upcoming = specs[k] if k < m else None
        return nominal, upcoming
    nominal = specs[k - 2] if k >= 2 else None
    return nominal, specs[k - 1]


def make_nodes(plan):
    """Fresh agent nodes, all starting in assembly toward the first behavior."""
    return [AgentNode(id=i, n_behaviors=len(plan.behaviors)) for i in range(1, plan.n + 1)]


def make_world(plan, config):
    positions = plan.initial_positions.copy()
    graph = proximity_graph(
        [RobotState(i + 1, positions[i]) for i in range(plan.n)], config.delta
    )
    return WorldState(tick=0, positions=positions, live_graph=graph, in_flight=[], event_log=[])


def tick(world, nodes, plan, config):
    """Advance the world and all nodes by one tick; returns applied controls."""
    t = world.tick
    due = {}
    remaining = []
    for deliver_tick, recipient, send_tick, msg in world.in_flight:
        if deliver_tick <= t:
            due.setdefault(recipient, []).append(Delivery(send_tick, msg))
        else:
            remaining.append((deliver_tick, recipient, send_tick, msg))
    world.in_flight = remaining

    graph = world.live_graph
    positions = world.positions
    oracle = None
    if config.oracle_sensing:
        oracle = {i + 1: positions[i].copy() for i in range(plan.n)}

    controls = np.zeros((plan.n, 2))
    outboxes = []
    for node in nodes:
        i = node.id
        neighbors = graph.neighbors(i)
        sensed = {j: positions[j - 1].copy() for j in neighbors}
        env = StepEnv(
            tick=t,
            live_neighbors=frozenset(neighbors),
            sensed=sensed,
            oracle=oracle,
            params=plan.fcbf,
            delta=config.delta,
            min_sep=plan.min_sep,
            speed_limit=config.speed_limit,
            obstacles=plan.domain.obstacles,
            sigma_bar=config.sigma_bar,
            eta_bar=config.eta_bar,
            staleness_ticks=config.staleness_ticks,
            glue_transitions=config.glue_transitions,
        )
        my_state = RobotState(i, positions[i - 1])
        behavior, upcoming = _specs_for(node, plan)
        node, u, outbox, events = step(node, my_state, due.get(i, []), behavior, upcoming, env, config.dt)
        controls[i - 1] = u
        outboxes.append((i, outbox, sorted(graph.neighbors(i))))
        for ev in events:
            ev["tick"] = t
            world.event_log.append(ev)

    np.clip(controls, -config.speed_limit, config.speed_limit, out=controls)
    world.positions = positions + config.dt * controls
    world.live_graph = proximity_graph(
        [RobotState(i + 1, world.positions[i]) for i in range(plan.n)], config.delta
    )
    for sender, msg, recipients in outboxes:
        delay = _delay_ticks(config, sender, t)
        for r in recipients:
            world.in_flight.append((t + 1 + delay, r, t, msg))
    world.tick = t + 1
    return controls


def run(plan, config):
    """Run the mission to completion, timeout, or hard infeasibility."""
    if abs(config.delta - plan.delta) > 1e-12:
        raise SimConfigError(
            f"config sensing range {config.delta:g} differs from the plan's {plan.delta:g}"
        )
    nodes = make_nodes(plan)
    world = make_world(plan, config)

    positions_log = [world.positions.copy()]
    controls_log = []
    sigma_log, eta_log, mode_log, k_log = [], [], [], []

    rescue_state = _RescueTracker(plan) if plan.rescue is not None else None

    outcome = "timeout"
    while world.tick < config.max_ticks:
        controls = tick(world, nodes, plan, config)
        controls_log.append(controls)
        positions_log.append(world.positions.copy())
        sigma_log.append([n.sigma for n in nodes])
        eta_log.append([n.eta for n in nodes])
        mode_log.append([n.mode for n in nodes])
        k_log.append([n.behavior_index for n in nodes])
        if rescue_state is not None:
            rescue_state.observe(world, nodes, config)
        if all(n.done for n in nodes):
            outcome = "done"
            break
    if outcome != "done" and any(
        ev["event"] == "qp_infeasible_hard" for ev in world.event_log
    ):
        outcome = "infeasible_hard"

    record = RunRecord(
        n=plan.n,
        dt=config.dt,
        outcome=outcome,
        ticks=len(controls_log),
        positions=np.array(positions_log),
        controls=np.array(controls_log),
        sigma=np.array(sigma_log),
        eta=np.array(eta_log),
        mode=np.array(mode_log, dtype=int),
        behavior_index=np.array(k_log, dtype=int),
        events=world.event_log,
        config=config,
        plan=plan,
    )
    return record


class _RescueTracker:
    """Watches the subject: located when any robot senses it, escorted when the
    escorting group's centroid carries it into the safe zone."""

    def __init__(self, plan):
        self.plan = plan
        self.located = False
        self.escorted = False

    def observe(self, world, nodes, config):
        r = self.plan.rescue
        target = np.asarray(r.target)
        if not self.located:
            dists = np.linalg.norm(world.positions - target, axis=1)
            if float(np.min(dists)) <= config.delta:
                self.located = True
                world.event_log.append(
                    {"tick": world.tick - 1, "event": "target_located", "robot": int(np.argmin(dists)) + 1}
                )
        if self.located and not self.escorted:
            escorting = all(
                nodes[i - 1].behavior_index > r.escort_behavior
                or (
                    nodes[i - 1].behavior_index == r.escort_behavior
                    and nodes[i - 1].mode == EXECUTING
                )
                for i in r.escort_robots
            )
            if escorting:
                group = np.array([world.positions[i - 1] for i in r.escort_robots])
                centroid = group.mean(axis=0)
                if float(np.linalg.norm(centroid - np.asarray(r.safe_center))) <= r.safe_radius:
                    self.escorted = True
                    world.event_log.append(
                        {"tick": world.tick - 1, "event": "target_escorted"}
                    )


# --- post-run analysis ----------------------------------------------------------


def stage_rank(mode, k):
    """Total order on mission progress: Assembling(k) < Executing(k) < Assembling(k+1)."""
    return 2 * k if mode == EXECUTING else 2 * k - 1


def compute_behavior_windows(record):
    """Per-behavior timing extracted from the recorded per-robot stages.

    For behavior k (1-based):
      assembly_first: first tick any robot is assembling toward k
      assembly_all:   first tick every robot's stage is at least Assembling(k)
      exec_start:     first tick every robot's stage is at least Executing(k)
                      (the behavior's recorded team start)
      exec_end:       first tick some robot moves past Executing(k), or the
                      run's end for the final behavior
    Any entry is None if the run never reached it.
    """
    m = len(record.plan.behaviors)
    ranks = np.where(
        record.mode == EXECUTING, 2 * record.behavior_index, 2 * record.behavior_index - 1
    )
    min_rank = ranks.min(axis=1)
    max_rank = ranks.max(axis=1)
    windows = []
    for k in range(1, m + 1):
        asm, exc = 2 * k - 1, 2 * k
        first_asm = _first_tick(max_rank >= asm)
        all_asm = _first_tick(min_rank >= asm)
        exec_start = _first_tick(min_rank >= exc)
        past = _first_tick(min_rank > exc)
        exec_end = past if past is not None else (record.ticks if exec_start is not None else None)
        windows.append(
            {
                "k": k,
                "assembly_first": first_asm,
                "assembly_all": all_asm,
                "exec_start": exec_start,
                "exec_end": exec_end,
            }
        )
    return windows


def _first_tick(mask):
    idx = np.flatnonzero(mask)
    return int(idx[0]) if len(idx) else None


def connectivity_trace(record, edge):
    """Barrier value of one connectivity edge across the whole run."""
    i, j = edge
    delta = record.config.delta
    d = record.positions[:, i - 1, :] - record.positions[:, j - 1, :]
    return delta**2 - np.sum(d * d, axis=1)


def collision_trace(record, pair):
    i, j = pair
    d = record.positions[:, i - 1, :] - record.positions[:, j - 1, :]
    return np.sum(d * d, axis=1) - record.plan.min_sep**2


def obstacle_trace(record, robot, obstacle):
    v = record.positions[:, robot - 1, :] - np.asarray(obstacle.center)
    return obstacle.a * v[:, 0] ** 2 + obstacle.b * v[:, 1] ** 2 - 1.0


# --- serialization ----------------------------------------------------------------


def write_outputs(record, outdir):
    """Write the CSV set and the event log; returns the file paths.

    trajectory.csv: tick,robot,x,y,ux,uy (position at tick start; the final
    row per robot carries tick=ticks with zero control).
    barriers.csv: tick,kind,a,b,h with kind conn (a,b robots; union of all
    required edges), coll (a,b robots currently in range), obst (a robot,
    b obstacle index of that robot's worst obstacle barrier).
    consensus.csv: tick,robot,sigma,eta,mode,k.
    events.jsonl: one JSON object per event.
    """
    import os

    os.makedirs(outdir, exist_ok=True)
    paths = {}

    path = os.path.join(outdir, "trajectory.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tick,robot,x,y,ux,uy\n")
        for t in range(record.ticks):
            for i in range(record.n):
                x, y = record.positions[t, i]
                ux, uy = record.controls[t, i]
                fh.write(
                    f"{t},{i + 1},{float(x)!r},{float(y)!r},{float(ux)!r},{float(uy)!r}\n"
                )
        for i in range(record.n):
            x, y = record.positions[record.ticks, i]
            fh.write(f"{record.ticks},{i + 1},{float(x)!r},{float(y)!r},0.0,0.0\n")
    paths["trajectory"] = path

    path = os.path.join(outdir, "barriers.csv")
    all_edges = sorted({e for spec in record.plan.behaviors for e in spec.required_graph.edges})
    delta2 = record.config.delta**2
    minsep2 = record.plan.min_sep**2
    obstacles = record.plan.domain.obstacles
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tick,kind,a,b,h\n")
        for t in range(record.ticks):
            pos = record.positions[t]
            for i, j in all_edges:
                d = pos[i - 1] - pos[j - 1]
                fh.write(f"{t},conn,{i},{j},{float(delta2 - d @ d)!r}\n")
            for i in range(1, record.n + 1):
                for j in range(i + 1, record.n + 1):
                    d = pos[i - 1] - pos[j - 1]
                    dist2 = float(d @ d)
                    if dist2 <= delta2:
                        fh.write(f"{t},coll,{i},{j},{float(dist2 - minsep2)!r}\n")
            for i in range(1, record.n + 1):
                worst = None
                worst_m = 0
                for m, o in enumerate(obstacles, start=1):
                    v = pos[i - 1] - o.center
                    h = o.a * v[0] ** 2 + o.b * v[1] ** 2 - 1.0
                    if worst is None or h < worst:
                        worst, worst_m = h, m
                if worst is not None:
                    fh.write(f"{t},obst,{i},{worst_m},{float(worst)!r}\n")
    paths["barriers"] = path

    path = os.path.join(outdir, "consensus.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tick,robot,sigma,eta,mode,k\n")
        for t in range(record.ticks):
            for i in range(record.n):
                fh.write(
                    f"{t},{i + 1},{float(record.sigma[t, i])!r},{float(record.eta[t, i])!r},"
                    f"{int(record.mode[t, i])},{int(record.behavior_index[t, i])}\n"
                )
    paths["consensus"] = path

    path = os.path.join(outdir, "events.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for ev in record.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
    paths["events"] = path
    return paths
