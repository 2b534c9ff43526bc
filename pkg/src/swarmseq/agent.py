"""Per-robot node logic: mode machine, completion consensus, constraint assembly.

Each robot is either executing the behavior at its index k or assembling the
interaction graph for it. Two gated consensus variables drive the switches:
sigma aggregates task completion while executing, eta aggregates graph
readiness while assembling. Both follow the same multiplicative update

    value = flag * (sum of neighbor values + 1) / (neighbor count + 1)

so a single robot with a false flag pins itself to zero and suppresses the
whole network, while all-true flags drive every value to 1.

Mode timeline for behavior k:
  - Assembling(k): the just-concluded controller (k-1) stays nominal while
    connectivity rows cover the union of the old and new edge sets; eta
    crossing its threshold starts Executing(k).
  - Executing(k): behavior k's controller is nominal and rows cover its edge
    set; sigma crossing its threshold advances to Assembling(k+1), or ends
    the mission after the last behavior.

Robots at different indices exchange values safely: a neighbor that has
already advanced past my index counts as 1 in my consensus (its progress
certifies completion of my stage), one that lags counts as 0. Without this
alignment the reset-to-zero at each switch deadlocks sparse graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import behaviors
from .barriers import (
    Collision,
    Connectivity,
    KeepWithin,
    ObstacleAvoid,
    constraint_row,
)
from .geometry import RobotState
from .qp import QpProblem, solve

EXECUTING = 0
ASSEMBLING = 1

# obstacle rows join the constraint set once the robot is inside the doubled
# ellipse; one Euler step at full speed cannot cross that margin
OBSTACLE_ACTIVATION = 3.0

# assembly drives edges to a slightly tightened range so they finish strictly
# inside the sensing radius: rows stop pulling at their own boundary, and an
# edge parked exactly at the range limit flickers in the assembled-edge test
ASSEMBLY_RANGE_FACTOR = 0.96


class AgentError(RuntimeError):
    """Node stepped against an inconsistent mission view."""


@dataclass(frozen=True)
class AgentMessage:
    """The only inter-robot wire type."""

    sender: int
    position: tuple
    sigma: float
    eta: float
    behavior_index: int

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class Delivery:
    """Inbox envelope: the message plus the tick it was sent on."""

    send_tick: int
    message: AgentMessage


@dataclass
class CacheEntry:
    position: np.ndarray
    sigma: float
    eta: float
    behavior_index: int
    send_tick: int
    received_tick: int


@dataclass
class AgentNode:
    id: int
    n_behaviors: int
    mode: int = ASSEMBLING
    behavior_index: int = 1
    sigma: float = 0.0
    eta: float = 0.0
    s_task: bool = False
    s_assembly: bool = False
    elapsed: float = 0.0
    neighbor_cache: dict = field(default_factory=dict)

    @property
    def done(self):
        return self.behavior_index > self.n_behaviors


@dataclass(frozen=True)
class StepEnv:
    """Everything a node can observe this tick besides its own state."""

    tick: int
    live_neighbors: frozenset  # ids currently within sensing range
    sensed: dict  # id -> position, for robots in range
    oracle: dict | None  # id -> position for all robots, None when oracle off
    params: object  # FcbfParams
    delta: float
    min_sep: float
    speed_limit: float
    obstacles: tuple
    sigma_bar: float = 0.8
    eta_bar: float = 0.8
    staleness_ticks: int = 50
    # comparison baseline: assemble graphs by running rendezvous on the live
    # graph instead of minimally invasive connectivity rows
    glue_transitions: bool = False


def consensus_update(own_flag, own_value, neighbor_values):
    """Gated averaging step toward team agreement; result clamped to [0, 1].

    ``own_value`` is part of the update contract but the map itself depends
    only on the flag and the neighbors: completion information enters through
    the +1 numerator bias and diffuses via the neighbors.
    """
    del own_value
    if not own_flag:
        return 0.0
    total = sum(neighbor_values) + 1.0
    value = total / (len(neighbor_values) + 1.0)
    return min(1.0, max(0.0, value))


def _aligned_values(node, env, attr):
    """Neighbor consensus values re-expressed relative to this node's stage."""
    vals = []
    for j in sorted(env.live_neighbors):
        entry = node.neighbor_cache.get(j)
        if entry is None:
            vals.append(0.0)
        elif entry.behavior_index > node.behavior_index:
            vals.append(1.0)
        elif entry.behavior_index < node.behavior_index:
            vals.append(0.0)
        else:
            vals.append(getattr(entry, attr))
    return vals


def _ingest(node, inbox, tick, staleness):
    for d in sorted(inbox, key=lambda d: (d.message.sender, d.send_tick)):
        msg = d.message
        prev = node.neighbor_cache.get(msg.sender)
        if prev is not None and prev.send_tick > d.send_tick:
            continue
        node.neighbor_cache[msg.sender] = CacheEntry(
            position=np.asarray(msg.position, dtype=float),
            sigma=msg.sigma,
            eta=msg.eta,
            behavior_index=msg.behavior_index,
            send_tick=d.send_tick,
            received_tick=tick,
        )
    expired = [j for j, e in node.neighbor_cache.items() if tick - e.received_tick > staleness]
    for j in expired:
        del node.neighbor_cache[j]


def _lookup_position(node, env, j):
    """Best available position of robot j: sensed, then oracle, then cache."""
    if j in env.sensed:
        return env.sensed[j]
    if env.oracle is not None and j in env.oracle:
        return env.oracle[j]
    entry = node.neighbor_cache.get(j)
    if entry is not None:
        return entry.position
    return None


def _known_states(node, env, exclude):
    out = []
    ids = set(env.sensed)
    if env.oracle is not None:
        ids |= set(env.oracle)
    ids |= set(node.neighbor_cache)
    for j in sorted(ids):
        if j == exclude:
            continue
        pos = _lookup_position(node, env, j)
        if pos is not None:
            out.append(RobotState(j, pos))
    return out


def _controller_inputs(node, my_state, spec, env):
    """Neighbor states and required ids for the given behavior's controller."""
    controller = spec.controller
    if isinstance(controller, behaviors.Composite):
        group = controller.group_of(node.id)
        inner = group.controller
    else:
        inner = controller
    if isinstance(inner, behaviors.Lattice):
        states = [
            RobotState(j, env.sensed[j]) for j in sorted(env.live_neighbors) if j in env.sensed
        ]
        return states, []
    if isinstance(inner, behaviors.Coverage):
        return _known_states(node, env, exclude=node.id), []
    required = sorted(spec.required_graph.neighbors(node.id))
    states = []
    missing = []
    for j in required:
        pos = _lookup_position(node, env, j)
        if pos is None:
            missing.append(j)
        else:
            states.append(RobotState(j, pos))
    if missing:
        raise AgentError(f"robot {node.id}: no position available for required neighbors {missing}")
    return states, required


def _nominal(node, my_state, spec, env):
    if spec is None:
        return np.zeros(2)
    states, required = _controller_inputs(node, my_state, spec, env)
    return behaviors.nominal_control(spec.controller, node.id, my_state, states, required)


def _connectivity_rows(node, my_state, graphs, env, events, delta):
    rows = []
    seen = set()
    for graph in graphs:
        for j in sorted(graph.neighbors(node.id)):
            if j in seen:
                continue
            seen.add(j)
            pos = _lookup_position(node, env, j)
            if pos is None:
                events.append(
                    {"event": "missing_position", "robot": node.id, "other": j}
                )
                continue
            states = [my_state, RobotState(j, pos)]
            rows.append(
                constraint_row(
                    Connectivity(node.id, j, delta), states, env.params, node.id, "half"
                )
            )
    return rows


def _safety_rows(node, my_state, env):
    rows = []
    for j in sorted(env.live_neighbors):
        pos = env.sensed.get(j)
        if pos is None:
            continue
        states = [my_state, RobotState(j, pos)]
        rows.append(
            constraint_row(Collision(node.id, j, env.min_sep), states, env.params, node.id, "half")
        )
    px, py = float(my_state.position[0]), float(my_state.position[1])
    for obst in env.obstacles:
        # rows activate inside the doubled ellipse (h <= 3); farther obstacles
        # cannot be reached before their rows activate, so invariance holds
        dx = px - obst.center[0]
        dy = py - obst.center[1]
        if obst.a * dx * dx + obst.b * dy * dy - 1.0 > OBSTACLE_ACTIVATION:
            continue
        rows.append(
            constraint_row(ObstacleAvoid(node.id, obst), [my_state], env.params, node.id, "full")
        )
    return rows


def _initial_rows(node, my_state, spec, env):
    rows = []
    if spec is None:
        return rows
    for kind in spec.initial_constraints:
        if isinstance(kind, KeepWithin) and kind.i != node.id:
            continue
        if node.id not in kind.participants:
            continue
        rows.append(constraint_row(kind, [my_state], env.params, node.id, "full"))
    return rows


def step(node, my_state, inbox, behavior, next_behavior, env, dt):
    """Advance one robot by one tick.

    ``behavior`` is the spec whose controller is nominal right now (the
    active one while executing, the just-concluded one while assembling,
    None during the initial assembly), ``next_behavior`` the upcoming spec
    (None when none remains). Returns (node, control, outbox, events); the
    control is the QP output before the simulator's saturation.
    """
    events = []
    _ingest(node, inbox, env.tick, env.staleness_ticks)

    if node.done:
        outbox = AgentMessage(
            sender=node.id,
            position=tuple(my_state.position),
            sigma=node.sigma,
            eta=node.eta,
            behavior_index=node.behavior_index,
        )
        return node, np.zeros(2), outbox, events

    if env.glue_transitions and node.mode == ASSEMBLING:
        # the glue baseline starts rendezvous only upon collective completion:
        # hold still while any visible neighbor is still on the previous
        # behavior, otherwise its task would be perturbed before it finishes
        behind = False
        for j in env.live_neighbors:
            entry = node.neighbor_cache.get(j)
            if entry is None or entry.behavior_index < node.behavior_index:
                behind = True
                break
        if behind:
            u_hat = np.zeros(2)
        else:
            live = [
                RobotState(j, env.sensed[j])
                for j in sorted(env.live_neighbors)
                if j in env.sensed
            ]
            u_hat = behaviors.nominal_control(
                behaviors.Rendezvous(), node.id, my_state, live, [s.id for s in live]
            )
    else:
        u_hat = _nominal(node, my_state, behavior, env)

    switched_to_executing = False
    if node.mode == EXECUTING:
        if behavior is None:
            raise AgentError(f"robot {node.id}: executing with no behavior spec")
        # completion latches for the rest of the behavior: teammates that
        # switch early may perturb the configuration, which must not revoke
        # an already-achieved completion and deadlock the consensus
        node.s_task = node.s_task or behaviors.is_complete(
            behavior.completion, u_hat, node.elapsed, my_state
        )
        node.sigma = consensus_update(
            node.s_task, node.sigma, _aligned_values(node, env, "sigma")
        )
        node.elapsed += dt
        if node.sigma > env.sigma_bar:
            events.append(
                {"event": "behavior_complete_local", "robot": node.id, "k": node.behavior_index}
            )
            node.behavior_index += 1
            node.sigma = 0.0
            node.eta = 0.0
            node.s_task = False
            node.s_assembly = False
            if node.done:
                events.append({"event": "mission_done_local", "robot": node.id})
            else:
                node.mode = ASSEMBLING
                events.append(
                    {
                        "event": "mode_switch",
                        "robot": node.id,
                        "mode": "assembling",
                        "k": node.behavior_index,
                    }
                )
    else:
        if next_behavior is None:
            raise AgentError(f"robot {node.id}: assembling with no target behavior")
        required = next_behavior.required_graph.neighbors(node.id)
        node.s_assembly = all(j in env.live_neighbors for j in required)
        node.eta = consensus_update(
            node.s_assembly, node.eta, _aligned_values(node, env, "eta")
        )
        if node.eta > env.eta_bar:
            node.mode = EXECUTING
            node.s_task = False
            node.elapsed = 0.0
            switched_to_executing = True
            events.append(
                {
                    "event": "mode_switch",
                    "robot": node.id,
                    "mode": "executing",
                    "k": node.behavior_index,
                }
            )

    u = np.zeros(2)
    if not node.done:
        row_delta = env.delta
        if node.mode == EXECUTING:
            active = next_behavior if switched_to_executing else behavior
            graphs = [active.required_graph]
            constraint_spec = active
        elif env.glue_transitions:
            # glue baseline: rendezvous does the assembling, no transition rows
            graphs = []
            constraint_spec = None
        else:
            graphs = [next_behavior.required_graph]
            if behavior is not None:
                graphs.append(behavior.required_graph)
            constraint_spec = next_behavior
            row_delta = env.delta * ASSEMBLY_RANGE_FACTOR
        rows = _connectivity_rows(node, my_state, graphs, env, events, row_delta)
        rows += _safety_rows(node, my_state, env)
        rows += _initial_rows(node, my_state, constraint_spec, env)
        problem = QpProblem(u_hat, tuple(rows), env.speed_limit)
        solution = solve(problem)
        u = solution.u
        if solution.status == "infeasible_hard":
            events.append(
                {"event": "qp_infeasible_hard", "robot": node.id, "k": node.behavior_index}
            )
        elif solution.status == "relaxed":
            events.append(
                {"event": "qp_relaxed", "robot": node.id, "k": node.behavior_index}
            )

    outbox = AgentMessage(
        sender=node.id,
        position=tuple(my_state.position),
        sigma=node.sigma,
        eta=node.eta,
        behavior_index=node.behavior_index,
    )
    return node, u, outbox, events
