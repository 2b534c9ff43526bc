"""Mission plans: an ordered behavior sequence plus the world it runs in.

Mission files are YAML documents with four sections (``mission``, ``domain``,
``behaviors``, ``sim``) and an optional ``rescue`` section for scenarios that
track a subject to be escorted. The grammar is documented in the README and
the packaged scenario files are the reference examples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from . import behaviors as bh
from .barriers import FcbfParams, KeepWithin
from .geometry import Domain, InteractionGraph, Obstacle
from .sim import DelaySpec, SimConfig


class MissionFormatError(ValueError):
    """Unparseable or structurally invalid mission document."""


@dataclass(frozen=True)
class BehaviorSpec:
    """One step of the mission: controller, required graph, completion test."""

    controller: object
    required_graph: InteractionGraph
    completion: object
    initial_constraints: tuple = ()
    name: str = ""


@dataclass(frozen=True)
class RescueProbe:
    """Scenario bookkeeping for locate-and-escort missions."""

    target: tuple
    safe_center: tuple
    safe_radius: float
    escort_behavior: int  # 1-based index of the escorting behavior
    escort_robots: tuple

    def __post_init__(self):
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))
        object.__setattr__(
            self, "safe_center", (float(self.safe_center[0]), float(self.safe_center[1]))
        )
        object.__setattr__(self, "escort_robots", tuple(int(r) for r in self.escort_robots))


@dataclass(frozen=True)
class MissionPlan:
    n: int
    initial_positions: np.ndarray
    behaviors: tuple
    domain: Domain
    fcbf: FcbfParams
    delta: float
    min_sep: float
    rescue: RescueProbe | None = None

    def __post_init__(self):
        pos = np.asarray(self.initial_positions, dtype=float).reshape(self.n, 2)
        object.__setattr__(self, "initial_positions", pos)
        object.__setattr__(self, "behaviors", tuple(self.behaviors))


def validate(plan):
    """All structural violations of the plan; empty means runnable."""
    out = []
    if len(plan.behaviors) < 1:
        out.append("mission has no behaviors")
    if plan.delta <= plan.min_sep:
        out.append(
            f"sensing range {plan.delta:g} must exceed minimum separation {plan.min_sep:g}"
        )
    for idx, pos in enumerate(plan.initial_positions, start=1):
        if not plan.domain.contains(pos):
            out.append(f"initial position of robot {idx} lies outside the domain")
    for i in range(plan.n):
        for j in range(i + 1, plan.n):
            d = plan.initial_positions[i] - plan.initial_positions[j]
            if float(np.linalg.norm(d)) <= plan.min_sep:
                out.append(
                    f"robots {i + 1} and {j + 1} start within the minimum separation"
                )
    for k, spec in enumerate(plan.behaviors, start=1):
        label = spec.name or f"behavior {k}"
        if spec.required_graph.n != plan.n:
            out.append(f"{label}: required graph has {spec.required_graph.n} vertices, not {plan.n}")
            continue
        for v in bh.validate_requirements(spec.controller, spec.required_graph, plan.delta):
            out.append(f"{label}: {v}")
        for kind in spec.initial_constraints:
            if not (1 <= kind.i <= plan.n):
                out.append(f"{label}: initial constraint references robot {kind.i}")
    if plan.rescue is not None:
        r = plan.rescue
        if not (1 <= r.escort_behavior <= len(plan.behaviors)):
            out.append(f"rescue: escort behavior index {r.escort_behavior} out of range")
        bad = [i for i in r.escort_robots if not (1 <= i <= plan.n)]
        if bad:
            out.append(f"rescue: escort robots {bad} out of range")
    return out


# --- document parsing ---------------------------------------------------------


def _req(section, key, where):
    if key not in section:
        raise MissionFormatError(f"missing '{key}' in {where}")
    return section[key]


def _edges(raw, where):
    try:
        return [(int(i), int(j)) for i, j in raw]
    except (TypeError, ValueError) as exc:
        raise MissionFormatError(f"bad edge list in {where}: {exc}") from None


def _vec(raw, where):
    try:
        x, y = float(raw[0]), float(raw[1])
    except (TypeError, ValueError, IndexError):
        raise MissionFormatError(f"bad 2-vector in {where}: {raw!r}") from None
    return (x, y)


def _parse_controller(doc, n, where):
    kind = _req(doc, "controller", where)
    if kind == "rendezvous":
        return bh.Rendezvous()
    if kind == "scatter":
        return bh.Scatter()
    if kind == "formation":
        dist = {(int(i), int(j)): float(t) for i, j, t in _req(doc, "distances", where)}
        return bh.Formation(distances=dist)
    if kind == "leader_follower":
        dist = {(int(i), int(j)): float(t) for i, j, t in _req(doc, "distances", where)}
        return bh.LeaderFollower(
            leader=int(_req(doc, "leader", where)),
            goal=_vec(_req(doc, "goal", where), where),
            gain=float(doc.get("gain", 1.0)),
            distances=dist,
            leader_formation_term=bool(doc.get("leader_formation_term", False)),
        )
    if kind == "cyclic_pursuit":
        return bh.CyclicPursuit(angle=float(_req(doc, "angle", where)))
    if kind == "lattice":
        return bh.Lattice(spacing=float(_req(doc, "spacing", where)))
    if kind == "coverage":
        b = _req(doc, "coverage_bounds", where)
        return bh.Coverage(domain=Domain(float(b[0]), float(b[1]), float(b[2]), float(b[3])))
    if kind == "go_to_goal":
        goals = {int(i): _vec(g, where) for i, g in _req(doc, "goals", where).items()}
        return bh.GoToGoal(goals=goals, gain=float(doc.get("gain", 1.0)))
    if kind == "containment":
        return bh.Containment(
            angle=float(_req(doc, "angle", where)),
            goal=_vec(_req(doc, "goal", where), where),
            gain=float(doc.get("gain", 1.0)),
        )
    if kind == "composite":
        groups = []
        for gi, g in enumerate(_req(doc, "groups", where)):
            gwhere = f"{where} group {gi}"
            groups.append(
                bh.CompositeGroup(
                    robots=tuple(int(r) for r in _req(g, "robots", gwhere)),
                    controller=_parse_controller(g, n, gwhere),
                    edges=tuple(_edges(g.get("edges", []), gwhere)),
                )
            )
        return bh.Composite(groups=tuple(groups))
    raise MissionFormatError(f"unknown controller '{kind}' in {where}")


def _parse_completion(doc, where):
    kind = _req(doc, "type", where)
    if kind == "control_norm_below":
        return bh.ControlNormBelow(epsilon=float(_req(doc, "epsilon", where)))
    if kind == "elapsed":
        return bh.ElapsedTime(duration=float(_req(doc, "duration", where)))
    if kind == "goal_reached":
        return bh.GoalReached(
            goal=_vec(_req(doc, "goal", where), where), radius=float(_req(doc, "radius", where))
        )
    raise MissionFormatError(f"unknown completion type '{kind}' in {where}")


def _parse_initial_constraint(doc, where):
    kind = _req(doc, "type", where)
    if kind == "keep_within":
        return KeepWithin(
            i=int(_req(doc, "robot", where)),
            center=_vec(_req(doc, "center", where), where),
            radius=float(_req(doc, "radius", where)),
        )
    raise MissionFormatError(f"unknown initial constraint type '{kind}' in {where}")


def parse_mission(text):
    """Parse a mission document into (MissionPlan, SimConfig)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MissionFormatError(f"not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise MissionFormatError("mission document must be a mapping")

    mission = _req(doc, "mission", "document")
    n = int(_req(mission, "n", "[mission]"))
    delta = float(_req(mission, "delta", "[mission]"))
    positions = [_vec(p, "[mission] initial_positions") for p in _req(mission, "initial_positions", "[mission]")]
    if len(positions) != n:
        raise MissionFormatError(f"expected {n} initial positions, got {len(positions)}")

    dom_doc = _req(doc, "domain", "document")
    b = _req(dom_doc, "bounds", "[domain]")
    obstacles = tuple(
        Obstacle(
            center=np.asarray(_vec(_req(o, "center", "[domain] obstacle"), "[domain] obstacle")),
            a=float(_req(o, "a", "[domain] obstacle")),
            b=float(_req(o, "b", "[domain] obstacle")),
        )
        for o in dom_doc.get("obstacles", [])
    )
    domain = Domain(float(b[0]), float(b[1]), float(b[2]), float(b[3]), obstacles)

    specs = []
    for bi, bdoc in enumerate(_req(doc, "behaviors", "document"), start=1):
        where = f"behavior {bi}"
        controller = _parse_controller(bdoc, n, where)
        graph = InteractionGraph.from_edges(n, _edges(bdoc.get("graph", []), where))
        completion = _parse_completion(_req(bdoc, "completion", where), where)
        init = tuple(
            _parse_initial_constraint(c, f"{where} initial constraint")
            for c in bdoc.get("initial_constraints", [])
        )
        specs.append(
            BehaviorSpec(
                controller=controller,
                required_graph=graph,
                completion=completion,
                initial_constraints=init,
                name=str(bdoc.get("name", "")),
            )
        )

    rescue = None
    if "rescue" in doc:
        r = doc["rescue"]
        sz = _req(r, "safe_zone", "[rescue]")
        rescue = RescueProbe(
            target=_vec(_req(r, "target", "[rescue]"), "[rescue]"),
            safe_center=_vec(_req(sz, "center", "[rescue] safe_zone"), "[rescue]"),
            safe_radius=float(_req(sz, "radius", "[rescue] safe_zone")),
            escort_behavior=int(_req(r, "escort_behavior", "[rescue]")),
            escort_robots=tuple(int(i) for i in _req(r, "escort_robots", "[rescue]")),
        )

    plan = MissionPlan(
        n=n,
        initial_positions=np.asarray(positions),
        behaviors=tuple(specs),
        domain=domain,
        fcbf=FcbfParams(
            rho=float(mission.get("rho", 0.5)), gamma=float(mission.get("gamma", 1.0))
        ),
        delta=delta,
        min_sep=float(mission.get("min_sep", 0.12)),
        rescue=rescue,
    )

    sim_doc = doc.get("sim", {})
    delay_doc = sim_doc.get("delay", "none")
    if delay_doc == "none" or delay_doc is None:
        delay = DelaySpec.none()
    else:
        delay = DelaySpec.uniform(int(delay_doc["min"]), int(delay_doc["max"]))
    config = SimConfig(
        dt=float(sim_doc.get("dt", 0.02)),
        max_ticks=int(sim_doc.get("max_ticks", 20000)),
        delta=float(sim_doc.get("delta", delta)),
        speed_limit=float(sim_doc.get("speed_limit", 0.2)),
        delay=delay,
        seed=int(sim_doc.get("seed", 0)),
        oracle_sensing=bool(sim_doc.get("oracle_sensing", True)),
        sigma_bar=float(sim_doc.get("sigma_bar", 0.8)),
        eta_bar=float(sim_doc.get("eta_bar", 0.8)),
        staleness_ticks=int(sim_doc.get("staleness_ticks", 50)),
    )
    return plan, config


# --- document serialization ----------------------------------------------------


def _controller_doc(controller):
    if isinstance(controller, bh.Rendezvous):
        return {"controller": "rendezvous"}
    if isinstance(controller, bh.Scatter):
        return {"controller": "scatter"}
    if isinstance(controller, bh.Formation):
        return {
            "controller": "formation",
            "distances": [[i, j, t] for (i, j), t in sorted(controller.distances.items())],
        }
    if isinstance(controller, bh.LeaderFollower):
        doc = {
            "controller": "leader_follower",
            "leader": controller.leader,
            "goal": list(controller.goal),
            "gain": controller.gain,
            "distances": [[i, j, t] for (i, j), t in sorted(controller.distances.items())],
        }
        if controller.leader_formation_term:
            doc["leader_formation_term"] = True
        return doc
    if isinstance(controller, bh.CyclicPursuit):
        return {"controller": "cyclic_pursuit", "angle": controller.angle}
    if isinstance(controller, bh.Lattice):
        return {"controller": "lattice", "spacing": controller.spacing}
    if isinstance(controller, bh.Coverage):
        d = controller.domain
        return {"controller": "coverage", "coverage_bounds": [d.xmin, d.xmax, d.ymin, d.ymax]}
    if isinstance(controller, bh.GoToGoal):
        return {
            "controller": "go_to_goal",
            "gain": controller.gain,
            "goals": {i: list(g) for i, g in sorted(controller.goals.items())},
        }
    if isinstance(controller, bh.Containment):
        return {
            "controller": "containment",
            "angle": controller.angle,
            "goal": list(controller.goal),
            "gain": controller.gain,
        }
    if isinstance(controller, bh.Composite):
        return {
            "controller": "composite",
            "groups": [
                {
                    "robots": list(g.robots),
                    "edges": [list(e) for e in sorted(g.edges)],
                    **_controller_doc(g.controller),
                }
                for g in controller.groups
            ],
        }
    raise MissionFormatError(f"cannot serialize controller {controller!r}")


def _completion_doc(completion):
    if isinstance(completion, bh.ControlNormBelow):
        return {"type": "control_norm_below", "epsilon": completion.epsilon}
    if isinstance(completion, bh.ElapsedTime):
        return {"type": "elapsed", "duration": completion.duration}
    if isinstance(completion, bh.GoalReached):
        return {"type": "goal_reached", "goal": list(completion.goal), "radius": completion.radius}
    raise MissionFormatError(f"cannot serialize completion {completion!r}")


def serialize_mission(plan, config):
    """Serialize a plan and config back to the YAML document form."""
    doc = {
        "mission": {
            "n": plan.n,
            "delta": plan.delta,
            "min_sep": plan.min_sep,
            "rho": plan.fcbf.rho,
            "gamma": plan.fcbf.gamma,
            "initial_positions": [[float(x), float(y)] for x, y in plan.initial_positions],
        },
        "domain": {
            "bounds": [plan.domain.xmin, plan.domain.xmax, plan.domain.ymin, plan.domain.ymax],
            "obstacles": [
                {"center": [float(o.center[0]), float(o.center[1])], "a": o.a, "b": o.b}
                for o in plan.domain.obstacles
            ],
        },
        "behaviors": [],
        "sim": {
            "dt": config.dt,
            "max_ticks": config.max_ticks,
            "delta": config.delta,
            "speed_limit": config.speed_limit,
            "delay": (
                "none"
                if config.delay.kind == "none"
                else {"min": config.delay.min_ticks, "max": config.delay.max_ticks}
            ),
            "seed": config.seed,
            "oracle_sensing": config.oracle_sensing,
            "sigma_bar": config.sigma_bar,
            "eta_bar": config.eta_bar,
            "staleness_ticks": config.staleness_ticks,
        },
    }
    for spec in plan.behaviors:
        bdoc = {"name": spec.name} if spec.name else {}
        bdoc.update(_controller_doc(spec.controller))
        bdoc["graph"] = [list(e) for e in spec.required_graph.sorted_edges()]
        bdoc["completion"] = _completion_doc(spec.completion)
        if spec.initial_constraints:
            bdoc["initial_constraints"] = [
                {
                    "type": "keep_within",
                    "robot": c.i,
                    "center": list(c.center),
                    "radius": c.radius,
                }
                for c in spec.initial_constraints
            ]
        doc["behaviors"].append(bdoc)
    if plan.rescue is not None:
        doc["rescue"] = {
            "target": list(plan.rescue.target),
            "safe_zone": {
                "center": list(plan.rescue.safe_center),
                "radius": plan.rescue.safe_radius,
            },
            "escort_behavior": plan.rescue.escort_behavior,
            "escort_robots": list(plan.rescue.escort_robots),
        }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None)


def load_mission_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mission(fh.read())


def builtin_scenario(name):
    """Load one of the packaged scenarios by its stable CLI name."""
    from importlib import resources

    names = builtin_scenario_names()
    if name not in names:
        raise KeyError(f"unknown scenario '{name}'; available: {', '.join(names)}")
    text = resources.files("swarmseq.scenarios").joinpath(f"{name}.yaml").read_text()
    return parse_mission(text)


def builtin_scenario_names():
    return ("two_behavior_demo", "seven_behavior_energy", "securing_a_building")
