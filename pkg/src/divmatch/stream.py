"""Real-time diverse matching: the threshold streaming engine.

Each arriving person brings one edge per team. Edges are ranked by marginal
gain (ties: least-loaded team first, then team order) and each is accepted
iff it keeps every knapsack within bound and its gain per unit of normalised
cost clears ``policy.cutoff`` on every knapsack it touches. An edge that alone
uses at least half of some knapsack and clears the cutoff from the empty set
replaces the whole allocation and stops the engine.

Knapsack costs are normalised to the policy's reference bound ``b``
(cost * b / bound) so knapsacks with different bounds share one cutoff; when
every bound equals ``b`` this is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Literal, Sequence

from .core import DivmatchError, Edge, Instance, MatchState, Person, check, check_person
from .objective import marginal_gain, singleton_gain
from .optimum import ThresholdPolicy

EPS = 1e-9

# "gain": edges of one arrival in descending marginal gain (the default);
# "team": edges in fixed team order, a lower-bound variant used in reproductions
EdgeOrder = Literal["gain", "team"]
RejectReason = Literal["below_cutoff", "team_full", "person_full", "budget_exhausted", "engine_terminated"]

class EngineClosed(DivmatchError):
    """Raised for arrivals after termination or beyond M."""


@dataclass(frozen=True)
class EdgeDecision:
    team: str
    gain: float
    accepted: bool
    reason: RejectReason | None = None
    big_item: bool = False


@dataclass(frozen=True)
class ArrivalDecision:
    person: str
    index: int
    edges: tuple[EdgeDecision, ...]

    @property
    def accepted_teams(self) -> list[str]:
        return [e.team for e in self.edges if e.accepted]

    def to_record(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "person": self.person,
            "edges": [
                {
                    "team": e.team,
                    "gain": round(e.gain, 12),
                    "accepted": e.accepted,
                    "reason": e.reason,
                    **({"big_item": True} if e.big_item else {}),
                }
                for e in self.edges
            ],
        }


@dataclass
class StreamResult:
    state: MatchState
    decisions: list[ArrivalDecision]
    interviews_used: int


class Engine:
    """Mutable engine state for one stream; not safe for concurrent mutation."""

    def __init__(self, instance: Instance, policy: ThresholdPolicy, edge_order: EdgeOrder = "gain"):
        if edge_order not in ("gain", "team"):
            raise ValueError(f"edge_order must be 'gain' or 'team', got {edge_order!r}")
        self.instance = check(instance)
        self.policy = policy
        self.edge_order = edge_order
        self.state = MatchState.empty(instance)
        self.arrivals_seen = 0
        self.terminated = False

    @property
    def cutoff(self) -> float:
        return self.policy.cutoff

    def _scale(self, idx: int, person: Person) -> float:
        return self.policy.b / self.instance.knapsack_bound(idx, person)

    def _passes(self, gain: float, edge: Edge, person: Person) -> bool:
        for idx, c in enumerate(edge.costs):
            if c > 0 and gain < self.cutoff * c * self._scale(idx, person) - EPS:
                return False
        return True

    def _big_item(self, edge: Edge, person: Person) -> bool:
        inst = self.instance
        bounds = [inst.knapsack_bound(idx, person) for idx in range(inst.d)]
        heavy = [idx for idx, (c, bnd) in enumerate(zip(edge.costs, bounds)) if c > 0 and c >= bnd / 2]
        if not heavy or any(c > bnd + EPS for c, bnd in zip(edge.costs, bounds)):
            return False
        single = singleton_gain(edge, inst)
        return any(single >= self.cutoff * edge.costs[idx] * self._scale(idx, person) - EPS for idx in heavy)

    def process(self, person: Person) -> ArrivalDecision:
        if self.terminated:
            raise EngineClosed("engine terminated by a big-item acceptance")
        if self.arrivals_seen >= self.instance.max_arrivals:
            raise EngineClosed(f"more than M = {self.instance.max_arrivals} arrivals")
        check_person(self.instance, person)
        self.arrivals_seen += 1
        inst, state = self.instance, self.state

        edges = [inst.make_edge(person, t.id) for t in inst.teams]
        if self.edge_order == "gain":
            ranked = sorted(
                enumerate(edges),
                key=lambda je: (-round(marginal_gain(state, je[1]), 12), state.team_load[je[0]], je[0]),
            )
        else:
            ranked = list(enumerate(edges))
        out: list[EdgeDecision] = []
        for _, edge in ranked:
            gain = marginal_gain(state, edge)
            if self.terminated:
                out.append(EdgeDecision(edge.team, gain, False, "engine_terminated"))
                continue
            if self._big_item(edge, person):
                state.reset()
                state.add(edge)
                self.terminated = True
                out.append(EdgeDecision(edge.team, singleton_gain(edge, inst), True, None, big_item=True))
                continue
            reason = state.blocking_reason(edge, person)
            if reason is None and not self._passes(gain, edge, person):
                reason = "below_cutoff"
            if reason is None:
                state.add(edge)
            out.append(EdgeDecision(edge.team, gain, reason is None, reason))
        return ArrivalDecision(person.id, self.arrivals_seen, tuple(out))


def new_engine(instance: Instance, policy: ThresholdPolicy, edge_order: EdgeOrder = "gain") -> Engine:
    return Engine(instance, policy, edge_order)


def process_arrival(engine: Engine, person: Person) -> ArrivalDecision:
    return engine.process(person)


def run_stream(
    instance: Instance,
    policy: ThresholdPolicy,
    arrivals: Sequence[Person],
    edge_order: EdgeOrder = "gain",
) -> StreamResult:
    """Replay ``arrivals`` in order; interviews_used is the arrival that filled the last team."""
    if len(arrivals) > instance.max_arrivals:
        raise EngineClosed(f"{len(arrivals)} arrivals exceed M = {instance.max_arrivals}")
    engine = Engine(instance, policy, edge_order)
    decisions: list[ArrivalDecision] = []
    filled_at: int | None = None
    for i, person in enumerate(arrivals, start=1):
        if engine.terminated:
            check_person(instance, person)
            edges = tuple(EdgeDecision(t.id, 0.0, False, "engine_terminated") for t in instance.teams)
            decisions.append(ArrivalDecision(person.id, i, edges))
            continue
        decisions.append(engine.process(person))
        if filled_at is None and engine.state.all_full():
            filled_at = i
    return StreamResult(engine.state, decisions, filled_at if filled_at is not None else len(arrivals))


def interviews_to_fill(decisions: Iterable[ArrivalDecision], instance: Instance) -> int:
    """Recompute interviews_used from a decision log alone."""
    load = {t.id: 0 for t in instance.teams}
    n = 0
    for n, dec in enumerate(decisions, start=1):
        for team in dec.accepted_teams:
            load[team] += 1
        if all(load[t.id] >= t.capacity_max for t in instance.teams):
            return n
    return n

