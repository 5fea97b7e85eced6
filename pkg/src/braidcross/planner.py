"""Per-agent speed policies: blind (C1), entropy over braids (C2, C3) and
entropy over individual rollouts (C4, C5)."""

from __future__ import annotations

from dataclasses import dataclass

from .belief import HIGH, LOW, Belief, BeliefConfig, RolloutCache, compute_belief, entropy
from .world import NEGOTIATION, Scene

TIE_TOL = 1e-9


@dataclass(frozen=True)
class PolicyCondition:
    tag: str
    knows_paths: bool
    topological: bool

    @property
    def blind(self) -> bool:
        return self.tag == "C1"

    @classmethod
    def of(cls, tag: str) -> "PolicyCondition":
        tag = tag.upper().rstrip("'")
        try:
            return CONDITIONS[tag]
        except KeyError:
            raise ValueError(f"unknown condition {tag!r}") from None


CONDITIONS = {
    "C1": PolicyCondition("C1", knows_paths=False, topological=False),
    "C2": PolicyCondition("C2", knows_paths=False, topological=True),
    "C3": PolicyCondition("C3", knows_paths=True, topological=True),
    "C4": PolicyCondition("C4", knows_paths=False, topological=False),
    "C5": PolicyCondition("C5", knows_paths=True, topological=False),
}


def tie_break(entropies: dict[int, float], tol: float = TIE_TOL) -> int:
    """argmin over speed choices; near-ties go to the high speed."""
    lo, hi = entropies[LOW], entropies[HIGH]
    if hi <= lo + tol:
        return HIGH
    return LOW


@dataclass(frozen=True)
class Decision:
    time: float
    agent: int
    choice: int
    entropies: dict | None = None
    mass_error: float = 0.0  # largest |total belief mass - 1| over the candidates

    def record(self) -> dict:
        rec = {"t": round(self.time, 9), "agent": self.agent,
               "choice": "high" if self.choice == HIGH else "low"}
        if self.entropies is not None:
            rec["entropy_low"] = self.entropies[LOW]
            rec["entropy_high"] = self.entropies[HIGH]
            rec["mass_error"] = self.mass_error
        return rec


def candidate_beliefs(scene: Scene, ego: int, condition: PolicyCondition,
                      config: BeliefConfig = BeliefConfig(),
                      cache: RolloutCache | None = None,
                      records: list | None = None) -> dict[int, Belief]:
    """Belief conditioned on each of the ego's speed choices.

    ``records`` collects the hypothesis table of every candidate.
    """
    if cache is None:
        cache = RolloutCache(scene, config)
    outcome = "braid" if condition.topological else "trajectory"
    out = {}
    for u in (LOW, HIGH):
        table = [] if records is not None else None
        out[u] = compute_belief(scene, ego, u, known_paths=condition.knows_paths,
                                outcome=outcome, config=config, cache=cache, records=table)
        if table:
            records.extend(dict(r, ego_action="high" if u == HIGH else "low",
                                condition=condition.tag) for r in table)
    return out


def candidate_entropies(scene: Scene, ego: int, condition: PolicyCondition,
                        config: BeliefConfig = BeliefConfig(),
                        cache: RolloutCache | None = None) -> dict[int, float]:
    bels = candidate_beliefs(scene, ego, condition, config, cache)
    return {u: entropy(b, config.entropy_mode) for u, b in bels.items()}


def decide(scene: Scene, ego: int, condition: PolicyCondition | str,
           config: BeliefConfig = BeliefConfig(), cache: RolloutCache | None = None,
           records: list | None = None) -> Decision:
    """Speed choice of ``ego`` for the next planning cycle."""
    if isinstance(condition, str):
        condition = PolicyCondition.of(condition)
    agent = scene.state.agents[ego]
    t = scene.state.time
    if condition.blind or scene.specs[ego].inattentive:
        return Decision(t, ego, HIGH)
    if agent.region != NEGOTIATION:
        return Decision(t, ego, scene.speed_idx[ego])
    bels = candidate_beliefs(scene, ego, condition, config, cache, records)
    ent = {u: entropy(b, config.entropy_mode) for u, b in bels.items()}
    err = max(abs(b.total() - 1.0) for b in bels.values())
    return Decision(t, ego, tie_break(ent), ent, err)
