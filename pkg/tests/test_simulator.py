import json

import pytest
from hypothesis import given, settings, strategies as st

from beeprv.graph_core import generate_family
from beeprv.protocols import ProtocolConfig
from beeprv.simulator import (
    DECLARE,
    STAY,
    AgentAction,
    AgentSpec,
    BeepModel,
    EnergyExhaustedError,
    Heard,
    Scenario,
    ScenarioError,
    Trace,
    classify,
    elapsed_since_later,
    energy_charge,
    run,
    summary_csv,
    summary_row,
)

K2 = generate_family("k2", 2)
RING3 = generate_family("ring", 3)
BEEP = AgentAction(beep=True)


class Script:
    """Plays a fixed list of actions, then stays; keeps every observation."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.seen = []

    def act(self, obs):
        self.seen.append(obs)
        k = len(self.seen) - 1
        return self.actions[k] if k < len(self.actions) else STAY


def scenario(g=K2, starts=(0, 0), model=BeepModel.LOCAL, delays=(0, 0), budgets=(None, None), limit=10):
    return Scenario(g, tuple(AgentSpec(i + 1, starts[i], delays[i], budgets[i]) for i in (0, 1)), model, limit)


def test_both_beep_neither_hears():
    a, b = Script([BEEP]), Script([BEEP])
    run(scenario(limit=2), [a, b])
    assert a.seen[1].heard is None and b.seen[1].heard is None


def test_global_soft_beep_elsewhere():
    a, b = Script([BEEP]), Script([])
    run(scenario(RING3, (0, 1), BeepModel.GLOBAL, limit=2), [a, b])
    assert b.seen[1].heard is Heard.SOFT
    assert not b.seen[1].heard.here


def test_global_loud_and_local_beep_when_co_located():
    a, b = Script([BEEP]), Script([])
    run(scenario(model=BeepModel.GLOBAL, limit=2), [a, b])
    assert b.seen[1].heard is Heard.LOUD
    a, b = Script([BEEP]), Script([])
    run(scenario(limit=2), [a, b])
    assert b.seen[1].heard is Heard.BEEP


def test_local_apart_hears_nothing():
    a, b = Script([BEEP]), Script([])
    run(scenario(starts=(0, 1), limit=2), [a, b])
    assert b.seen[1].heard is None


def test_audibility_uses_post_move_positions():
    # the beeper moves onto the listener in the beep round
    a, b = Script([AgentAction(0, True)]), Script([])
    run(scenario(starts=(0, 1), limit=2), [a, b])
    assert b.seen[1].heard is Heard.BEEP
    assert a.seen[1].entry_port == 0


def test_observation_at_activation():
    a, b = Script([]), Script([])
    run(scenario(RING3, (0, 2), delays=(0, 3), limit=5), [a, b])
    assert len(a.seen) == 5 and len(b.seen) == 2
    first = b.seen[0]
    assert first.just_activated and first.degree == 2 and first.heard is None and first.entry_port == -1


def test_energy_charge_examples():
    left = 3
    for moved in (True, False, False, True, True):
        left = energy_charge(left, moved)
    assert left == 0
    left = energy_charge(1, True)
    with pytest.raises(EnergyExhaustedError):
        energy_charge(left, True)
    assert energy_charge(None, True) is None


def test_energy_exhausted_outcome():
    a = Script([AgentAction(0), AgentAction(0)])
    trace, outcome = run(scenario(starts=(0, 1), budgets=(1, None)), [a, Script([])])
    assert outcome.kind == "energy_exhausted" and outcome.agent == 0 and outcome.round == 1
    assert trace.moves[0] == 1


def test_beeps_are_free():
    a = Script([BEEP] * 5)
    _, outcome = run(scenario(budgets=(0, 0), limit=5), [a, Script([])])
    assert outcome.kind == "timeout"


def test_invalid_port_is_hard_error():
    with pytest.raises(ScenarioError, match="invalid port"):
        run(scenario(), [Script([AgentAction(1)]), Script([])])


def test_classify_examples():
    t = Trace((0, 0), declarations=[(17, 0, 2), (17, 1, 2)])
    out = classify(t)
    assert (out.kind, out.round, out.node) == ("success", 17, 2)
    assert classify(Trace((0, 0), declarations=[(17, 0, 2)])).kind == "false_declaration"
    assert classify(Trace((0, 0), declarations=[(17, 0, 2), (18, 1, 2)])).kind == "false_declaration"
    assert classify(Trace((0, 0), declarations=[(17, 0, 1), (17, 1, 2)])).kind == "false_declaration"
    assert classify(Trace((0, 0), round_limit=50)).kind == "timeout"


def test_one_declares_other_continues():
    _, outcome = run(scenario(), [Script([DECLARE]), Script([])])
    assert outcome.kind == "false_declaration"


def test_success_and_elapsed():
    sc = scenario(delays=(0, 2))
    _, outcome = run(sc, [Script([STAY] * 3 + [DECLARE]), Script([STAY, DECLARE])])
    assert (outcome.kind, outcome.round) == ("success", 3)
    assert elapsed_since_later(sc, outcome) == 2


def test_lone_agent_times_out():
    sc = scenario(delays=(0, 100), limit=20)
    _, outcome = run(sc, [Script([]), Script([])])
    assert outcome.kind == "timeout"


@pytest.mark.parametrize("bad", [
    dict(labels=(1, 1)),
    dict(starts=(0, 5)),
    dict(delays=(0, -1)),
    dict(budgets=(-1, None)),
])
def test_scenario_validation(bad):
    labels = bad.get("labels", (1, 2))
    starts = bad.get("starts", (0, 1))
    delays = bad.get("delays", (0, 0))
    budgets = bad.get("budgets", (None, None))
    sc = Scenario(K2, tuple(AgentSpec(labels[i], starts[i], delays[i], budgets[i]) for i in (0, 1)))
    with pytest.raises(ScenarioError):
        run(sc, [Script([]), Script([])])


def test_trace_export(cache):
    config = ProtocolConfig("rv_detect", cache)
    sc = scenario(starts=(0, 1), limit=200)
    trace, outcome = run(sc, config.factory())
    lines = trace.to_jsonl().splitlines()
    first = json.loads(lines[0])
    assert set(first) == {"round", "agent", "position", "motion", "sound", "heard", "declared", "moves_used"}
    assert json.loads(lines[-1])["declared"]
    csv_text = summary_csv([summary_row("k2", sc, trace, outcome)])
    assert csv_text.splitlines()[0].startswith("scenario,outcome,declaration_round")


def test_positions_legal_and_moves_match_trace(cache):
    config = ProtocolConfig("rv_detect", cache)
    sc = scenario(RING3, (0, 2), delays=(0, 3), limit=400)
    trace, _ = run(sc, config.factory())
    for agent in (0, 1):
        recs = [r for r in trace.records if r.agent == agent]
        assert recs[-1].moves_used == trace.moves[agent]
        here = sc.agents[agent].start
        for r in recs:
            if r.port is None:
                assert r.position == here
            else:
                assert r.position == RING3.adjacency[here][r.port][0]
            here = r.position


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.integers(1, 6), st.integers(7, 12), st.integers(0, 10))
def test_determinism_property(cache, sa, sb, la, lb, d):
    config = ProtocolConfig("rv_detect", cache)
    sc = Scenario(RING3, (AgentSpec(la, sa, 0), AgentSpec(lb, sb, d)), BeepModel.LOCAL,
                  config.default_round_limit((la, lb), d))
    t1, o1 = run(sc, config.factory())
    t2, o2 = run(sc, config.factory())
    assert t1.to_jsonl() == t2.to_jsonl() and o1 == o2
    assert o1.success
