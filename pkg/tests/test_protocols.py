import itertools

import pytest

from beeprv.graph_core import generate_family
from beeprv.protocols import (
    BoundedEnergyRv,
    ConfigurationError,
    FastBoundedEnergyRv,
    ProtocolConfig,
    all_patterns,
    find_colliding_labels,
    move_pattern,
    pattern_count_bound,
)
from beeprv.simulator import AgentSpec, BeepModel, Heard, Observation, Scenario, run
from beeprv.uxs import UxsError

K2 = generate_family("k2", 2)
RING3 = generate_family("ring", 3)


def play(config, g, labels, starts, delays=(0, 0), model=BeepModel.LOCAL, budget=None, programs=None):
    agents = tuple(AgentSpec(labels[i], starts[i], delays[i], budget) for i in (0, 1))
    limit = config.default_round_limit(labels, max(delays))
    return run(Scenario(g, agents, model, limit), programs or config.factory())


# --- rv_detect -------------------------------------------------------------

def test_rv_detect_k2_fixture(cache):
    config = ProtocolConfig("rv_detect", cache)
    _, outcome = play(config, K2, (1, 2), (0, 0))
    assert (outcome.kind, outcome.round, outcome.node) == ("success", 26, 0)
    _, outcome = play(config, K2, (1, 2), (0, 1))
    assert (outcome.kind, outcome.round, outcome.node) == ("success", 24, 1)


def test_rv_detect_ring3_sweep_and_confirmation_pattern(cache):
    config = ProtocolConfig("rv_detect", cache)
    for starts in itertools.product(range(3), repeat=2):
        for labels in itertools.permutations(range(1, 5), 2):
            for d in range(7):
                trace, outcome = play(config, RING3, labels, starts, (0, d))
                assert outcome.success, (starts, labels, d, outcome)
                D = outcome.round
                at = {(r.round, r.agent): r for r in trace.records}
                first = next(i for i in (0, 1) if at[D - 4, i].heard is not None)
                other = 1 - first
                assert at[D - 3, first].beep and at[D - 2, other].beep
                assert at[D, 0].declared and at[D, 1].declared


# --- bounded_rv ------------------------------------------------------------

def test_bounded_rv_k2(cache):
    config = ProtocolConfig("bounded_rv", cache, 2)
    R = config.exploration_length()
    for starts in ((0, 0), (0, 1)):
        trace, outcome = play(config, K2, (1, 2), starts, budget=config.energy_requirement())
        assert outcome.success
        assert max(trace.moves) <= 2 * R
        assert outcome.round + 1 <= config.time_bound(1, (1, 2))


def test_bounded_rv_waiting_flag(cache):
    prog = BoundedEnergyRv(2, 2, cache)
    R = cache.length(2, "arrival")
    flags = []
    for k in range(3 * R + 12 * R + 3 * R + 5):
        prog.act(Observation(k == 0, 1))
        flags.append(prog.waiting)
    expected = [False] * (3 * R) + [True] * (12 * R) + [False] * (3 * R) + [True] * 5
    assert flags == expected


def _block_intervals(label, R, start):
    explore1 = (start, start + 3 * R)
    wait = (explore1[1], explore1[1] + 6 * label * R)
    explore2 = (wait[1], wait[1] + 3 * R)
    rest = (explore2[1], float("inf"))
    return [explore1, explore2], [wait, rest]


def test_block_overlap_property(cache):
    R = cache.length(4, "arrival")
    for l1, l2 in itertools.permutations(range(1, 9), 2):
        for d in range((2 * 8 + 2) * 3 * R + 6):
            ex_a, quiet_a = _block_intervals(l1, R, 0)
            ex_b, quiet_b = _block_intervals(l2, R, d)
            inside = any(q[0] <= e[0] and e[1] <= q[1]
                         for ex, quiet in ((ex_a, quiet_b), (ex_b, quiet_a))
                         for e in ex for q in quiet)
            assert inside, (l1, l2, d)


# --- fast_rv ---------------------------------------------------------------

def test_symmetry_breaking_fixture(cache):
    config = ProtocolConfig("fast_rv", cache, 2)
    programs = [config.factory()(1), config.factory()(2)]
    _, outcome = play(config, K2, (1, 2), (0, 1), model=BeepModel.GLOBAL, programs=programs)
    one, two = programs
    assert (two.first_heard, two.red_round, two.role) == (11, 13, "walking")
    assert (one.first_heard, one.red_round, one.role) == (12, 13, "waiting")
    assert outcome.success


def test_fast_rv_k2_global(cache):
    config = ProtocolConfig("fast_rv", cache, 2)
    for starts in ((0, 0), (0, 1)):
        _, outcome = play(config, K2, (1, 2), starts, model=BeepModel.GLOBAL)
        assert outcome.success


def test_fast_rv_ring3_declares_two_after_loud_beep(cache):
    config = ProtocolConfig("fast_rv", cache, 3)
    R = config.exploration_length()
    for starts in itertools.product(range(3), repeat=2):
        for labels in itertools.permutations((1, 2, 3, 5), 2):
            for d in range(9):
                programs = [config.factory()(L) for L in labels]
                trace, outcome = play(config, RING3, labels, starts, (0, d), BeepModel.GLOBAL,
                                      programs=programs)
                assert outcome.success
                sigma = min(r.round for r in trace.records if r.heard is Heard.LOUD)
                assert outcome.round == sigma + 2
                for p, moves in zip(programs, trace.moves):
                    assert moves == 0 if p.role == "waiting" else moves <= R


def test_fast_rv_rejects_local_model(cache):
    config = ProtocolConfig("fast_rv", cache, 2)
    with pytest.raises(ConfigurationError, match="global"):
        config.check_model(BeepModel.LOCAL)
    with pytest.raises(ConfigurationError):
        play(config, K2, (1, 2), (0, 0), model=BeepModel.LOCAL)


# --- configuration ---------------------------------------------------------

def test_configuration_errors(cache):
    with pytest.raises(ConfigurationError, match="unknown protocol"):
        ProtocolConfig("magic", cache)
    with pytest.raises(ConfigurationError, match="size bound"):
        ProtocolConfig("bounded_rv", cache)
    with pytest.raises(UxsError):
        ProtocolConfig("fast_rv", cache, 5)
    config = ProtocolConfig("bounded_rv", cache, 3)
    assert config.energy_requirement() == 2 * cache.length(3, "arrival")
    with pytest.raises(ConfigurationError, match="energy budget"):
        config.check_budget(config.energy_requirement() - 1)
    config.check_budget(config.energy_requirement())
    assert ProtocolConfig("fast_rv", cache, 3).energy_requirement() == cache.length(3)
    assert ProtocolConfig("rv_detect", cache).energy_requirement() is None


def test_budget_below_requirement_exhausts(cache):
    config = ProtocolConfig("bounded_rv", cache, 2)
    _, outcome = play(config, K2, (1, 2), (0, 1), budget=1)
    assert outcome.kind == "energy_exhausted"


# --- lower-bound witness ---------------------------------------------------

def test_colliding_labels_small_triple(cache):
    algorithm = ProtocolConfig("bounded_rv", cache, 2).factory()
    c, T, M = 1, 2, 16
    assert pattern_count_bound(c, T) < M
    pair = find_colliding_labels(c, T, M, algorithm)
    assert pair == (1, 2)
    assert move_pattern(algorithm, pair[0], T) == move_pattern(algorithm, pair[1], T)
    trace, _ = run(Scenario(K2, (AgentSpec(pair[0], 0), AgentSpec(pair[1], 1)), BeepModel.LOCAL, T),
                   algorithm)
    by_round = {}
    for r in trace.records:
        by_round.setdefault(r.round, []).append(r.position)
    assert all(a != b for a, b in by_round.values())


def test_collision_contrapositive(cache):
    algorithm = ProtocolConfig("bounded_rv", cache, 2).factory()
    R = cache.length(2, "arrival")
    M = 16
    T = 6 * R + 6 * M * R
    c = 2 * R
    patterns = all_patterns(algorithm, M, T)
    assert len(set(patterns.values())) == M
    assert find_colliding_labels(c, T, M, algorithm) is None
    assert pattern_count_bound(c, T) >= M


def test_strict_rejects_unbounded_algorithm(cache):
    algorithm = ProtocolConfig("bounded_rv", cache, 2).factory()
    with pytest.raises(ValueError, match="not 1-bounded"):
        find_colliding_labels(1, 20, 4, algorithm)


def test_fast_program_is_not_shared(cache):
    a, b = FastBoundedEnergyRv(1, 2, cache), FastBoundedEnergyRv(1, 2, cache)
    assert a is not b and a.bits == b.bits
