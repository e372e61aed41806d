import numpy as np
import pytest
from hypothesis import given, strategies as st

from beeprv.graph_core import enumerate_port_graphs, generate_family
from beeprv.sweep import first_asymmetric_meeting, idle_record, record_walk
from beeprv.walks import (
    MAX_LABEL,
    beeping_exploration,
    beeping_walk,
    drive,
    modified_beeping_exploration,
    phase_length,
    phi_walk,
    t1_transform,
    t2_transform,
)

K2 = generate_family("k2", 2)


def bits(text):
    return [int(c) for c in text.replace(" ", "")]


def plans(stream, g, start, rounds):
    return list(drive(stream, g, start, rounds))


def test_t1_examples():
    assert t1_transform(1) == [0, 1, 1, 1, 0, 1]
    assert t1_transform(5) == [0, 1, 1, 1, 0, 0, 1, 1, 0, 1]
    assert t1_transform(2) == [0, 1, 1, 1, 0, 0, 0, 1]


def test_t2_examples():
    assert t2_transform(1) == bits("00 10 10 10 00 10")
    assert t2_transform(2) == bits("00 10 10 10 00 00 00 10")


def test_label_range():
    with pytest.raises(ValueError):
        t1_transform(0)
    with pytest.raises(ValueError):
        t2_transform(MAX_LABEL + 1)


@given(st.integers(min_value=1, max_value=MAX_LABEL))
def test_t2_shape(label):
    k = label.bit_length()
    t2 = t2_transform(label)
    assert len(t1_transform(label)) == 2 * k + 4
    assert len(t2) == 2 * (2 * k + 4)
    assert all(not (a and b) for a, b in zip(t2, t2[1:]))


def test_t2_injective_on_small_labels():
    assert len({tuple(t2_transform(L)) for L in range(1, 65)}) == 64


def test_phi_phase_one_pattern_label_one(cache):
    active = [plan.active for plan, _ in plans(phi_walk(1, cache), K2, 0, 12)]
    expected = []
    for b in (0, 1, 1, 1, 0, 1):
        expected += [bool(b)] * 2
    assert active == expected


def test_phi_segments_return_to_anchor(cache):
    for g in enumerate_port_graphs(3):
        for s in range(g.node_count):
            length = phase_length(3, cache, 1) + phase_length(3, cache, 2)
            steps = plans(phi_walk(3, cache), g, s, length)
            ends = [0]
            for L in (1, 2):
                m = min(2**L, cache.cap)
                seg = 2 * cache.length(m)
                ends += [ends[-1] + seg * k for k in range(1, len(t1_transform(3)) + 1)]
            for r in ends[1:]:
                assert steps[r - 1][1] == s


def test_phi_labels_one_two_meet_in_phase_one(cache):
    a = record_walk(phi_walk(1, cache), K2, 0, 200)
    for start in (0, 1):
        b = record_walk(phi_walk(2, cache), K2, start, 200)
        found = first_asymmetric_meeting(a, b, np.array([0]))[0]
        assert 0 < found <= phase_length(1, cache, 1)


def test_phi_against_idle_on_ring(cache):
    ring = generate_family("ring", 3)
    window = phase_length(3, cache, 1) + phase_length(3, cache, 2)
    for s in range(3):
        for t in range(3):
            walk = record_walk(phi_walk(3, cache), ring, s, 400)
            idle = idle_record(t, 400)
            found = first_asymmetric_meeting(walk, idle, np.arange(0, 8))
            assert (found > 0).all() and found.max() <= window


def test_beeping_walk_fidelity(cache):
    ring = generate_family("ring", 4)
    inner = plans(phi_walk(6, cache), ring, 1, 300)
    outer = plans(beeping_walk(6, cache), ring, 1, 600)
    for k, (plan, v) in enumerate(inner):
        first, second = outer[2 * k], outer[2 * k + 1]
        assert first[1] == second[1] == v
        assert first[0].beep == plan.active
        assert not second[0].beep and not second[0].moves
    sounds = [p.beep for p, _ in outer]
    assert not any(a and b for a, b in zip(sounds, sounds[1:]))


def test_beeping_exploration_k2(cache):
    out = plans(beeping_exploration(2, cache), K2, 0, 10)
    assert [(p.port, p.beep) for p, _ in out] == [(0, True), (None, False), (None, False)]


def test_modified_exploration_k2(cache):
    out = plans(modified_beeping_exploration(2, cache), K2, 0, 10)
    assert [(p.port, p.beep) for p, _ in out] == [(0, True), (None, False)]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exploration_shapes(cache, n):
    g = generate_family("path", n) if n > 2 else K2
    R = cache.length(n)
    full = plans(beeping_exploration(n, cache), g, 0, 10 * R + 10)
    assert len(full) == 3 * R
    assert sum(p.moves for p, _ in full) == R
    assert [i for i, (p, _) in enumerate(full) if p.beep] == list(range(0, 3 * R, 3))
    short = plans(modified_beeping_exploration(n, cache), g, 0, 10 * R + 10)
    assert len(short) == 2 * R
    assert sum(p.moves for p, _ in short) == R
    sounds = [p.beep for p, _ in short]
    assert not any(a and b for a, b in zip(sounds, sounds[1:]))


def test_arrival_exploration_beeps_at_start(cache):
    for g in enumerate_port_graphs(4):
        for s in range(g.node_count):
            out = plans(beeping_exploration(4, cache, "arrival"), g, s, 100)
            heard_at = {v for p, v in out if p.beep}
            assert heard_at == set(range(g.node_count)) or g.node_count == 1


def test_streams_deterministic(cache):
    ring = generate_family("ring", 3)
    assert plans(beeping_walk(5, cache), ring, 2, 500) == plans(beeping_walk(5, cache), ring, 2, 500)
