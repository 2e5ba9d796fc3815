import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ladderperc.env import (Bond, LadderEnvironment, ModelParams, Orientation, ParameterError,
                            WindowError, classify_bond, conditional_open_prob,
                            sample_configuration, sample_environment, sample_homogeneous)
from ladderperc.perc_core import label_clusters
from ladderperc.rng import Stream


def env_from(h, v, delta=0.1):
    return LadderEnvironment(delta, np.array(h), np.array(v))


def test_degenerate_deltas():
    s = Stream(3)
    assert not sample_environment(0.0, 50, 40, s).xi_h.any()
    e = sample_environment(1.0, 50, 40, s)
    assert e.xi_h.all() and e.xi_v.all()
    assert e.width_h == 50 and e.width_v == 40


def test_bad_delta_and_width():
    with pytest.raises(ParameterError):
        sample_environment(1.5, 10, 10, Stream(0))
    with pytest.raises(ParameterError):
        sample_environment(0.5, 1, 10, Stream(0))


def test_half_delta_law_of_large_numbers():
    means = [sample_environment(0.5, 100_000, 2, Stream(seed)).xi_h.mean() for seed in range(20)]
    assert 0.49 <= np.mean(means) <= 0.51
    assert all(0.49 <= m <= 0.51 for m in means)


def test_text_round_trip():
    e = sample_environment(0.3, 17, 9, Stream(5))
    text = e.to_text()
    assert text.splitlines()[0].startswith("H:") and text.splitlines()[1].startswith("V:")
    assert LadderEnvironment.from_text(text, 0.3) == e


def test_useless_horizontal_bond_on_doubly_bad_line():
    v = [0] * 8
    v[2] = v[3] = 1
    e = env_from([0] * 8, v)
    b = Bond.between((5, 3), (6, 3))
    assert b == Bond(Orientation.H, 5, 3)
    assert classify_bond(e, b).useless
    assert conditional_open_prob(e, ModelParams(0.9, 0.5), b) == 0.0


def test_all_good_environment_is_useful_and_good():
    e = env_from([0] * 6, [0] * 6)
    for o in "HV":
        for i in range(5):
            for t in range(6):
                c = classify_bond(e, Bond(Orientation(o), i, t))
                assert not c.useless and not c.ladder_bad


def test_single_bad_neighbour_ladder_is_not_enough():
    h = [0] * 8
    h[4] = 1
    e = env_from(h, [0] * 8)
    c = classify_bond(e, Bond.between((4, 0), (4, 1)))
    assert not c.useless and not c.ladder_bad


def test_conditional_probabilities():
    e = env_from([0, 1, 0, 0], [0, 0, 1, 0])
    p = ModelParams(0.9, 0.3)
    assert conditional_open_prob(e, p, Bond(Orientation.H, 0, 1)) == 0.9
    assert conditional_open_prob(e, p, Bond(Orientation.H, 1, 1)) == 0.3
    assert conditional_open_prob(e, p, Bond(Orientation.V, 2, 0)) == 0.3


def test_uselessness_depends_only_on_two_flanking_ladders():
    # exhaustive over the four neighbour patterns, both orientations
    for a, b in itertools.product((0, 1), repeat=2):
        for o in "HV":
            h = [0] * 5
            v = [0] * 5
            other = v if o == "H" else h
            other[1], other[2] = a, b
            e = env_from(h, v)
            c = classify_bond(e, Bond(Orientation(o), 0, 2))
            assert c.useless == bool(a and b)
            # symmetric in the two flanking ladders
            other[1], other[2] = b, a
            assert classify_bond(env_from(h, v), Bond(Orientation(o), 0, 2)).useless == c.useless


def test_line_zero_is_never_useless():
    e = env_from([1, 1, 1], [1, 1, 1])
    assert not classify_bond(e, Bond(Orientation.H, 0, 0)).useless
    assert classify_bond(e, Bond(Orientation.H, 0, 1)).useless


def test_out_of_window():
    e = env_from([0] * 4, [0] * 4)
    with pytest.raises(WindowError):
        classify_bond(e, Bond(Orientation.H, 4, 0))
    with pytest.raises(WindowError):
        sample_configuration(e, ModelParams(0.9, 0.5), (5, 2), Stream(0))


def test_model_params_are_strict():
    with pytest.raises(ParameterError):
        ModelParams(0.5, 0.9)
    ModelParams(1.0, 1.0, strict=False)


def test_all_open_when_probabilities_are_one():
    e = env_from([0] * 10, [0] * 10)
    c = sample_configuration(e, ModelParams(1.0, 1.0, strict=False), (9, 9), Stream(1))
    assert c.open_h.all() and c.open_v.all()


def test_useless_vertical_bonds_always_closed():
    h = [0] * 12
    h[3] = h[4] = 1
    e = env_from(h, [0] * 12)
    for seed in range(20):
        c = sample_configuration(e, ModelParams(0.99, 0.98), (11, 11), Stream(seed))
        assert not c.open_v[4, :].any()


def test_delta_zero_open_fraction():
    e = env_from([0] * 230, [0] * 230)
    c = sample_configuration(e, ModelParams(0.7, 0.2), (229, 229), Stream(11))
    n = c.open_h.size + c.open_v.size
    assert n > 100_000
    sigma = np.sqrt(0.7 * 0.3 / n)
    assert abs(c.open_fraction() - 0.7) < 3 * sigma


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(2, 12), st.integers(2, 12))
def test_delta_zero_matches_homogeneous_bit_for_bit(seed, n1, n2):
    e = env_from([0] * (n1 + 1), [0] * (n2 + 1), delta=0.0)
    a = sample_configuration(e, ModelParams(0.6, 0.1), (n1, n2), Stream(seed))
    b = sample_homogeneous(0.6, (n1, n2), Stream(seed))
    assert np.array_equal(a.open_h, b.open_h) and np.array_equal(a.open_v, b.open_v)
    # so every event agrees, e.g. the cluster structure
    assert np.array_equal(label_clusters(a.to_grid())[0], label_clusters(b.to_grid())[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0.05, 0.5), st.floats(0.0, 0.4),
       st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_monotone_coupling(seed, p_b, gap, up_g, up_b):
    p_g = min(p_b + gap + 0.01, 0.95)
    e = sample_environment(0.3, 15, 15, Stream(seed))
    lo = sample_configuration(e, ModelParams(p_g, p_b, strict=False), (14, 14), Stream(seed + 1))
    hi_params = ModelParams(min(1.0, p_g + up_g), min(1.0, p_b + up_b), strict=False)
    hi = sample_configuration(e, hi_params, (14, 14), Stream(seed + 1))
    assert not (lo.open_h & ~hi.open_h).any()
    assert not (lo.open_v & ~hi.open_v).any()
