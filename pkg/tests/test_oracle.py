import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonfifo.curves import PacketSequence, UnsupportedInputError
from nonfifo.energy_model import EnergyModel
from nonfifo.nonfifo import Possibility
from nonfifo.oracle import _banded_solve, _path_solve, discrete_convex_oracle, grid_split_oracle, random_sequence
from nonfifo.taut_string import schedule_fifo

from strategies import fifo_sequences

UNIT = EnergyModel.unit_shannon()


def seq(*rows):
    return PacketSequence.from_tuples(rows)


def test_grid_on_golden_instance():
    g = grid_split_oracle(seq((2, 0, 4), (1, 1, 2)), 2, UNIT, n_grid=2001)
    assert g.split_bits == pytest.approx(0.667, abs=1e-12)
    assert g.energy_joules == pytest.approx(7.559526299369, rel=1e-6)
    assert g.possibility_class is Possibility.P3
    assert len(g.grid) == 2001 and np.all(np.isfinite(g.energies))


def test_grid_of_two_compares_endpoints():
    s = seq((2, 0, 4), (1, 1, 2))
    g = grid_split_oracle(s, 2, UNIT, n_grid=2)
    assert list(g.grid) == [0.0, 2.0]
    assert g.energy_joules == min(g.energies)


def test_grid_rejects_fifo_and_bad_sizes():
    with pytest.raises(UnsupportedInputError):
        grid_split_oracle(seq((1, 0, 1)), 1, UNIT)
    with pytest.raises(UnsupportedInputError):
        grid_split_oracle(seq((1, 0, 1), (1, 1, 2)), 2, UNIT)
    with pytest.raises(ValueError):
        grid_split_oracle(seq((2, 0, 4), (1, 1, 2)), 2, UNIT, n_grid=1)


def test_discrete_single_packet():
    assert discrete_convex_oracle(seq((1, 0, 1)), UNIT, n_steps=100) == pytest.approx(3.0, rel=1e-9)


def test_discrete_tiny_packet():
    assert discrete_convex_oracle(seq((1e-9, 0, 1)), UNIT, n_steps=100) < 1e-8


def test_discrete_matches_taut_example():
    s = seq((2, 0, 3), (1, 2, 4))
    assert discrete_convex_oracle(s, UNIT, n_steps=4000) == pytest.approx(schedule_fifo(s).energy(UNIT), rel=1e-9)


def test_discrete_needs_four_steps_per_event():
    with pytest.raises(ValueError):
        discrete_convex_oracle(seq((1, 0, 2), (1, 1, 3)), UNIT, n_steps=15)
    assert discrete_convex_oracle(seq((1, 0, 2), (1, 1, 3)), UNIT, n_steps=16) > 0


def test_discrete_rejects_non_fifo():
    with pytest.raises(UnsupportedInputError):
        discrete_convex_oracle(seq((2, 0, 4), (1, 1, 2)), UNIT)


@settings(max_examples=10)
@given(fifo_sequences(max_packets=4))
def test_discretization_converged(s):
    a = discrete_convex_oracle(s, UNIT, n_steps=1000)
    b = discrete_convex_oracle(s, UNIT, n_steps=2000)
    assert abs(a - b) <= 1e-9 * b


@st.composite
def path_systems(draw):
    n = draw(st.integers(1, 12))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    c = 10.0 ** rng.uniform(-3, draw(st.sampled_from([3, 40])), n)
    e = 10.0 ** rng.uniform(-3, 3, n)
    free = rng.random(n) < 0.8
    return c, e, free, rng.normal(0, 1, n)


def dense(c, e, free):
    n = len(c)
    H = np.diag(c + e)
    for i in range(n - 1):
        H[i, i] += c[i + 1]
        H[i, i + 1] = H[i + 1, i] = -c[i + 1]
    idx = np.flatnonzero(free)
    return H[np.ix_(idx, idx)], idx


@given(path_systems())
def test_path_solve_matches_dense(case):
    c, e, free, b = case
    x = _path_solve(c, e, free, b)
    assert np.all(x[~free] == 0)
    H, idx = dense(c, e, free)
    if idx.size:
        # residual relative to the scale of the matrix
        r = H @ x[idx] - b[idx]
        assert np.max(np.abs(r)) <= 1e-9 * (1 + np.max(np.abs(H)) * np.max(np.abs(x)))
        if c.max() < 1e4:
            assert np.allclose(x, _banded_solve(c, e, free, b), rtol=1e-6, atol=1e-9)


def test_path_solve_survives_stiff_weights():
    c = np.array([1.0, 1e48, 1.0, 1.0])
    e = np.array([1.0, 1.0, 1.0, 1.0])
    free = np.ones(4, bool)
    x = _path_solve(c, e, free, np.array([1.0, 0.0, 0.0, 1.0]))
    assert np.all(np.isfinite(x)) and x[0] == pytest.approx(x[1], rel=1e-12)


def test_discrete_stiff_instance():
    # one 13 ms event interval among second-long ones used to stall the solver
    s = random_sequence(np.random.default_rng(3), int(np.random.default_rng(3).integers(1, 7)))
    s = seq(*[(p.size_bits, p.arrival_s, p.deadline_s) for p in s])
    assert discrete_convex_oracle(s, UNIT) == pytest.approx(schedule_fifo(s).energy(UNIT), rel=1e-9)


def test_random_sequence_shapes():
    rng = np.random.default_rng(0)
    s = random_sequence(rng, 5, non_fifo=True)
    assert not s.is_fifo() and len(s) == 5
    assert random_sequence(rng, 4).is_fifo()
    with pytest.raises(ValueError):
        random_sequence(rng, 1, non_fifo=True)
