import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selective_bench.core import (
    Decision,
    Instance,
    WindowChoice,
    excess_risk,
    floor_log2,
    read_instance,
    scale_profile,
    window_avg_loss,
    write_instance,
)

# Matrix shared with tests/oracles/derive_expected.py; its derived
# profile is frozen below.
MATRIX = np.array(
    [
        [0, 1, 0, 1, 1, 0, 0, 1],
        [1, 0, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 1, 1],
    ],
    dtype=float,
)

loss_matrices = arrays(
    np.float64,
    st.tuples(st.integers(1, 5), st.integers(1, 40)),
    elements=st.floats(0, 1, allow_nan=False),
)


def test_floor_log2():
    assert [floor_log2(n) for n in (1, 2, 3, 4, 7, 8, 9, 1024)] == [0, 1, 1, 2, 2, 3, 3, 10]
    with pytest.raises(ValueError):
        floor_log2(0)


def test_instance_validation():
    inst = Instance(MATRIX)
    assert (inst.m, inst.n, inst.k) == (3, 8, 3)
    with pytest.raises(ValueError):
        Instance(np.array([1.5]))  # not 2-D
    with pytest.raises(ValueError):
        Instance([[0.2, 1.0001]])
    with pytest.raises(ValueError):
        Instance([[0.2, np.nan]])
    with pytest.raises(ValueError):
        Instance(np.empty((0, 3)))


def test_instance_is_immutable():
    inst = Instance(MATRIX)
    with pytest.raises(ValueError):
        inst.losses[0, 0] = 1.0
    # source array edits must not leak in
    src = MATRIX.copy()
    inst2 = Instance(src)
    src[0, 0] = 1.0
    assert inst2.losses[0, 0] == 0.0


def test_window_choice_bounds():
    WindowChoice(6, 2).check_bounds(8)
    with pytest.raises(ValueError):
        WindowChoice(6, 3).check_bounds(8)
    with pytest.raises(ValueError):
        WindowChoice(-1, 1)
    with pytest.raises(ValueError):
        WindowChoice(0, 0)


def test_decision_validation():
    win = WindowChoice(0, 1)
    Decision(win, [0.5, 0.5])
    with pytest.raises(ValueError):
        Decision(win, [0.7, 0.7])
    with pytest.raises(ValueError):
        Decision(win, [1.5, -0.5])
    d = Decision(win, [1.0, 0.0])
    with pytest.raises(ValueError):
        d.model_dist[0] = 0.0


def test_window_avg_loss():
    inst = Instance(MATRIX)
    assert window_avg_loss(inst, 0, WindowChoice(0, 4)) == 0.5
    assert window_avg_loss(inst, 1, WindowChoice(0, 4)) == 0.25
    assert window_avg_loss(inst, 2, WindowChoice(2, 2)) == 1.0
    with pytest.raises(ValueError):
        window_avg_loss(inst, 3, WindowChoice(0, 1))


def test_excess_risk_examples():
    inst = Instance(MATRIX)
    # point mass on the window argmin has zero excess
    assert excess_risk(inst, Decision(WindowChoice(0, 4), [0, 1, 0])) == 0.0
    # uniform over a (0, 1) column pays half the gap
    two = Instance([[0, 0], [1, 1]])
    assert excess_risk(two, Decision(WindowChoice(1, 1), [0.5, 0.5])) == pytest.approx(0.5)
    zero = Instance(np.zeros((4, 8)))
    assert excess_risk(zero, Decision(WindowChoice(3, 4), np.full(4, 0.25))) == 0.0


@given(loss_matrices, st.data())
def test_excess_risk_nonnegative(mat, data):
    inst = Instance(mat)
    t = data.draw(st.integers(0, inst.n - 1))
    w = data.draw(st.integers(1, inst.n - t))
    p = data.draw(
        arrays(np.float64, inst.m, elements=st.floats(0.01, 1, allow_nan=False))
    )
    dec = Decision(WindowChoice(t, w), p / p.sum())
    assert excess_risk(inst, dec) >= 0.0


def test_scale_profile_frozen():
    # derived in tests/oracles/derive_expected.py
    prof = scale_profile(Instance(MATRIX))
    assert prof.k == 3
    np.testing.assert_allclose(prof.values, [0.0, 0.0, 0.375, 0.375], atol=1e-15)


@given(loss_matrices)
def test_scale_profile_monotone(mat):
    # pooling blocks can only raise the best fixed model's average
    prof = scale_profile(Instance(mat))
    assert (np.diff(prof.values) >= -1e-12).all()
    assert prof.values.min() >= 0.0 and prof.values.max() <= 1.0


def test_scale_profile_ignores_tail():
    base = Instance(MATRIX)
    padded = Instance(np.hstack([MATRIX, np.ones((3, 5))]))
    assert padded.k == base.k
    np.testing.assert_array_equal(scale_profile(padded).values, scale_profile(base).values)


@settings(max_examples=30)
@given(loss_matrices, st.booleans())
def test_instance_file_roundtrip(tmp_path_factory, mat, with_origin):
    path = tmp_path_factory.mktemp("io") / "inst.txt"
    origin = ("block:n=8:m=2:l=4", 12345) if with_origin else None
    inst = Instance(mat, origin=origin)
    write_instance(inst, path)
    back = read_instance(path)
    np.testing.assert_array_equal(back.losses, inst.losses)
    assert back.origin == inst.origin


def test_read_instance_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not an instance\n")
    with pytest.raises(ValueError):
        read_instance(p)
    p.write_text("selective-bench instance v1\nm 2 n 2\norigin none\n0 0\n")
    with pytest.raises(ValueError):
        read_instance(p)  # missing a data line
