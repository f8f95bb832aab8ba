import numpy as np
import pytest

from fedsim.core import (
    Block,
    BlockLayout,
    ParamVector,
    axpy,
    deserialize,
    load,
    payload_bytes,
    save,
    scatter_trainable,
    serialize,
    trainable_view,
)
from fedsim.errors import LayoutError, NumericalError


def vec(values, layout=None):
    values = np.asarray(values, dtype=np.float64)
    layout = layout or BlockLayout.of(("w", len(values), False))
    return ParamVector(layout, values)


@pytest.mark.parametrize("a,x,y,want", [
    (1.0, [1, 2], [0, 0], [1, 2]),
    (0.0, [5, 5], [3, 4], [3, 4]),
    (-0.5, [2, 4], [1, 1], [0, -1]),
])
def test_axpy_examples(a, x, y, want):
    xv, yv = vec(x), vec(y)
    out = axpy(a, xv, yv)
    assert out.values.tolist() == want
    assert xv.values.tolist() == x and yv.values.tolist() == y


def test_axpy_layout_mismatch():
    with pytest.raises(LayoutError):
        axpy(1.0, vec([1, 2]), vec([1, 2], BlockLayout.of(("v", 2, False))))


def test_axpy_rejects_non_finite():
    with pytest.raises(NumericalError):
        axpy(1e308, vec([1e308]), vec([1e308]))


def test_axpy_exact_on_integers(rng):
    x = rng.integers(-2**20, 2**20, size=100).astype(float)
    y = rng.integers(-2**20, 2**20, size=100).astype(float)
    assert np.array_equal(axpy(3.0, vec(x), vec(y)).values, y + 3 * x)


def test_layout_invariants():
    with pytest.raises(LayoutError):
        BlockLayout.of(("a", 1, False), ("a", 2, False))
    with pytest.raises(LayoutError):
        BlockLayout.of(("a", 0, False))
    lay = BlockLayout.of(("a", 2, True), ("b", 3, False))
    assert (lay.total_len, lay.trainable_len) == (5, 3)


def test_param_vector_length_checked():
    with pytest.raises(LayoutError):
        ParamVector(BlockLayout.of(("a", 2, False)), np.zeros(3))


def test_trainable_view_examples():
    lay = BlockLayout.of(("A", 2, True), ("B", 3, False))
    x = ParamVector(lay, np.array([1.0, 2, 3, 4, 5]))
    assert trainable_view(x).tolist() == [3, 4, 5]
    live = BlockLayout.of(("A", 2, False), ("B", 3, False))
    assert trainable_view(ParamVector(live, x.values)).tolist() == [1, 2, 3, 4, 5]
    dead = live.with_frozen(["A", "B"])
    assert trainable_view(ParamVector(dead, x.values)).size == 0


def test_scatter_round_trip(rng):
    lay = BlockLayout.of(("a", 4, False), ("b", 3, True), ("c", 5, False))
    x = ParamVector(lay, rng.standard_normal(12))
    back = scatter_trainable(x, trainable_view(x))
    assert np.array_equal(back.values, x.values)
    new = rng.standard_normal(lay.trainable_len)
    y = scatter_trainable(x, new)
    assert np.array_equal(trainable_view(y), new)
    assert np.array_equal(y.block("b"), x.block("b"))


@pytest.mark.parametrize("blocks,want", [
    ([("A", 10, True), ("B", 20, False)], 160),
    ([("A", 10, False), ("B", 20, False)], 240),
    ([("A", 10, True), ("B", 20, True)], 0),
])
def test_payload_bytes_examples(blocks, want):
    lay = BlockLayout.of(*blocks)
    assert payload_bytes(ParamVector(lay)) == want


def test_payload_monotone_under_freezing():
    lay = BlockLayout.of(*[(f"b{i}", i + 1, False) for i in range(6)])
    last = payload_bytes(lay)
    for i in range(6):
        now = payload_bytes(lay.with_frozen([f"b{k}" for k in range(i + 1)]))
        assert now <= last
        last = now
    assert last == 0


def test_serialize_round_trip(tmp_path, rng):
    lay = BlockLayout.of(("weight", 6, False), ("bias", 2, True), ("émbed", 3, False))
    x = ParamVector(lay, rng.standard_normal(11))
    buf = serialize(x)
    assert deserialize(buf) == x
    # layout first: u32 block count, then name length, UTF-8 name, u32 length, u8 frozen
    assert buf[:4] == (3).to_bytes(4, "little")
    assert buf[-8:] == np.float64(x.values[-1]).tobytes()
    save(x, tmp_path / "m.bin")
    assert load(tmp_path / "m.bin") == x


def test_layout_bytes_and_hash():
    lay = BlockLayout.of(("w", 3, False), ("b", 1, True))
    back, used = BlockLayout.from_bytes(lay.to_bytes())
    assert back == lay and used == len(lay.to_bytes())
    assert lay.hash64() != BlockLayout.of(("w", 3, False), ("b", 1, False)).hash64()
    assert isinstance(lay.blocks[0], Block)
