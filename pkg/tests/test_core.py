import numpy as np
import pytest

from meshacq.core import (
    BurgersParams,
    DarcyParams,
    Dataset,
    LabeledSample,
    ProblemKind,
    ProblemSpec,
    SelectionMask,
    ShapeError,
    SpatialGrid,
    restrict,
    rmse,
    set_to_grid,
)


def test_rmse_examples():
    assert rmse([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
    assert rmse([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(np.sqrt(12.5))
    assert rmse([[1.0]], [[-1.0]]) == pytest.approx(2.0)


def test_rmse_permutation_invariant(rng):
    p = rng.normal(size=(6, 5))
    t = rng.normal(size=(6, 5))
    perm = rng.permutation(6)
    assert rmse(p, t) == pytest.approx(rmse(p[perm], t[perm]), abs=1e-15)
    assert rmse(p, p.copy()) == 0.0


def test_rmse_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(3, 2\)"):
        rmse(np.zeros((2, 3)), np.zeros((3, 2)))


def test_set_to_grid_examples():
    g = SpatialGrid(np.linspace(0, 1, 5))
    assert set_to_grid([0.26], g) == [1]
    assert set_to_grid([0.5], g) == [2]
    assert set_to_grid([0.375], g) == [1]


def test_set_to_grid_matches_exhaustive_scan(rng):
    g = SpatialGrid.uniform(17)
    q = np.concatenate([rng.uniform(0, 1, 300), (np.arange(16) + 0.5) / 16])
    for v in q:
        d = np.abs(g.coords - v)
        best = int(np.flatnonzero(d == d.min())[0])  # lowest index among ties
        assert set_to_grid([v], g) == [best]


def test_set_to_grid_dedupes_and_rejects_outside():
    g = SpatialGrid.uniform(5)
    assert set_to_grid([0.5, 0.49, 0.0], g) == [2, 0]
    with pytest.raises(ValueError):
        set_to_grid([1.2], g)


def test_restrict_examples():
    assert restrict([10, 20, 30], SelectionMask((2, 0), 2)).tolist() == [30, 10]
    assert restrict([10, 20, 30], SelectionMask((), 2)).size == 0
    assert restrict([1.0, 2.0, 3.0], SelectionMask((1,), 1)).tolist() == [2.0]


def test_restrict_set_to_grid_roundtrip(rng):
    g = SpatialGrid.uniform(33)
    f = rng.normal(size=33)
    idx = rng.choice(33, 10, replace=False)
    got = set_to_grid(g.coords[idx], g)
    assert got == idx.tolist()
    np.testing.assert_array_equal(restrict(f, SelectionMask(tuple(got), 10)), f[idx])


def test_mask_validation():
    with pytest.raises(ValueError):
        SelectionMask((1, 1), 3)
    with pytest.raises(ValueError):
        SelectionMask((0, 1, 2), 2)
    with pytest.raises(IndexError):
        LabeledSample(np.zeros(3), SelectionMask((5,), 1), [1.0])


def test_labeled_sample_is_immutable():
    s = LabeledSample(np.arange(3.0), SelectionMask.full(3), np.ones(3))
    assert s.is_dense
    with pytest.raises(ValueError):
        s.input[0] = 5.0
    with pytest.raises(ShapeError):
        LabeledSample(np.zeros(3), SelectionMask((0, 1), 2), np.ones(3))


def test_dataset_growth_and_slicing():
    ds = Dataset(ProblemKind.BURGERS, 3)
    for i in range(4):
        ds.append(LabeledSample(np.full(3, i), SelectionMask.full(3), np.full(3, i), instance_id=i))
    assert len(ds) == 4
    before = len(ds)
    ds.extend([LabeledSample(np.zeros(3), SelectionMask((0,), 1), [0.0])] * 2)
    assert len(ds) == before + 2
    assert [s.instance_id for s in ds[1:3]] == [1, 2]
    assert ds.subset([3, 0])[0].instance_id == 3
    np.testing.assert_array_equal(ds[:4].dense_outputs()[:, 0], [0, 1, 2, 3])


def test_params_validation():
    with pytest.raises(ValueError):
        BurgersParams(viscosity=-1.0)
    with pytest.raises(ValueError):
        DarcyParams(levels=(0.0, 4.0))
    spec = ProblemSpec("darcy", darcy=DarcyParams(n=16, patches=4))
    assert spec.field_size == 256
    assert ProblemKind.from_code(spec.kind.code) is ProblemKind.DARCY
