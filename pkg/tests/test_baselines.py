import numpy as np
import pytest

from fate.baselines import (RepairLevel, SmoteParams, apply_baseline, disparate_impact_remover,
                            fair_smote, reweighing)
from fate.data import Dataset
from fate.errors import DegenerateGroupError

from conftest import cells_ds, make_ds
from oracles import w1_distance

COUNTS = {(1, 0): 3, (0, 0): 1, (1, 1): 2, (0, 1): 4}


def random_cells(rng, lo=2, hi=12):
    return {(y, a): int(rng.integers(lo, hi)) for y in (0, 1) for a in (0, 1)}


def reweighing_violation(ds):
    """Largest deviation from weighted independence, and |sum(w) - n|."""
    out = reweighing(ds)
    w, n = out.w, ds.n
    worst = 0.0
    for y in (0, 1):
        for a in (0, 1):
            joint = w[(out.y == y) & (out.a == a)].sum() / w.sum()
            py = w[out.y == y].sum() / w.sum()
            pa = w[out.a == a].sum() / w.sum()
            worst = max(worst, abs(joint - py * pa))
    return worst, abs(w.sum() - n)


def test_reweighing_example():
    out = reweighing(cells_ds(COUNTS))
    got = {k: out.w[(out.y == k[0]) & (out.a == k[1])][0] for k in COUNTS}
    assert got[(1, 0)] == pytest.approx(2 / 3)
    assert got[(0, 0)] == pytest.approx(2.0)
    assert got[(1, 1)] == pytest.approx(1.5)
    assert got[(0, 1)] == pytest.approx(0.75)


def test_reweighing_fixed_point():
    out = reweighing(cells_ds({(0, 0): 2, (0, 1): 2, (1, 0): 2, (1, 1): 2}))
    np.testing.assert_allclose(out.w, 1.0)


def test_reweighing_independence_random():
    rng = np.random.default_rng(0)
    for i in range(50):
        ds = cells_ds(random_cells(rng, 1, 30), seed=i)
        dev, mass = reweighing_violation(ds)
        assert dev <= 1e-9 and mass <= 1e-9
        out = reweighing(ds)
        for y in (0, 1):
            for a in (0, 1):
                n_y, n_a = (ds.y == y).sum(), (ds.a == a).sum()
                cell = out.w[(ds.y == y) & (ds.a == a)].sum()
                assert cell == pytest.approx(n_y * n_a / ds.n)


def test_reweighing_empty_cell():
    with pytest.raises(DegenerateGroupError):
        reweighing(cells_ds({(0, 0): 2, (0, 1): 0, (1, 0): 2, (1, 1): 2}))


def smote_check(ds, k=5, seed=0):
    """Return the list of violated properties (empty when all hold)."""
    out, parents = fair_smote(ds, SmoteParams(k, seed), return_parents=True)
    bad = []
    counts = set(out.cell_counts().values())
    if counts != {max(ds.cell_counts().values())}:
        bad.append("counts")
    if not (np.array_equal(out.x[: ds.n], ds.x) and np.array_equal(out.y[: ds.n], ds.y)
            and np.array_equal(out.a[: ds.n], ds.a) and np.array_equal(out.w[: ds.n], ds.w)):
        bad.append("originals")
    num = ds.numeric_mask
    for r, (i, j) in enumerate(parents):
        row = out.x[ds.n + r]
        xi, xj = ds.x[i], ds.x[j]
        if ds.y[i] != out.y[ds.n + r] or ds.a[i] != out.a[ds.n + r] or \
                ds.cell_index()[j] != ds.cell_index()[i]:
            bad.append("cell")
        seg = xj[num] - xi[num]
        nz = np.abs(seg) > 1e-12
        if nz.any():
            u = (row[num][nz] - xi[num][nz]) / seg[nz]
            if u.min() < -1e-9 or u.max() > 1 + 1e-9 or u.max() - u.min() > 1e-9:
                bad.append("segment")
        if not np.allclose(row[num][~nz], xi[num][~nz]):
            bad.append("segment")
        for cols in ds.onehot_groups():
            if not (np.array_equal(row[cols], xi[cols]) or np.array_equal(row[cols], xj[cols])):
                bad.append("onehot")
    return bad


def test_fair_smote_counts_example():
    ds = cells_ds({(0, 0): 4, (0, 1): 2, (1, 0): 3, (1, 1): 4})
    out = fair_smote(ds)
    assert set(out.cell_counts().values()) == {4}
    assert out.n == 16
    assert smote_check(ds) == []


def test_fair_smote_balanced_is_identity():
    ds = cells_ds({(0, 0): 3, (0, 1): 3, (1, 0): 3, (1, 1): 3})
    out = fair_smote(ds)
    assert out.n == ds.n and np.array_equal(out.x, ds.x)


def test_fair_smote_with_onehot_groups():
    rng = np.random.default_rng(2)
    n = 30
    cat = rng.integers(0, 3, n)
    x = np.c_[rng.normal(size=n), np.eye(3)[cat], rng.normal(size=n)]
    ds = Dataset(x, rng.integers(0, 2, n), np.r_[np.zeros(8), np.ones(22)].astype(int),
                 feature_sources=(None, "c", "c", "c", None))
    if min(ds.cell_counts().values()) < 2:
        pytest.skip("fixture lacks a 2-row cell")
    assert smote_check(ds, k=3, seed=4) == []
    out = fair_smote(ds, SmoteParams(3, 4))
    assert (out.x[:, 1:4].sum(axis=1) == 1).all()


def test_fair_smote_random_fixtures():
    rng = np.random.default_rng(5)
    for i in range(30):
        ds = cells_ds(random_cells(rng), seed=i, d=3)
        assert smote_check(ds, k=int(rng.integers(1, 6)), seed=i) == []


def test_fair_smote_precondition():
    with pytest.raises(DegenerateGroupError):
        fair_smote(cells_ds({(0, 0): 1, (0, 1): 3, (1, 0): 3, (1, 1): 3}))
    with pytest.raises(ValueError):
        SmoteParams(0)


def test_dir_example():
    tr = make_ds([1, 2, 3, 4, 5, 6], [0, 1, 0, 1, 0, 1], [0, 0, 0, 1, 1, 1])
    out, _ = disparate_impact_remover(tr, tr, RepairLevel(1.0))
    np.testing.assert_allclose(out.x[:3, 0], [2.5, 3.5, 4.5])
    np.testing.assert_allclose(out.x[3:, 0], [2.5, 3.5, 4.5])


def dir_fixture(rng, equal=True):
    n0 = int(rng.integers(3, 20))
    n1 = n0 if equal else int(rng.integers(3, 20))
    x = np.r_[rng.normal(0, 1, (n0, 2)), rng.normal(2, 3, (n1, 2))]
    x[:, 1] = np.round(x[:, 1])  # ties
    return make_ds(x, rng.integers(0, 2, n0 + n1), np.r_[np.zeros(n0, int), np.ones(n1, int)])


def dir_check(ds, rng):
    """Violated properties of the repair on one fixture."""
    bad = []
    full, _ = disparate_impact_remover(ds, ds, RepairLevel(1.0))
    for j in range(ds.d):
        g0 = np.sort(full.x[ds.a == 0, j])
        g1 = np.sort(full.x[ds.a == 1, j])
        if g0.size == g1.size and not np.allclose(g0, g1, atol=1e-9, rtol=0):
            bad.append("full-repair")
    ident, _ = disparate_impact_remover(ds, ds, RepairLevel(0.0))
    if not np.array_equal(ident.x, ds.x):
        bad.append("identity")
    for lam in rng.random(3):
        rep, _ = disparate_impact_remover(ds, ds, RepairLevel(float(lam)))
        for g in (0, 1):
            for j in range(ds.d):
                orig, new = ds.x[ds.a == g, j], rep.x[ds.a == g, j]
                lt = orig[:, None] < orig[None, :]
                if (new[:, None] > new[None, :])[lt].any():
                    bad.append("rank-order")
    return bad


def test_dir_properties_random():
    rng = np.random.default_rng(7)
    for _ in range(30):
        assert dir_check(dir_fixture(rng, equal=bool(rng.integers(2))), rng) == []


def test_dir_lambda_monotone_w1():
    rng = np.random.default_rng(9)
    for _ in range(10):
        ds = dir_fixture(rng, equal=True)
        for j in range(ds.d):
            dists = []
            for lam in np.linspace(0, 1, 6):
                rep, _ = disparate_impact_remover(ds, ds, RepairLevel(float(lam)))
                dists.append(w1_distance(rep.x[ds.a == 0, j], rep.x[ds.a == 1, j]))
            assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))


def test_dir_test_rows_use_train_maps():
    tr = make_ds([1, 2, 3, 4, 5, 6], [0, 1, 0, 1, 0, 1], [0, 0, 0, 1, 1, 1])
    te = make_ds([2, 6], [1, 0], [0, 1])
    _, te2 = disparate_impact_remover(tr, te, RepairLevel(1.0))
    np.testing.assert_allclose(te2.x[:, 0], [3.5, 4.5])
    np.testing.assert_array_equal(te2.y, te.y)


def test_dir_skips_onehot_and_needs_groups():
    x = np.c_[[1, 2, 3, 4.0], [1, 0, 1, 0]]
    tr = Dataset(x, [0, 1, 0, 1], [0, 0, 1, 1], feature_sources=(None, "c"))
    out, _ = disparate_impact_remover(tr, tr)
    np.testing.assert_array_equal(out.x[:, 1], x[:, 1])
    with pytest.raises(DegenerateGroupError):
        disparate_impact_remover(make_ds([1, 2], [0, 1], [1, 1]), make_ds([1], [0], [1]))
    with pytest.raises(ValueError):
        RepairLevel(1.5)


def test_apply_baseline_dispatch():
    ds = cells_ds({(0, 0): 4, (0, 1): 3, (1, 0): 3, (1, 1): 5})
    for name in ("fairsmote", "reweighing", "dir"):
        tr, te = apply_baseline(name, ds, ds, {}, seed=1)
        np.testing.assert_array_equal(te.y, ds.y)
        tr2, _ = apply_baseline(name, ds, ds, {}, seed=1)
        assert np.array_equal(tr.x, tr2.x) and np.array_equal(tr.w, tr2.w)
    with pytest.raises(ValueError):
        apply_baseline("lfr", ds, ds)
