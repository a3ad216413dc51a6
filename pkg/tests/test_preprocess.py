import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from vecchiagp.errors import LatitudeOutOfRange, LengthMismatch
from vecchiagp.model import Dataset
from vecchiagp.preprocess import (
    SENTINEL,
    NeighborArray,
    Ordering,
    _neighbors_exhaustive_numpy,
    embed_lonlat,
    find_ordered_neighbors,
    identity_ordering,
    lonlat_to_xyz,
    random_permutation,
    reorder_dataset,
)


class TestRandomPermutation:
    def test_single_element(self):
        assert random_permutation(1, seed=123).perm.tolist() == [0]

    def test_same_seed_same_output(self):
        a = random_permutation(5, seed=7)
        b = random_permutation(5, seed=7)
        assert np.array_equal(a.perm, b.perm)

    def test_is_permutation(self):
        perm = random_permutation(100, seed=3).perm
        assert np.array_equal(np.sort(perm), np.arange(100))

    def test_positions_uniform_chi2(self):
        # track where element 0 lands over 1000 seeded draws of n=10^4,
        # binned into 10 equal position bins; chi-square at alpha=0.01
        n, draws, bins = 10_000, 1000, 10
        positions = np.empty(draws)
        for seed in range(draws):
            perm = random_permutation(n, seed=seed).perm
            positions[seed] = int(np.nonzero(perm == 0)[0][0])
        counts, _ = np.histogram(positions, bins=bins, range=(0, n))
        expected = draws / bins
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2.ppf(0.99, df=bins - 1)


class TestReorder:
    def _ds(self, n=4):
        rng = np.random.default_rng(0)
        return Dataset(
            y=rng.normal(size=n), X=rng.normal(size=(n, 2)), locs=rng.normal(size=(n, 2))
        )

    def test_identity_is_noop(self):
        ds = self._ds()
        out = reorder_dataset(ds, identity_ordering(ds.n))
        assert np.array_equal(out.y, ds.y)
        assert np.array_equal(out.X, ds.X)
        assert np.array_equal(out.locs, ds.locs)

    def test_swap_two_rows(self):
        ds = self._ds(2)
        out = reorder_dataset(ds, Ordering(perm=np.array([1, 0])))
        assert np.array_equal(out.y, ds.y[::-1])
        assert np.array_equal(out.X, ds.X[::-1])
        assert np.array_equal(out.locs, ds.locs[::-1])

    def test_inverse_round_trip(self):
        ds = self._ds(9)
        ordering = random_permutation(9, seed=5)
        inverse = Ordering(perm=np.argsort(ordering.perm))
        back = reorder_dataset(reorder_dataset(ds, ordering), inverse)
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.locs, ds.locs)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            reorder_dataset(self._ds(4), identity_ordering(5))


class TestEmbedding:
    @pytest.mark.parametrize(
        "lon,lat,expected",
        [
            (0.0, 0.0, [1.0, 0.0, 0.0]),
            (90.0, 0.0, [0.0, 1.0, 0.0]),
            (0.0, 90.0, [0.0, 0.0, 1.0]),
        ],
    )
    def test_axis_cases(self, lon, lat, expected):
        np.testing.assert_allclose(lonlat_to_xyz(lon, lat), expected, atol=1e-15)

    def test_latitude_out_of_range(self):
        with pytest.raises(LatitudeOutOfRange):
            lonlat_to_xyz(0.0, 91.0)
        with pytest.raises(LatitudeOutOfRange):
            embed_lonlat([[0.0, -90.5]])

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        locs = np.column_stack([rng.uniform(-180, 180, 50), rng.uniform(-90, 90, 50)])
        xyz = embed_lonlat(locs)
        np.testing.assert_allclose(np.linalg.norm(xyz, axis=1), 1.0, rtol=1e-14)

    def test_chordal_distance_monotone_in_great_circle(self):
        rng = np.random.default_rng(1)
        lon = rng.uniform(-180, 180, 40)
        lat = np.degrees(np.arcsin(rng.uniform(-1, 1, 40)))
        xyz = embed_lonlat(np.column_stack([lon, lat]))
        ii, jj = np.triu_indices(40, k=1)
        chord = np.linalg.norm(xyz[ii] - xyz[jj], axis=1)
        gc = np.arccos(np.clip((xyz[ii] * xyz[jj]).sum(axis=1), -1, 1))
        # chord = 2 sin(gc/2), strictly increasing on [0, pi]
        np.testing.assert_allclose(chord, 2 * np.sin(gc / 2), rtol=1e-10, atol=1e-12)
        order = np.argsort(gc)
        assert np.all(np.diff(chord[order]) > -1e-12)


class TestNeighbors:
    def test_collinear_equally_spaced(self):
        locs = np.arange(5.0)[:, None]
        nn = find_ordered_neighbors(locs, 2)
        expected = np.array(
            [
                [0, -1, -1],
                [1, 0, -1],
                [2, 1, 0],
                [3, 2, 1],
                [4, 3, 2],
            ]
        )
        assert np.array_equal(nn.idx, expected)

    def test_full_conditioning_rows_are_distance_sorted(self):
        rng = np.random.default_rng(2)
        locs = rng.uniform(0, 1, (30, 2))
        nn = find_ordered_neighbors(locs, 29)
        for i in range(1, 30):
            row = nn.idx[i]
            row = row[row >= 0]
            assert row[0] == i
            nbrs = row[1:]
            assert sorted(nbrs.tolist()) == list(range(i))
            dists = np.linalg.norm(locs[nbrs] - locs[i], axis=1)
            assert np.all(np.diff(dists) >= 0)

    def test_compiled_scan_matches_numpy_reference(self):
        pytest.importorskip("vecchiagp.engine._kernels")
        rng = np.random.default_rng(3)
        locs = rng.uniform(0, 1, (200, 2))
        nn = find_ordered_neighbors(locs, 10)
        ref = _neighbors_exhaustive_numpy(np.ascontiguousarray(locs), 10)
        assert np.array_equal(nn.idx, ref)

    def test_tie_break_on_grid(self):
        # integer grid produces exact distance ties; smaller index wins
        xs, ys = np.meshgrid(np.arange(7.0), np.arange(7.0))
        locs = np.column_stack([xs.ravel(), ys.ravel()])
        nn = find_ordered_neighbors(locs, 8)
        ref = _neighbors_exhaustive_numpy(np.ascontiguousarray(locs), 8)
        assert np.array_equal(nn.idx, ref)

    def test_row_invariants_random(self):
        rng = np.random.default_rng(4)
        locs = rng.uniform(0, 1, (80, 3))
        m = 7
        nn = find_ordered_neighbors(locs, m)
        sizes = nn.row_sizes()
        for i in range(80):
            row = nn.idx[i]
            live = row[row >= 0]
            assert row[0] == i
            assert sizes[i] == min(i + 1, m + 1)
            assert np.all(live <= i)
            assert len(set(live.tolist())) == live.shape[0]
            assert np.all(row[sizes[i]:] == SENTINEL)

    def test_rows_match_exhaustive_smallest_distances(self):
        rng = np.random.default_rng(5)
        locs = rng.uniform(0, 1, (60, 2))
        m = 6
        nn = find_ordered_neighbors(locs, m)
        for i in range(m, 60):
            d2 = ((locs[:i] - locs[i]) ** 2).sum(axis=1)
            best = set(np.lexsort((np.arange(i), d2))[:m].tolist())
            got = set(nn.idx[i, 1:].tolist())
            assert got == best


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(2, 40),
    d=st.integers(1, 3),
    m=st.integers(1, 12),
    seed=st.integers(0, 10_000),
)
def test_neighbor_invariants_property(n, d, m, seed):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(0, 1, (n, d))
    nn = find_ordered_neighbors(locs, m)
    m_eff = min(m, n - 1)
    assert nn.idx.shape == (n, m_eff + 1)
    ref = _neighbors_exhaustive_numpy(np.ascontiguousarray(locs), m_eff)
    assert np.array_equal(nn.idx, ref)


def test_neighbor_array_row_sizes():
    nn = NeighborArray(np.array([[0, -1], [1, 0]]))
    assert nn.m == 1
    assert nn.row_sizes().tolist() == [1, 2]
