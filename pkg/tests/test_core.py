import numpy as np
import pytest

from krclust import core


class TestAggregate:
    def test_sum(self):
        np.testing.assert_array_equal(core.aggregate([[1, 2], [3, 4]], "sum"), [4, 6])

    def test_product(self):
        np.testing.assert_array_equal(core.aggregate([[1, 2], [3, 4]], "product"), [3, 8])

    def test_three_vectors(self):
        np.testing.assert_array_equal(core.aggregate([[1], [2], [3]], "sum"), [6])

    def test_singleton_unchanged(self):
        v = np.array([1.5, -2.5])
        out = core.aggregate([v], "product")
        np.testing.assert_array_equal(out, v)
        assert out is not v

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            core.aggregate([[1, 2], [1, 2, 3]], "sum")

    def test_empty(self):
        with pytest.raises(ValueError):
            core.aggregate([], "sum")

    def test_bad_aggregator(self):
        with pytest.raises(ValueError):
            core.aggregate([[1]], "max")

    @pytest.mark.parametrize("agg", ["sum", "product"])
    def test_commutative_associative(self, agg):
        # exact-representable ints keep float ops exact
        rng = np.random.default_rng(0)
        for _ in range(50):
            vs = [rng.integers(-4, 5, size=3).astype(float) for _ in range(3)]
            perm = rng.permutation(3)
            a = core.aggregate(vs, agg)
            b = core.aggregate([vs[i] for i in perm], agg)
            np.testing.assert_array_equal(a, b)
            left = core.aggregate([core.aggregate(vs[:2], agg), vs[2]], agg)
            np.testing.assert_array_equal(a, left)

    @pytest.mark.parametrize("agg", ["sum", "product"])
    def test_identity_element(self, agg):
        v = np.array([2.0, -3.0, 0.5])
        ident = core.neutral_element(agg, 3)
        np.testing.assert_array_equal(core.aggregate([v, ident], agg), v)


class TestCellBijection:
    def test_examples(self):
        assert core.cell_to_flat((2, 1), (3, 3)) == 7
        assert core.flat_to_cell(11, (2, 2, 3)) == (1, 1, 2)
        assert core.cell_to_flat((0, 0), (7, 9)) == 0

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            core.cell_to_flat((3, 0), (3, 3))
        with pytest.raises(IndexError):
            core.flat_to_cell(9, (3, 3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            core.cell_to_flat((0, 0, 0), (3, 3))

    def test_roundtrip_random_radices(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = rng.integers(1, 5)
            radices = tuple(int(r) for r in rng.integers(1, 12, size=p))
            while np.prod(radices) > 10**6:
                radices = radices[:-1]
            tup = tuple(int(rng.integers(0, r)) for r in radices)
            flat = core.cell_to_flat(tup, radices)
            assert core.flat_to_cell(flat, radices) == tup
            assert 0 <= flat < np.prod(radices)

    def test_flat_order_last_index_fastest(self):
        radices = (2, 3)
        flats = [core.cell_to_flat((i, j), radices) for i in range(2) for j in range(3)]
        assert flats == list(range(6))


class TestMaterialize:
    def test_two_by_two_sum(self):
        ps = core.ProtoSets((np.array([[0.0], [1.0]]), np.array([[10.0], [20.0]])), "sum")
        np.testing.assert_array_equal(
            core.materialize_centroids(ps), [[10.0], [20.0], [11.0], [21.0]]
        )

    def test_single_cell_product(self):
        ps = core.ProtoSets((np.array([[2.0]]), np.array([[3.0]])), "product")
        np.testing.assert_array_equal(core.materialize_centroids(ps), [[6.0]])

    def test_p1_identity(self):
        mat = np.array([[5.0], [7.0]])
        ps = core.ProtoSets((mat,), "sum")
        np.testing.assert_array_equal(core.materialize_centroids(ps), mat)

    def test_row_count_and_cell_agreement(self):
        rng = np.random.default_rng(3)
        ps = core.ProtoSets(
            (rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(2, 4))),
            "product",
        )
        mats = core.materialize_centroids(ps)
        assert mats.shape == (12, 4)
        for flat in range(12):
            tup = core.flat_to_cell(flat, ps.cardinalities)
            np.testing.assert_array_equal(mats[flat], core.materialize_cell(ps, tup))


class TestTypes:
    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            core.Dataset(points=np.array([[np.inf, 1.0]]))
        with pytest.raises(ValueError):
            core.Dataset(points=np.ones((3, 2)), labels=[0, 1])

    def test_protosets_validation(self):
        with pytest.raises(ValueError):
            core.ProtoSets((np.ones((2, 2)), np.ones((2, 3))), "sum")
        with pytest.raises(ValueError):
            core.ProtoSets((), "sum")

    def test_cell_counts(self):
        counts = core.cell_counts([0, 2, 2, 1], 4)
        np.testing.assert_array_equal(counts, [1, 1, 2, 0])
        assert counts.sum() == 4
        with pytest.raises(ValueError):
            core.cell_counts([4], 4)
