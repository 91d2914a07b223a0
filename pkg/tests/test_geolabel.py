import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_counts
from streethazard.geolabel import (
    Binary,
    OrdinalClass,
    build_spatial_index,
    composition_report,
    haversine_m,
    label_points,
    ordinal_bin,
)
from streethazard.ingest import AccidentRecord, AccidentType, GeoPoint, ImageRecord

P, V = AccidentType.P, AccidentType.V
BCN = GeoPoint(41.3851, 2.1734)

# mpmath haversine at 40 digits, R = 6371008.8 m
D_0006 = 50.05666843726087
D_0005 = 41.71389036440951


def random_corpus(seed, n_acc, n_img, half_deg=0.01):
    rng = np.random.default_rng(seed)
    acc = [
        AccidentRecord(f"a{i}", GeoPoint(41.38 + float(a), 2.17 + float(b)), P if t else V)
        for i, (a, b, t) in enumerate(zip(rng.uniform(-half_deg, half_deg, n_acc),
                                          rng.uniform(-half_deg, half_deg, n_acc),
                                          rng.integers(0, 2, n_acc)))
    ]
    imgs = [
        ImageRecord(f"i{i}", GeoPoint(41.38 + float(a), 2.17 + float(b)))
        for i, (a, b) in enumerate(zip(rng.uniform(-half_deg, half_deg, n_img), rng.uniform(-half_deg, half_deg, n_img)))
    ]
    return acc, imgs


def oracle_counts(acc, imgs, t, radius):
    sel = [a for a in acc if a.accident_type is t]
    return brute_counts([i.location.latitude for i in imgs], [i.location.longitude for i in imgs],
                        [a.location.latitude for a in sel], [a.location.longitude for a in sel], radius)


class TestHaversine:
    def test_identity(self):
        assert haversine_m(BCN, BCN) == 0.0

    @pytest.mark.parametrize("lon,expected", [(2.1740, D_0006), (2.1739, D_0005)])
    def test_against_high_precision(self, lon, expected):
        assert haversine_m(BCN, GeoPoint(41.3851, lon)) == pytest.approx(expected, abs=1e-6)

    @given(st.floats(-80, 80), st.floats(-170, 170), st.floats(-80, 80), st.floats(-170, 170),
           st.floats(-80, 80), st.floats(-170, 170))
    def test_triangle_inequality(self, a1, b1, a2, b2, a3, b3):
        a, b, c = GeoPoint(a1, b1), GeoPoint(a2, b2), GeoPoint(a3, b3)
        assert haversine_m(a, c) <= haversine_m(a, b) + haversine_m(b, c) + 1e-6

    @given(st.floats(-80, 80), st.floats(-170, 170), st.floats(-80, 80), st.floats(-170, 170))
    def test_symmetric(self, a1, b1, a2, b2):
        a, b = GeoPoint(a1, b1), GeoPoint(a2, b2)
        assert haversine_m(a, b) == pytest.approx(haversine_m(b, a), abs=1e-9)


class TestIndex:
    def test_empty_index(self):
        idx = build_spatial_index([], 50)
        assert idx.query(BCN, P) == []
        (lp,) = label_points([ImageRecord("i", BCN)], idx)
        assert lp.counts == {P: 0, V: 0}

    def test_single_accident_at_center(self):
        a = AccidentRecord("a", BCN, P)
        assert build_spatial_index([a], 50).query(BCN, P) == [a]

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            build_spatial_index([], 0)

    def test_query_radius_cannot_exceed_index(self):
        idx = build_spatial_index([], 50)
        with pytest.raises(ValueError, match="exceeds"):
            label_points([ImageRecord("i", BCN)], idx, 60)

    def test_queries_match_scan(self):
        acc, imgs = random_corpus(7, 1000, 100, half_deg=0.003)
        idx = build_spatial_index(acc, 50)
        for t in (P, V):
            expect = oracle_counts(acc, imgs, t, 50)
            got = [len(idx.query(im.location, t)) for im in imgs]
            assert got == expect.tolist()
            # returned records are exactly those within range
            for im in imgs[:10]:
                for a in idx.query(im.location, t):
                    assert haversine_m(im.location, a.location) <= 50

    def test_high_latitude_coverage(self):
        rng = np.random.default_rng(3)
        acc = [AccidentRecord(f"a{i}", GeoPoint(69.65 + float(x), 18.95 + float(y)), V)
               for i, (x, y) in enumerate(zip(rng.uniform(-0.002, 0.002, 400), rng.uniform(-0.006, 0.006, 400)))]
        imgs = [ImageRecord(f"i{i}", GeoPoint(69.65 + float(x), 18.95 + float(y)))
                for i, (x, y) in enumerate(zip(rng.uniform(-0.002, 0.002, 200), rng.uniform(-0.006, 0.006, 200)))]
        labels = label_points(imgs, build_spatial_index(acc, 80), 80)
        assert [lp.counts[V] for lp in labels] == oracle_counts(acc, imgs, V, 80).tolist()


class TestLabelPoints:
    def test_pedestrian_accident_inside_radius(self):
        acc = [AccidentRecord("a", GeoPoint(41.3851, 2.1739), P)]
        (lp,) = label_points([ImageRecord("i", BCN)], build_spatial_index(acc, 50))
        assert lp.counts == {P: 1, V: 0}
        assert lp.binary == {P: Binary.DANGEROUS, V: Binary.SAFE}

    def test_accident_just_outside_radius(self):
        acc = [AccidentRecord("a", GeoPoint(41.3851, 2.1740), P)]
        (lp,) = label_points([ImageRecord("i", BCN)], build_spatial_index(acc, 50))
        assert lp.binary[P] is Binary.SAFE

    def test_boundary_is_closed(self):
        acc = [AccidentRecord("a", GeoPoint(41.3851, 2.1740), P)]
        r = haversine_m(BCN, acc[0].location)
        (lp,) = label_points([ImageRecord("i", BCN)], build_spatial_index(acc, r), r)
        assert lp.counts[P] == 1

    def test_one_accident_labels_several_images(self):
        acc = [AccidentRecord("a", BCN, V)]
        imgs = [ImageRecord("i1", GeoPoint(41.3852, 2.1734)), ImageRecord("i2", GeoPoint(41.3850, 2.1734))]
        assert [lp.counts[V] for lp in label_points(imgs, build_spatial_index(acc))] == [1, 1]

    @pytest.mark.parametrize("seed", range(3))
    def test_exact_against_brute_force(self, seed):
        acc, imgs = random_corpus(seed, 3000, 300, half_deg=0.005)
        labels = label_points(imgs, build_spatial_index(acc, 50), 50)
        for t in (P, V):
            assert [lp.counts[t] for lp in labels] == oracle_counts(acc, imgs, t, 50).tolist()

    @given(st.integers(0, 2**32 - 1), st.floats(5, 100), st.floats(1, 100))
    @settings(max_examples=20, deadline=None)
    def test_monotone_in_radius(self, seed, r1, extra):
        acc, imgs = random_corpus(seed, 300, 40, half_deg=0.002)
        r2 = r1 + extra
        small = label_points(imgs, build_spatial_index(acc, r1), r1)
        big = label_points(imgs, build_spatial_index(acc, r2), r2)
        for a, b in zip(small, big):
            assert all(a.counts[t] <= b.counts[t] for t in (P, V))


class TestOrdinal:
    @pytest.mark.parametrize("count,cls", [
        (0, OrdinalClass.NO_DANGER), (1, OrdinalClass.MILD_DANGER), (2, OrdinalClass.DANGER),
        (5, OrdinalClass.DANGER), (6, OrdinalClass.HIGH_DANGER), (40, OrdinalClass.HIGH_DANGER),
    ])
    def test_bins(self, count, cls):
        assert ordinal_bin(count) is cls

    @given(st.integers(0, 1000), st.integers(0, 1000))
    def test_monotone(self, a, b):
        if a <= b:
            assert ordinal_bin(a) <= ordinal_bin(b)

    def test_order(self):
        assert OrdinalClass.NO_DANGER < OrdinalClass.MILD_DANGER < OrdinalClass.DANGER < OrdinalClass.HIGH_DANGER


class TestComposition:
    def _labels(self, n_danger_v, n):
        from streethazard.geolabel import LabeledPoint
        return [LabeledPoint(f"i{k}", {P: k % 2, V: 1 if k < n_danger_v else 0}, 50.0) for k in range(n)]

    def test_all_dangerous(self):
        rep = composition_report(self._labels(10, 10))
        assert rep.dangerous[V] == 1.0 and rep.safe[V] == 0.0

    def test_barcelona_vehicle_split(self):
        rep = composition_report(self._labels(618, 1000))
        assert rep.dangerous[V] == 0.618
        assert rep.safe[V] == 0.382
        assert abs(rep.dangerous[V] + rep.safe[V] - 1) <= 1e-12

    def test_half_half(self):
        rep = composition_report(self._labels(5, 10))
        assert rep.dangerous[P] == 0.5 and rep.safe[P] == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            composition_report([])
