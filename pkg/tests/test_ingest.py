import io
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from streethazard.ingest import (
    IGNORE,
    AccidentRecord,
    AccidentType,
    AnalysisFlags,
    CorpusError,
    CorpusManifest,
    GeoPoint,
    ImageRecord,
    LogitPair,
    SegmentationRaster,
    format_accidents,
    load_activation_raster,
    load_categories,
    load_label_raster,
    match_activation,
    ActivationRaster,
    parse_accidents,
    parse_manifest,
    read_pgm_size,
    validate_corpus,
    write_label_raster,
    write_pgm,
)

MANIFEST_HEAD = ("image_id,lat,lon,seg_path,cam_p_path,cam_v_path,logit_safe_p,logit_danger_p,"
                 "logit_safe_v,logit_danger_v,score_p,score_v\n")


def _acc(text):
    return parse_accidents(io.BytesIO(text.encode()))


def _man(text):
    return parse_manifest(io.BytesIO((MANIFEST_HEAD + text).encode()))


class TestParseAccidents:
    def test_row_maps_fields(self):
        (rec,) = _acc("accident_id,lat,lon,type\na1,41.3851,2.1734,P\n")
        assert rec == AccidentRecord("a1", GeoPoint(41.3851, 2.1734), AccidentType.P)

    def test_latitude_out_of_range_names_line(self):
        with pytest.raises(CorpusError, match=r"latitude out of range.*line 3"):
            _acc("accident_id,lat,lon,type\na1,41.3851,2.1734,P\na2,95.0,2.0,V\n")

    def test_header_only(self):
        assert _acc("accident_id,lat,lon,type\n") == []

    @pytest.mark.parametrize("text,expected", [
        ("p", AccidentType.P), ("Pedestrian", AccidentType.P),
        ("V", AccidentType.V), ("VEHICLE", AccidentType.V),
    ])
    def test_type_case_insensitive(self, text, expected):
        (rec,) = _acc(f"accident_id,lat,lon,type\nx,0,0,{text}\n")
        assert rec.accident_type is expected

    def test_malformed_row_names_line_and_column(self):
        with pytest.raises(CorpusError, match=r"lon.*line 2"):
            _acc("accident_id,lat,lon,type\na1,41.0,east,P\n")
        with pytest.raises(CorpusError, match=r"column type, line 2"):
            _acc("accident_id,lat,lon,type\na1,41.0,2.0,bus\n")

    def test_crlf_and_quoting(self):
        recs = _acc('accident_id,lat,lon,type\r\n"a,1",41.0,2.0,P\r\n')
        assert recs[0].accident_id == "a,1"

    def test_duplicate_id(self):
        with pytest.raises(CorpusError, match="duplicate"):
            _acc("accident_id,lat,lon,type\na,1,1,P\na,2,2,V\n")

    def test_bad_header(self):
        with pytest.raises(CorpusError, match="header"):
            _acc("id,lat,lon,type\n")


records = st.lists(
    st.builds(
        AccidentRecord,
        st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp")), min_size=1, max_size=8),
        st.builds(GeoPoint, st.floats(-90, 90), st.floats(-180, 180)),
        st.sampled_from(list(AccidentType)),
    ),
    unique_by=lambda r: r.accident_id,
    max_size=20,
)


@given(records)
def test_accidents_round_trip(recs):
    assert parse_accidents(io.BytesIO(format_accidents(recs))) == recs


class TestParseManifest:
    def test_only_required_fields(self):
        (im,) = _man("i1,41.0,2.0,,,,,,,,,\n")
        assert im == ImageRecord("i1", GeoPoint(41.0, 2.0))

    def test_score_without_logits(self):
        (im,) = _man("i1,41.0,2.0,,,,,,,,0.91,\n")
        assert im.score_p == 0.91
        assert im.logits_p is None

    def test_score_out_of_range(self):
        with pytest.raises(CorpusError, match=r"score outside \[0,1\]"):
            _man("i1,41.0,2.0,,,,,,,,1.5,\n")

    def test_logits_parsed(self):
        (im,) = _man("i1,41.0,2.0,s.pgm,cp.pgm,cv.pgm,0.5,1.5,-1,2,,\n")
        assert im.logits_p == LogitPair(0.5, 1.5)
        assert im.logits_v == LogitPair(-1.0, 2.0)
        assert im.seg_path == "s.pgm"

    def test_half_logit_pair_rejected(self):
        with pytest.raises(CorpusError, match="incomplete logit pair"):
            _man("i1,41.0,2.0,,,,0.5,,,,,\n")

    def test_duplicate_image_id(self):
        with pytest.raises(CorpusError, match="duplicate image_id"):
            _man("i1,41.0,2.0,,,,,,,,,\ni1,41.0,2.0,,,,,,,,,\n")

    def test_no_file_io(self, tmp_path):
        (im,) = _man(f"i1,41.0,2.0,{tmp_path}/missing.pgm,,,,,,,,\n")
        assert im.seg_path.endswith("missing.pgm")


class TestRasters:
    def test_label_bytes_identity(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 0, 0, 13]))
        r = load_label_raster(p)
        assert r.labels.tolist() == [[0, 0], [0, 13]]

    def test_invalid_category(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n1 1\n255\n" + bytes([20]))
        with pytest.raises(CorpusError, match="invalid category id 20"):
            load_label_raster(p)

    def test_ignore_pixel(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n1 1\n255\n" + bytes([255]))
        assert load_label_raster(p).labels[0, 0] == IGNORE

    def test_comments_in_header(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 # width\n1\n255\n" + bytes([1, 2]))
        assert load_label_raster(p).labels.tolist() == [[1, 2]]
        assert read_pgm_size(p) == (2, 1)

    @pytest.mark.parametrize("data,msg", [
        (b"P2\n1 1\n255\n0", "magic"),
        (b"P5\n2 2\n255\n" + bytes(3), "truncated"),
        (b"P5\n1 1\n65535\n" + bytes(2), "maxval"),
        (b"P5\n2", "truncated PGM header"),
    ])
    def test_malformed(self, tmp_path, data, msg):
        p = tmp_path / "bad.pgm"
        p.write_bytes(data)
        with pytest.raises(CorpusError, match=msg) as info:
            load_label_raster(p)
        assert str(p) in str(info.value)

    def test_activation_endpoints_and_threshold_cut(self, tmp_path):
        p = tmp_path / "c.pgm"
        write_pgm(p, np.array([[0, 255, 178, 179]], dtype=np.uint8))
        a = load_activation_raster(p).activation[0]
        assert a[0] == 0.0 and a[1] == 1.0
        assert a[2] == pytest.approx(0.698039, abs=1e-6) and a[2] < 0.7
        assert a[3] == pytest.approx(0.701961, abs=1e-6) and a[3] > 0.7

    @given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12)))
    @settings(max_examples=50)
    def test_activation_is_exact_k_over_255(self, pixels):
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "c.pgm")
            write_pgm(p, pixels)
            a = load_activation_raster(p).activation
        assert np.all((a >= 0) & (a <= 1))
        assert np.array_equal(np.rint(a * 255).astype(np.uint8), pixels)
        assert np.array_equal(a, pixels / 255.0)

    @given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12),
                      elements=st.one_of(st.integers(0, 18), st.just(255))))
    @settings(max_examples=50)
    def test_label_round_trip(self, labels):
        raster = SegmentationRaster(labels)
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "s.pgm")
            write_label_raster(p, raster)
            assert load_label_raster(p) == raster

    def test_nearest_neighbor_upsample(self):
        seg = SegmentationRaster(np.zeros((4, 6), dtype=np.uint8))
        cam = ActivationRaster(np.array([[0.0, 0.5, 1.0], [0.2, 0.4, 0.6]]))
        up = match_activation(cam, seg).activation
        assert up.shape == (4, 6)
        assert up[0].tolist() == [0.0, 0.0, 0.5, 0.5, 1.0, 1.0]
        assert up[3].tolist() == [0.2, 0.2, 0.4, 0.4, 0.6, 0.6]

    def test_non_integer_factor_rejected(self):
        seg = SegmentationRaster(np.zeros((256, 512), dtype=np.uint8))
        cam = ActivationRaster(np.zeros((250, 500)))
        with pytest.raises(CorpusError, match="does not divide"):
            match_activation(cam, seg)


def test_categories_file(tmp_path):
    p = tmp_path / "cats.json"
    p.write_text('["a","b"]')
    with pytest.raises(CorpusError, match="expected 19"):
        load_categories(p)
    p.write_text(str([f"c{i}" for i in range(19)]).replace("'", '"'))
    assert load_categories(p)[18] == "c18"


class TestValidate:
    def _corpus(self, tmp_path, seg_shape=(8, 8), cam_shape=(4, 4), score=True):
        write_pgm(tmp_path / "s.pgm", np.zeros(seg_shape, np.uint8))
        write_pgm(tmp_path / "cp.pgm", np.zeros(cam_shape, np.uint8))
        write_pgm(tmp_path / "cv.pgm", np.zeros(cam_shape, np.uint8))
        im = ImageRecord("i1", GeoPoint(0, 0), "s.pgm", "cp.pgm", "cv.pgm",
                         logits_p=LogitPair(0, 1) if score else None, score_v=0.5 if score else None)
        return CorpusManifest((im,), base_dir=tmp_path)

    def test_complete_corpus_is_clean(self, tmp_path):
        assert validate_corpus(self._corpus(tmp_path), AnalysisFlags.all()).ok

    def test_dimension_mismatch(self, tmp_path):
        m = self._corpus(tmp_path, seg_shape=(256, 512), cam_shape=(250, 500))
        report = validate_corpus(m, AnalysisFlags(mirror=True))
        assert [i.kind for i in report.issues] == ["mismatch-cam-p"]

    def test_missing_score(self, tmp_path):
        m = self._corpus(tmp_path, score=False)
        kinds = {i.kind for i in validate_corpus(m, AnalysisFlags(hazard=True)).issues}
        assert kinds == {"missing-score-p", "missing-score-v"}

    def test_missing_file(self, tmp_path):
        m = self._corpus(tmp_path)
        (tmp_path / "cv.pgm").unlink()
        report = validate_corpus(m, AnalysisFlags.all())
        assert [(i.image_id, i.kind) for i in report.issues] == [("i1", "missing-cam-v-file")]
