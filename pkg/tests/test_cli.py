import csv
import json
import shutil

import pytest

from oracles import brute_counts
from streethazard.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from streethazard.config import ConfigError, RunConfig, resolve_config
from streethazard.ingest import AccidentType, load_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--seed", "3", "--n-images", "60", "--out", str(d)]) == EXIT_OK
    return d


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestExitCodes:
    def test_no_command(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == EXIT_USAGE

    def test_unknown_flag(self, corpus):
        with pytest.raises(SystemExit) as info:
            run("label", "--corpus", corpus, "--bogus")
        assert info.value.code == EXIT_USAGE

    def test_missing_input(self, tmp_path):
        assert run("score", "--out", tmp_path) == EXIT_USAGE

    def test_missing_file_is_io_error(self, tmp_path):
        assert run("score", "--images", tmp_path / "none.csv", "--out", tmp_path) == EXIT_IO

    def test_bad_data_is_invalid(self, tmp_path):
        p = tmp_path / "images.csv"
        p.write_text("image_id,lat\nx,1\n")
        assert run("score", "--images", p, "--out", tmp_path) == EXIT_INVALID

    def test_bad_config_value(self, corpus, tmp_path):
        assert run("label", "--corpus", corpus, "--out", tmp_path, "--radius-m", "-5") == EXIT_USAGE


class TestValidate:
    def test_clean(self, corpus, tmp_path, capsys):
        assert run("validate", "--corpus", corpus, "--out", tmp_path) == EXIT_OK
        assert "ok" in capsys.readouterr().out
        assert json.loads((tmp_path / "validation.json").read_text())["issues"] == []

    def test_missing_cam_names_image(self, corpus, tmp_path, capsys):
        broken = tmp_path / "c"
        shutil.copytree(corpus, broken)
        (broken / "cam_p" / "img000007.pgm").unlink()
        assert run("validate", "--corpus", broken, "--out", tmp_path / "o") != EXIT_OK
        assert "img000007" in capsys.readouterr().err
        issues = json.loads((tmp_path / "o" / "validation.json").read_text())["issues"]
        assert [(i["image_id"], i["kind"]) for i in issues] == [("img000007", "missing-cam-p-file")]


def test_label_matches_oracle(corpus, tmp_path):
    assert run("label", "--corpus", corpus, "--out", tmp_path, "--radius-m", "50") == EXIT_OK
    got = rows(tmp_path / "labels.csv")
    m = load_corpus(corpus / "images.csv", corpus / "accidents.csv")
    lat = [im.location.latitude for im in m.images]
    lon = [im.location.longitude for im in m.images]
    for t, col in ((AccidentType.P, "count_p"), (AccidentType.V, "count_v")):
        acc = [a for a in m.accidents if a.accident_type is t]
        expect = brute_counts(lat, lon, [a.location.latitude for a in acc], [a.location.longitude for a in acc], 50)
        assert [int(r[col]) for r in got] == expect.tolist()
    assert [r["image_id"] for r in got] == sorted(r["image_id"] for r in got)


def test_mirror_dummy_mode(corpus, tmp_path):
    assert run("mirror", "--corpus", corpus, "--out", tmp_path, "--k", "5", "--mode", "dummy") == EXIT_OK
    doc = json.loads((tmp_path / "mirrors.json").read_text())
    assert doc["mode"] == "dummy" and doc["k"] == 5
    assert all(len(t["candidates"]) == 5 for t in doc["targets"])
    # unconstrained: some candidate is not safer on both axes
    assert any(c["h_p"] >= t["h_p"] or c["h_v"] >= t["h_v"] for t in doc["targets"] for c in t["candidates"])


def test_mirror_both_mode(corpus, tmp_path):
    assert run("mirror", "--corpus", corpus, "--out", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "mirrors.json").read_text())
    for t in doc["targets"]:
        for c in t["candidates"]:
            assert c["h_p"] < t["h_p"] and c["h_v"] < t["h_v"]
            assert c["ratio_p"] < 1 and c["ratio_v"] < 1


def test_pipeline(corpus, tmp_path, capsys):
    out = tmp_path / "out"
    for cmd in ("validate", "label", "score", "scene", "mirror", "chord", "radar", "hexbin",
                "landscape", "metrics", "ordinal"):
        assert run(cmd, "--corpus", corpus, "--out", out) == EXIT_OK, cmd
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 11
    for name in ("validation.json", "labels.csv", "scores.csv", "scene.csv", "mirrors.json", "chord.csv",
                 "radar.json", "hexbin.csv", "landscape.geojson", "metrics.json", "ordinal.json"):
        assert (out / name).stat().st_size > 0, name
    chord = rows(out / "chord.csv")
    assert len(chord) == 19
    assert all(float(v) >= 0 for r in chord for k, v in r.items() if k != "source")
    hexbin = rows(out / "hexbin.csv")
    assert list(hexbin[0]) == ["cell_v", "cell_p", "count", "mean_sd"]
    assert sum(int(r["count"]) for r in hexbin) == 60
    geo = json.loads((out / "landscape.geojson").read_text())
    assert geo["type"] == "FeatureCollection" and len(geo["features"]) == 60


def test_landscape_filter(corpus, tmp_path):
    assert run("landscape", "--corpus", corpus, "--out", tmp_path, "--only", "Both") == EXIT_OK
    geo = json.loads((tmp_path / "landscape.geojson").read_text())
    assert all(f["properties"]["selector"] == "Both" for f in geo["features"])
    assert run("landscape", "--corpus", corpus, "--out", tmp_path, "--only", "Sometimes") == EXIT_USAGE


def test_rerun_is_byte_identical(corpus, tmp_path):
    for d in ("a", "b"):
        assert run("scene", "--corpus", corpus, "--out", tmp_path / d, "--threads", "1" if d == "a" else "4") == 0
    assert (tmp_path / "a" / "scene.csv").read_bytes() == (tmp_path / "b" / "scene.csv").read_bytes()


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.radius_m, cfg.cam_threshold, cfg.k, cfg.band_lo, cfg.band_hi, cfg.grid_n) == (
            50.0, 0.7, 5, 0.33, 0.66, 20)

    def test_precedence(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"radius_m": 30, "k": 3, "grid_n": 10}))
        cfg = resolve_config({"k": 7}, str(p), {"HAZ_RADIUS_M": "40"})
        assert (cfg.radius_m, cfg.k, cfg.grid_n) == (40.0, 7, 10)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"radius": 30}))
        with pytest.raises(ConfigError):
            resolve_config({}, str(p), {})

    def test_bad_env(self):
        with pytest.raises(ConfigError):
            resolve_config({}, None, {"HAZ_K": "five"})

    def test_config_file_via_cli(self, corpus, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"radius_m": 10}))
        assert run("label", "--corpus", corpus, "--out", tmp_path, "--config", p) == EXIT_OK
        small = rows(tmp_path / "labels.csv")
        assert run("label", "--corpus", corpus, "--out", tmp_path) == EXIT_OK
        big = rows(tmp_path / "labels.csv")
        assert sum(int(r["count_v"]) for r in small) <= sum(int(r["count_v"]) for r in big)


def test_bbox_restricts_hexbin(corpus, tmp_path):
    m = load_corpus(corpus / "images.csv")
    lats = sorted(im.location.latitude for im in m.images)
    mid = lats[len(lats) // 2]
    box = f"{lats[0] - 1e-6},-180,{mid},180"
    assert run("hexbin", "--corpus", corpus, "--out", tmp_path, "--bbox", box) == EXIT_OK
    kept = sum(int(r["count"]) for r in rows(tmp_path / "hexbin.csv"))
    assert kept == sum(1 for x in lats if x <= mid)
    assert run("hexbin", "--corpus", corpus, "--out", tmp_path, "--bbox", "1,2,3") == EXIT_USAGE
