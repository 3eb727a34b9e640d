import csv
import io
import json
import os

import numpy as np
import pytest

from prnu_nua.cli import expand_inputs, main
from prnu_nua.core import read_prnf
from prnu_nua.nua import WatermarkEstimate
from prnu_nua.synth import two_sensor_scenario

from exif_fixtures import pil_jpeg, tiff_bytes

MAX_JOBS = max(2, os.cpu_count() or 2)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    scn = two_sensor_scenario(shape=(256, 256), n_ref=3, n_test=2)
    (root / "scenario.json").write_text(json.dumps(scn.to_dict()))
    assert main(["simulate", str(root / "scenario.json"), str(root / "data")]) == 0
    return root


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def run_fingerprint(corpus, out, mode="residual_cancel", jobs=1):
    return main(["fingerprint", str(corpus / "data/A/reference/*.png"), "--mode", mode,
                 "--out", str(out), "--watermark-out", str(out) + ".prnw", "--jobs", str(jobs)])


def test_simulate_writes_manifest(corpus, schema):
    import jsonschema

    m = json.loads((corpus / "data/manifest.json").read_text())
    jsonschema.validate(m, schema("manifest.schema.json"))
    assert len(m["sensors"]) == 2


def test_fingerprint_outputs(corpus, tmp_path, schema):
    import jsonschema

    out = tmp_path / "A.prnf"
    assert run_fingerprint(corpus, out) == 0
    k, _ = read_prnf(out)
    assert k.shape == (256, 256)
    report = json.loads((tmp_path / "A.prnf.json").read_text())
    jsonschema.validate(report, schema("fingerprint_report.schema.json"))
    assert report["n"] == 3 and report["mode"] == "residual_cancel"
    w = WatermarkEstimate.load(str(out) + ".prnw")
    assert w.average.shape == (128, 128) and len(w.per_patch_strength) == 12


def test_fingerprint_png_export(corpus, tmp_path):
    rc = main(["fingerprint", str(corpus / "data/A/reference/*.png"), "--out", str(tmp_path / "f.prnf"),
               "--watermark-png", str(tmp_path / "w.png")])
    assert rc == 0 and (tmp_path / "w.png").exists()


def test_fingerprint_errors(corpus, tmp_path, capsys):
    assert main(["fingerprint", str(tmp_path / "none*.png"), "--out", str(tmp_path / "x.prnf")]) == 1
    small = tmp_path / "small.png"
    from prnu_nua.core import save_png8

    save_png8(small, np.zeros((64, 64)))
    ref = sorted((corpus / "data/A/reference").glob("*.png"))[0]
    assert main(["fingerprint", str(ref), str(small), "--out", str(tmp_path / "x.prnf")]) == 1
    assert "differs" in capsys.readouterr().err
    assert not (tmp_path / "x.prnf").exists()


def test_attribute_jsonl_and_csv(corpus, tmp_path, schema):
    import jsonschema

    fp = tmp_path / "A.prnf"
    run_fingerprint(corpus, fp)
    tests = str(corpus / "data/*/test/*.png")
    assert main(["attribute", "--fingerprint", str(fp), tests, "--out", str(tmp_path / "r.jsonl")]) == 0
    records = read_jsonl(tmp_path / "r.jsonl")
    assert len(records) == 4
    for r in records:
        jsonschema.validate(r, schema("pce_report.schema.json"))
    by_sensor = {r["file"].split(os.sep)[-3]: r for r in records}
    assert by_sensor["A"]["matched"] and not by_sensor["B"]["matched"]

    assert main(["attribute", "--fingerprint", str(fp), tests, "--csv", "--out", str(tmp_path / "r.csv")]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "r.csv").read_text())))
    assert len(rows) == 4
    assert rows[0]["peak_shift"].count(" ") == 1


def test_attribute_reports_missing_files(corpus, tmp_path, capsys):
    fp = tmp_path / "A.prnf"
    run_fingerprint(corpus, fp)
    rc = main(["attribute", "--fingerprint", str(fp), str(tmp_path / "missing.png")])
    assert rc == 1
    rec = json.loads(capsys.readouterr().out)
    assert rec["file"].endswith("missing.png") and "error" in rec


def test_detect(corpus, tmp_path, schema):
    import jsonschema

    out = tmp_path / "d.jsonl"
    rc = main(["detect", str(corpus / "data/A/reference/*.png"), "--periods", "128", "64", "--out", str(out),
               "--tile-dir", str(tmp_path / "tiles"), "--ac-dir", str(tmp_path / "ac")])
    assert rc == 0
    records = read_jsonl(out)
    for r in records:
        jsonschema.validate(r, schema("periodicity_report.schema.json"))
        assert [x["period"] for x in r["reports"]] == [128, 64]
    assert len(list((tmp_path / "tiles").glob("*.prnf"))) == 6
    assert len(list((tmp_path / "ac").glob("*.prnf"))) == 3

    rc = main(["detect", str(corpus / "data/A/reference/*.png"), "--periods", "128", "64", "--csv",
               "--out", str(tmp_path / "d.csv")])
    rows = list(csv.DictReader(io.StringIO((tmp_path / "d.csv").read_text())))
    assert rc == 0 and len(rows) == 3
    assert rows[0]["reports.0.period"] == "128" and rows[0]["reports.1.period"] == "64"


def test_detect_too_small_is_reported(tmp_path, capsys):
    from prnu_nua.core import save_png8

    save_png8(tmp_path / "s.png", np.random.default_rng(0).integers(0, 255, (64, 64)))
    assert main(["detect", str(tmp_path / "s.png")]) == 1
    assert "InsufficientSizeError" in capsys.readouterr().out


def test_clean(corpus, tmp_path, schema):
    import jsonschema

    for fmt, ext in (("prnf", ".prnf"), ("tiff16", ".tif"), ("png", ".png")):
        out_dir = tmp_path / fmt
        rc = main(["clean", str(corpus / "data/A/test/*.png"), "--reference", str(corpus / "data/A/reference/*.png"),
                   "--out-dir", str(out_dir), "--format", fmt, "--out", str(tmp_path / f"{fmt}.jsonl")])
        assert rc == 0
        for r in read_jsonl(tmp_path / f"{fmt}.jsonl"):
            jsonschema.validate(r, schema("clean_record.schema.json"))
            assert r["output"].endswith(ext)
        assert len(list(out_dir.iterdir())) == 2


def test_exif_command(tmp_path, schema, capsys):
    import jsonschema

    (tmp_path / "a.jpg").write_bytes(pil_jpeg("Adobe Photoshop"))
    (tmp_path / "b.tif").write_bytes(tiff_bytes("Cam", ">"))
    (tmp_path / "c.jpg").write_bytes(b"\xff\xd8\xff\xe1\x00")
    rc = main(["exif", str(tmp_path / "a.jpg"), str(tmp_path / "b.tif"), str(tmp_path / "c.jpg")])
    assert rc == 1
    records = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    for r in records:
        jsonschema.validate(r, schema("exif_record.schema.json"))
    assert records[0]["software"]["adobe_detected"]
    assert records[1]["software"]["raw"] == "Cam"
    assert "ExifParseError" in records[2]["error"]


def test_empty_input_list_is_an_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["exif"])
    assert info.value.code != 0


def test_expand_inputs_keeps_literals(tmp_path):
    (tmp_path / "b.png").write_bytes(b"")
    (tmp_path / "a.png").write_bytes(b"")
    got = expand_inputs([str(tmp_path / "*.png"), "nothing-here.png"])
    assert [os.path.basename(g) for g in got] == ["a.png", "b.png", "nothing-here.png"]


def test_jobs_env_default(monkeypatch):
    from prnu_nua import cli

    monkeypatch.setenv("PRNU_NUA_JOBS", "3")
    assert cli._default_jobs() == 3
    monkeypatch.setenv("PRNU_NUA_JOBS", "x")
    assert cli._default_jobs() == 1


def test_repeat_runs_bitwise_identical(corpus, tmp_path):
    outputs = []
    for jobs in (1, MAX_JOBS, MAX_JOBS):
        d = tmp_path / f"run{len(outputs)}"
        run_fingerprint(corpus, d / "A.prnf", mode="spatial_cancel", jobs=jobs)
        main(["attribute", "--fingerprint", str(d / "A.prnf"), str(corpus / "data/*/test/*.png"),
              "--jobs", str(jobs), "--out", str(d / "att.jsonl")])
        main(["detect", str(corpus / "data/B/reference/*.png"), "--jobs", str(jobs), "--out", str(d / "det.jsonl")])
        outputs.append([(d / n).read_bytes() for n in ("A.prnf", "A.prnf.prnw", "att.jsonl", "det.jsonl")])
    assert outputs[0] == outputs[1] == outputs[2]


def test_reference_image_self_match(corpus, tmp_path, capsys):
    fp = tmp_path / "A.prnf"
    run_fingerprint(corpus, fp, mode="plain")
    ref = sorted((corpus / "data/A/reference").glob("*.png"))[0]
    assert main(["attribute", "--fingerprint", str(fp), str(ref)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["matched"] and rec["pce"] > 1000


def test_report_order_follows_inputs(corpus, tmp_path, capsys):
    files = sorted((corpus / "data").rglob("*.png"))[::-1]
    # PNGs carry no EXIF container, so every record is an error; only the order matters here
    assert main(["exif", *map(str, files), "--jobs", str(MAX_JOBS)]) == 1
    got = [json.loads(x)["file"] for x in capsys.readouterr().out.splitlines()]
    assert got == list(map(str, files))


def test_emit_streams_and_counts_errors(tmp_path):
    from prnu_nua.cli import emit

    def records():
        yield {"file": "a", "x": 1}
        assert (tmp_path / "r.jsonl").exists() is False  # still writing to the temporary file
        yield {"file": "b", "error": "boom"}

    assert emit(records(), tmp_path / "r.jsonl", False) == 1
    assert len(read_jsonl(tmp_path / "r.jsonl")) == 2
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]
