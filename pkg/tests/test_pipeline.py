import csv
import math

import numpy as np
import pytest

from nrhdr.cli import main
from nrhdr.config import ConfigError, PipelineConfig, example_config_text, load_config
from nrhdr.core import HdrImage
from nrhdr.io import read_pfm, write_pfm
from nrhdr.pipeline import CSV_COLUMNS, MEAN_ROW, PipelineError, evaluate_corpus, run_pipeline
from nrhdr.sensor import CameraModel
from nrhdr.synth import ZoneplateSpec, zoneplate


def small_cfg(tmp_path, **kw):
    return PipelineConfig(out=str(tmp_path / "out"), size=32, **kw)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_example_equals_defaults(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text(example_config_text())
        assert load_config(p) == PipelineConfig()

    def test_overrides(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[camera]\nenable_noise = no\n[recon]\ngamma = 0.8\nfft_size = 64\n"
                     "[display]\npu21_variant = peaks\n[run]\nlayouts = regular\n")
        cfg = load_config(p)
        assert not cfg.camera.enable_noise and cfg.recon.gamma == 0.8 and cfg.recon.fft_size == 64
        assert cfg.pu21_variant == "peaks" and cfg.layout_kinds == ("regular",)

    def test_all_emit_off(self):
        with pytest.raises(ConfigError):
            PipelineConfig(emit_pfm=False, emit_tonemap=False, emit_mask=False, emit_spectrum=False,
                           emit_csv=False)

    @pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[recon]\nwidth = 3\n", "[recon]\ngamma = two\n",
                                      "[recon]\ngamma = 2\n", "[run]\nlayouts = hex\n", "not ini"])
    def test_bad_files(self, tmp_path, text):
        p = tmp_path / "c.ini"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)


class TestRunPipeline:
    def test_zoneplate_reports_and_artifacts(self, tmp_path):
        cfg = small_cfg(tmp_path, emit_spectrum=True)
        reports = run_pipeline(cfg)
        assert [r.layout for r in reports] == ["regular", "nonregular"]
        out = tmp_path / "out"
        for kind in ("regular", "nonregular"):
            for suffix in ("recon.pfm", "tonemap.png", "mask.png", "spectrum.png"):
                assert (out / f"zoneplate_{kind}_{suffix}").exists()
            rec = read_pfm(out / f"zoneplate_{kind}_recon.pfm")
            assert rec.shape == (32, 32)
        rows = read_rows(out / "report.csv")
        assert list(rows[0]) == list(CSV_COLUMNS) and len(rows) == 2

    def test_constant_noiseless_is_inf(self, tmp_path):
        src = tmp_path / "flat.pfm"
        write_pfm(HdrImage(np.full((16, 16), 0.25)), src)
        cfg = small_cfg(tmp_path, source=str(src), normalize="none", camera=CameraModel(enable_noise=False))
        reports = run_pipeline(cfg)
        # floating-point synthesis lands within a few ulps of the constant, so the
        # error is at machine precision rather than guaranteed bit-exact zero
        for r in reports:
            assert r.psnr_db == math.inf or r.psnr_db > 250
            assert r.pu21_psnr_db == math.inf or r.pu21_psnr_db > 200

    def test_stage_tagged_error(self, tmp_path):
        cfg = small_cfg(tmp_path, source=str(tmp_path / "missing.pfm"))
        with pytest.raises(PipelineError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "input"


def make_corpus(directory, n=3, size=16):
    directory.mkdir()
    for i in range(n):
        img = zoneplate(ZoneplateSpec(size=size, chirp_rate=0.3 + 0.2 * i))
        write_pfm(img, directory / f"img{i}.pfm")
    return directory


class TestCorpus:
    def test_counts_and_means(self, tmp_path):
        corpus = make_corpus(tmp_path / "c")
        rows = evaluate_corpus(corpus, small_cfg(tmp_path))
        data = [r for r in rows if r["filename"] != MEAN_ROW]
        means = [r for r in rows if r["filename"] == MEAN_ROW]
        assert len(data) == 6 and len(means) == 2
        assert [r["filename"] for r in data] == sorted(r["filename"] for r in data)
        for m in means:
            vals = [float(r["psnr_db"]) for r in data if r["layout"] == m["layout"]]
            assert float(m["psnr_db"]) == pytest.approx(np.mean(vals), abs=1e-5)
        assert read_rows(tmp_path / "out" / "corpus.csv") == rows

    def test_bad_file_row(self, tmp_path):
        corpus = make_corpus(tmp_path / "c", n=2)
        (corpus / "broken.pfm").write_bytes(b"PF\n1 1\n-1\n" + b"\0" * 12)
        rows = evaluate_corpus(corpus, small_cfg(tmp_path))
        bad = [r for r in rows if r["filename"] == "broken.pfm"]
        assert len(bad) == 2 and all("grayscale" in r["error"] for r in bad)
        assert len(rows) == 2 * 3 + 2

    def test_empty_directory(self, tmp_path):
        (tmp_path / "e").mkdir()
        with pytest.raises(PipelineError):
            evaluate_corpus(tmp_path / "e", small_cfg(tmp_path))

    def test_parallel_matches_serial(self, tmp_path):
        corpus = make_corpus(tmp_path / "c")
        strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]
        a = evaluate_corpus(corpus, small_cfg(tmp_path, emit_pfm=False, emit_tonemap=False, emit_mask=False))
        b = evaluate_corpus(corpus, small_cfg(tmp_path, workers=3, emit_pfm=False, emit_tonemap=False,
                                              emit_mask=False))
        assert strip(a) == strip(b)


class TestCli:
    def test_layout_dump(self, capsys):
        assert main(["layout", "--width", "4", "--height", "2", "--layout", "regular"]) == 0
        assert capsys.readouterr().out.startswith("NRHDR-LAYOUT v1 regular 2 1 0")

    def test_layout_inspect(self, tmp_path, capsys):
        f = tmp_path / "l.txt"
        assert main(["layout", "--seed", "3", "--out", str(f)]) == 0
        assert main(["layout", "--inspect", str(f)]) == 0
        assert "corner shares" in capsys.readouterr().out

    def test_zoneplate_verb(self, tmp_path, capsys):
        assert main(["zoneplate", "--size", "16", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "regular" in out and "nonregular" in out

    def test_stripes_verb(self, tmp_path, capsys):
        assert main(["stripes", "--size", "16", "--out", str(tmp_path)]) == 0
        assert "ratio_sampled" in capsys.readouterr().out

    def test_evaluate_verb(self, tmp_path):
        corpus = make_corpus(tmp_path / "c", n=1)
        csv_path = tmp_path / "r.csv"
        assert main(["evaluate", str(corpus), "--out", str(tmp_path / "o"), "--csv", str(csv_path)]) == 0
        assert len(read_rows(csv_path)) == 4

    def test_config_error_exit(self, tmp_path, capsys):
        p = tmp_path / "c.ini"
        p.write_text("[run]\nemit_pfm = no\nemit_tonemap = no\nemit_mask = no\nemit_csv = no\n")
        assert main(["zoneplate", "--config", str(p)]) == 2
        assert "[config]" in capsys.readouterr().err

    def test_pipeline_error_exit(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.pfm"), "--out", str(tmp_path)]) == 1
        assert "[input]" in capsys.readouterr().err
