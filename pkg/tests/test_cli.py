"""Command-line surface: pipeline, exit codes, selftest."""

import json

import numpy as np
import pytest

from helen import io
from helen.cli import main


def _write_cfg(path, doc):
    io.write_json(doc, path)
    return str(path)


SYNTH_DOC = {"rows": 8, "cols": 8, "bands": 10, "n_endmembers": 2,
             "patch_rows": 4, "patch_cols": 4, "snr_db": 25.0, "seed": 0,
             "prior_family": "beta", "max_sweeps": 10}


def test_pipeline_synth_unmix_eval(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "cfg.json", SYNTH_DOC)
    prefix = str(tmp_path / "run")
    assert main(["synth", "--config", cfg, "--out-prefix", prefix]) == 0
    assert main(["unmix", "--config", cfg, "--cube", prefix + ".cube",
                 "--out-prefix", prefix]) == 0
    assert main(["eval", "--result", prefix + ".result.json",
                 "--truth", prefix + ".truth.json",
                 "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) >= {"sam_deg", "rmse_s", "mse_db"}
    assert (tmp_path / "report.json").exists()
    # elbo trace column is non-decreasing within 1e-8 relative
    rows = (tmp_path / "run.elbo.csv").read_text().splitlines()
    assert rows[0] == "sweep,elbo,sigma2,gamma,seconds"
    elbo = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert not np.any(np.diff(elbo) < -1e-8 * np.abs(elbo[:-1]))


def test_missing_cube_argument_exits_2(tmp_path):
    cfg = _write_cfg(tmp_path / "cfg.json", SYNTH_DOC)
    with pytest.raises(SystemExit) as exc:
        main(["unmix", "--config", cfg, "--out-prefix", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_unknown_config_key_exits_2(tmp_path):
    cfg = _write_cfg(tmp_path / "cfg.json", dict(SYNTH_DOC, wibble=1))
    assert main(["synth", "--config", cfg,
                 "--out-prefix", str(tmp_path / "x")]) == 2


def test_missing_cube_file_exits_3(tmp_path):
    cfg = _write_cfg(tmp_path / "cfg.json", SYNTH_DOC)
    assert main(["unmix", "--config", cfg, "--cube",
                 str(tmp_path / "nope.cube"),
                 "--out-prefix", str(tmp_path / "x")]) == 3


def test_eval_mismatched_shapes_exits_3(tmp_path):
    cfg = _write_cfg(tmp_path / "cfg.json", SYNTH_DOC)
    prefix = str(tmp_path / "run")
    assert main(["synth", "--config", cfg, "--out-prefix", prefix]) == 0
    assert main(["unmix", "--config", cfg, "--cube", prefix + ".cube",
                 "--out-prefix", prefix]) == 0
    # truth with a different endmember count
    other = dict(SYNTH_DOC, n_endmembers=3)
    cfg3 = _write_cfg(tmp_path / "cfg3.json", other)
    prefix3 = str(tmp_path / "run3")
    assert main(["synth", "--config", cfg3, "--out-prefix", prefix3]) == 0
    assert main(["eval", "--result", prefix + ".result.json",
                 "--truth", prefix3 + ".truth.json"]) == 3


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "selftest OK" in capsys.readouterr().out


def test_bad_threads_value_exits_2(monkeypatch, capsys):
    monkeypatch.setenv("HELEN_THREADS", "many")
    assert main(["selftest"]) == 2


def test_threads_flag_sets_env(monkeypatch, tmp_path):
    monkeypatch.delenv("HELEN_THREADS", raising=False)
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    assert main(["--threads", "2", "selftest"]) == 0
    import os

    assert os.environ["OMP_NUM_THREADS"] == "2"
