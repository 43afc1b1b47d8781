"""File formats: cube files, canonical JSON, run configuration."""

import numpy as np
import pytest

from helen import io
from helen.core import HsiCube
from helen.errors import ConfigError, DataError


def _cube(rng, rows=4, cols=4, bands=3):
    return HsiCube(rows, cols, bands, rng.uniform(0, 1, (bands, rows * cols)))


def test_cube_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    cube = _cube(rng)
    path = tmp_path / "a.cube"
    io.write_cube(cube, path)
    back = io.read_cube(path)
    assert back.rows == cube.rows and back.cols == cube.cols
    assert back.bands == cube.bands
    assert np.array_equal(back.values, cube.values)


def test_cube_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    cube = _cube(rng)
    p1, p2 = tmp_path / "a.cube", tmp_path / "b.cube"
    io.write_cube(cube, p1)
    io.write_cube(cube, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_cube_bad_magic(tmp_path):
    path = tmp_path / "bad.cube"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(DataError, match="offset 0"):
        io.read_cube(path)


def test_cube_bad_version(tmp_path):
    rng = np.random.default_rng(2)
    path = tmp_path / "v.cube"
    io.write_cube(_cube(rng), path)
    raw = bytearray(path.read_bytes())
    raw[4] = 9  # bump the version field
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="version"):
        io.read_cube(path)


def test_cube_truncated_payload(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "t.cube"
    io.write_cube(_cube(rng), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DataError, match="truncated"):
        io.read_cube(path)


def test_cube_trailing_data(tmp_path):
    rng = np.random.default_rng(4)
    path = tmp_path / "x.cube"
    io.write_cube(_cube(rng), path)
    with open(path, "ab") as fh:
        fh.write(b"\x00")
    with pytest.raises(DataError, match="trailing"):
        io.read_cube(path)


def test_cube_truncated_header(tmp_path):
    path = tmp_path / "h.cube"
    path.write_bytes(b"HYP")
    with pytest.raises(DataError, match="header"):
        io.read_cube(path)


def test_canonical_json_sorted_and_stable():
    doc = {"b": 2, "a": [1.5, True, None, "x"]}
    out = io.dumps_canonical(doc)
    assert out == '{"a":[1.5,true,null,"x"],"b":2}\n'
    assert io.dumps_canonical(doc) == out


def test_canonical_json_float_precision():
    val = 0.1 + 0.2
    out = io.dumps_canonical({"v": val})
    assert "%.17g" % val in out
    import json

    assert json.loads(out)["v"] == val


def test_canonical_json_rejects_non_finite():
    with pytest.raises(ValueError):
        io.dumps_canonical({"v": float("inf")})
    with pytest.raises(ValueError):
        io.dumps_canonical({"v": float("nan")})


def test_canonical_json_numpy_arrays():
    out = io.dumps_canonical({"a": np.array([1.0, 2.0])})
    assert out == '{"a":[1,2]}\n'


def test_write_read_json(tmp_path):
    path = tmp_path / "d.json"
    io.write_json({"x": [1, 2, 3]}, path)
    assert io.read_json(path) == {"x": [1, 2, 3]}
    path.write_text("{not json")
    with pytest.raises(DataError):
        io.read_json(path)


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    io.write_json({"prior_family": "beta", "n_endmembers": 3,
                   "bogus_key": 1}, path)
    with pytest.raises(ConfigError, match="bogus_key"):
        io.load_config(path)
    io.write_json(["not", "an", "object"], path)
    with pytest.raises(ConfigError):
        io.load_config(path)


def test_engine_config_from_doc(tmp_path):
    path = tmp_path / "cfg.json"
    io.write_json({"prior_family": "beta", "n_endmembers": 3,
                   "patch_rows": 4, "max_sweeps": 7,
                   "apg": {"max_iters": 5},
                   "outlier": {"mean": 0.0, "variance": 4.0},
                   "init": {"mode": "random-simplex"}}, path)
    cfg = io.engine_config_from(io.load_config(path))
    assert cfg.prior_family == "beta"
    assert cfg.patch_rows == 4
    assert cfg.max_sweeps == 7
    assert cfg.apg.max_iters == 5
    assert cfg.outlier.variance == 4.0
    assert cfg.init.mode == "random-simplex"


def test_engine_config_requires_mandatory_keys():
    with pytest.raises(ConfigError):
        io.engine_config_from({"n_endmembers": 3})
    with pytest.raises(ConfigError):
        io.engine_config_from({"prior_family": "beta", "n_endmembers": 0})


def test_synth_config_from_doc():
    cfg = io.synth_config_from({"rows": 8, "cols": 8, "bands": 10,
                                "n_endmembers": 3, "snr_db": "inf",
                                "ev_scale_range": [0.9, 1.1]})
    assert cfg.snr_db == float("inf")
    assert cfg.ev_scale_range == (0.9, 1.1)
    with pytest.raises(ConfigError):
        io.synth_config_from({"rows": 8, "cols": 8, "bands": 10,
                              "n_endmembers": 3, "snr_db": "loud"})
    with pytest.raises(ConfigError):
        io.synth_config_from({"rows": 0, "cols": 8, "bands": 10,
                              "n_endmembers": 3})


def test_endmember_csv(tmp_path):
    path = tmp_path / "e.csv"
    A = np.array([[0.25, 0.5], [0.75, 1.0]])
    io.write_endmember_csv(A, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "band,em1,em2"
    assert lines[1].startswith("0,0.25,0.5")
    assert len(lines) == 3


def test_result_truth_documents_roundtrip(tmp_path):
    import helen

    scfg = helen.SynthConfig(rows=6, cols=6, bands=8, n_endmembers=2,
                             patch_rows=3, patch_cols=3, seed=0)
    truth = helen.generate(scfg)
    ecfg = helen.EngineConfig(prior_family="beta", n_endmembers=2,
                              patch_rows=3, patch_cols=3, max_sweeps=3)
    result = helen.run(truth.cube, ecfg)
    rp, tp = tmp_path / "r.json", tmp_path / "t.json"
    io.write_json(io.result_to_dict(result), rp)
    io.write_json(io.truth_to_dict(truth), tp)
    rdoc, tdoc = io.read_json(rp), io.read_json(tp)
    assert np.allclose(np.asarray(rdoc["abundances"]), result.abundances)
    assert np.allclose(np.asarray(rdoc["endmembers"]), result.endmembers)
    assert rdoc["grid"]["patch_rows"] == 3
    assert np.allclose(np.asarray(tdoc["per_pixel_endmembers"]),
                       truth.per_pixel_endmembers)
    assert tdoc["rows"] == 6
