import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hrom import config as cfgmod
from hrom import io
from hrom.cli import main


def test_snapshot_round_trip_bit_exact(tmp_path):
    data = np.random.default_rng(0).standard_normal((7, 5))
    data[0, 0] = -0.0
    p = io.write_snapshots(tmp_path / "s.bin", data, 0.01, 3, {"config_hash": "abc"})
    back, hdr, meta = io.read_snapshots(p)
    np.testing.assert_array_equal(back.view(np.uint64), data.view(np.uint64))
    assert np.signbit(back[0, 0])
    assert hdr == {"N": 7, "count": 5, "dt": 0.01, "stride": 3}
    assert meta == {"config_hash": "abc"}
    # column-major payload: first N values are column 0
    raw = np.fromfile(p, dtype="<f8", offset=44)  # 8 + 4 + 8 + 8 + 8 + 8 header bytes
    np.testing.assert_array_equal(raw[:7], data[:, 0])
    assert (tmp_path / "s.bin.json").exists()


@settings(max_examples=25, deadline=None)
@given(a=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                elements=st.floats(allow_nan=False, allow_infinity=True)))
def test_snapshot_round_trip_property(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("rt") / "a.bin"
    io.write_snapshots(p, a)
    back, _, _ = io.read_snapshots(p)
    assert back.shape == a.shape
    np.testing.assert_array_equal(back.view(np.uint64), np.asarray(a).view(np.uint64))


def test_snapshot_format_errors(tmp_path):
    p = io.write_snapshots(tmp_path / "s.bin", np.ones((3, 2)))
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTHROM1" + raw[8:])
    with pytest.raises(io.FormatError):
        io.read_snapshots(bad)
    bad.write_bytes(raw[:-8])
    with pytest.raises(io.FormatError):
        io.read_snapshots(bad)
    bad.write_bytes(raw[:10])
    with pytest.raises(io.FormatError):
        io.read_header(bad)
    raw[8] = 9
    bad.write_bytes(raw)
    with pytest.raises(io.FormatError):
        io.read_header(bad)


def test_csv_format(tmp_path):
    p = io.write_csv(tmp_path / "a.csv", ["t", "value"], [np.array([0.0, 0.1]), np.array([1 / 3, 2.0])])
    text = p.read_bytes().decode()
    assert "\r" not in text
    assert text.splitlines()[0] == "t,value"
    assert text.splitlines()[2] == "0.10000000000000001,2"
    assert text.splitlines()[1].split(",")[1] == "0.33333333333333331"
    back = io.read_csv(p)
    assert back["value"][0] == 1 / 3
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "b.csv", ["a", "b"], [[1.0], [1.0, 2.0]])


def test_json_is_deterministic(tmp_path):
    obj = {"b": np.float64(1.5), "a": np.arange(3), "c": slice(0, 4)}
    io.write_json(tmp_path / "x.json", obj)
    assert (tmp_path / "x.json").read_text() == '{\n  "a": [\n    0,\n    1,\n    2\n  ],\n  "b": 1.5,\n  "c": [\n    0,\n    4\n  ]\n}\n'


BASE = {
    "model": {"kind": "single_kdv", "params": {"alpha": 6, "mu": 1}, "grid": {"a": -10, "b": 10, "N": 100}},
    "initial_condition": {"kind": "one_soliton", "params": {"beta": 1.5}},
    "time": {"T": 0.5, "dt": 0.01},
    "basis": {"n": 6},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validation_paths():
    with pytest.raises(cfgmod.ConfigValidationError) as e:
        cfgmod.validate({**BASE, "time": {"T": -1, "dt": 0.1}})
    assert e.value.path == "time/T"
    with pytest.raises(cfgmod.ConfigValidationError) as e:
        cfgmod.validate({**BASE, "time": {"T": 1, "dt": 0.1, "Nt": 10}})
    assert e.value.path == "time"
    with pytest.raises(cfgmod.ConfigValidationError) as e:
        cfgmod.validate({**BASE, "model": {"kind": "zakharov_kuznetsov", "grid": {"a": 0, "b": 1}}})
    assert e.value.path == "model/grid"
    with pytest.raises(cfgmod.ConfigValidationError) as e:
        cfgmod.validate({**BASE, "extra": 1})
    assert e.value.path == "<root>"
    cfg = cfgmod.validate(BASE)
    assert cfg["basis"]["threshold"] == 99.99 and cfg["basis"]["n"] == 6


def test_config_hash_scope():
    a = cfgmod.validate(BASE)
    b = cfgmod.validate({**BASE, "basis": {"n": 3}})
    c = cfgmod.validate({**BASE, "time": {"T": 0.5, "dt": 0.005}})
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b) != cfgmod.config_hash(c)


def test_cli_schema_error_exit_code(tmp_path, capsys):
    p = write_cfg(tmp_path, {**BASE, "time": {"T": 1.0}})
    assert main(["fom", "--config", p, "--out", str(tmp_path)]) == 2
    assert "time" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{")
    assert main(["fom", "--config", str(tmp_path / "broken.json")]) == 2


def test_cli_missing_inputs_exit_code(tmp_path):
    assert main(["fom", "--config", str(tmp_path / "nope.json")]) == 4
    p = write_cfg(tmp_path, BASE)
    assert main(["basis", "--config", p, "--out", str(tmp_path / "empty")]) == 4
    assert main(["compare", "--config", p, "--out", str(tmp_path / "empty")]) == 4


def test_cli_numerical_failure_exit_code(tmp_path):
    p = write_cfg(tmp_path, {**BASE, "basis": {"n": 500}})
    out = str(tmp_path / "o")
    assert main(["fom", "--config", p, "--out", out]) == 0
    assert main(["basis", "--config", p, "--out", out]) == 3


@pytest.fixture
def pipeline(tmp_path):
    p = write_cfg(tmp_path, BASE)
    out = tmp_path / "run"
    for cmd in ("fom", "basis", "rom", "compare"):
        assert main([cmd, "--config", p, "--out", str(out)]) == 0
    return p, out


def test_cli_pipeline_outputs(pipeline):
    p, out = pipeline
    for name in ("snapshots.bin", "snapshots.bin.json", "invariants.csv", "summary_fom.json",
                 "basis_0.bin", "basis.json", "spectrum_u.csv", "reduced_operators.npz",
                 "rom_tensorial.bin", "rom_lifted.bin", "summary_rom.json", "errors_tensorial.csv",
                 "errors_lifted.csv", "summary_compare.json"):
        assert (out / name).exists(), name
    summ = io.read_json(out / "summary_compare.json")
    e = summ["errors"]
    assert e["tensorial"]["relative_l2"] == pytest.approx(e["lifted"]["relative_l2"], rel=1e-8)
    h = cfgmod.config_hash(cfgmod.load(p))
    for name in ("summary_fom.json", "basis.json", "summary_rom.json", "summary_compare.json"):
        assert io.read_json(out / name)["config_hash"] == h
    assert io.read_snapshots(out / "snapshots.bin")[2]["config_hash"] == h
    assert io.read_json(out / "basis.json")["seed"] == 0


def test_cli_summaries_are_byte_identical_on_rerun(pipeline):
    p, out = pipeline
    first = {n: (out / n).read_bytes() for n in ("summary_fom.json", "basis.json", "summary_rom.json",
                                                 "summary_compare.json")}
    for cmd in ("fom", "basis", "rom", "compare"):
        assert main([cmd, "--config", p, "--out", str(out)]) == 0
    for n, b in first.items():
        assert (out / n).read_bytes() == b, n


def test_cli_self_compare_is_zero(pipeline):
    p, out = pipeline
    assert main(["compare", "--config", p, "--out", str(out), "--candidate", str(out / "snapshots.bin")]) == 0
    e = io.read_json(out / "summary_compare.json")["errors"]["candidate"]
    assert e == {"relative_l2": 0.0, "abs_H": 0.0, "abs_I1": 0.0}
    cols = io.read_csv(out / "errors_candidate.csv")
    assert np.all(cols["relative_l2"] == 0.0)


def test_cli_compare_refuses_hash_mismatch(pipeline, tmp_path):
    p, out = pipeline
    other = write_cfg(tmp_path, {**BASE, "time": {"T": 0.5, "dt": 0.005}}, "other.json")
    assert main(["compare", "--config", other, "--out", str(out)]) == 2


def test_cli_hrom_out_overrides(tmp_path, monkeypatch):
    p = write_cfg(tmp_path, BASE)
    monkeypatch.setenv("HROM_OUT", str(tmp_path / "env"))
    assert main(["fom", "--config", p, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "snapshots.bin").exists()
    assert not (tmp_path / "flag").exists()


def test_cli_seed_override_recorded(tmp_path):
    p = write_cfg(tmp_path, {**BASE, "basis": {"n": 6, "method": "rsvd", "rank": 10, "oversample": 5}})
    out = str(tmp_path / "o")
    assert main(["fom", "--config", p, "--out", out]) == 0
    assert main(["basis", "--config", p, "--out", out, "--seed", "7"]) == 0
    assert io.read_json(tmp_path / "o" / "basis.json")["seed"] == 7


def test_cli_eoc_and_bench(tmp_path):
    cfg = {
        "model": {"kind": "single_kdv", "params": {"alpha": 1, "mu": 1}, "grid": {"a": -40, "b": 40, "dx": 2.0}},
        "initial_condition": {"kind": "two_soliton", "params": {}},
        "time": {"T": 2.0, "dt": 0.25},
        "eoc": {"dx": [2.0, 1.0], "dt": [0.25, 0.125], "T": 2.0},
        "bench": {"n": 4, "online_steps": 4, "repeats": 1},
    }
    p = write_cfg(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["eoc", "--config", p, "--out", str(out)]) == 0
    s = io.read_json(out / "summary_eoc.json")
    assert len(s["levels"]) == 2 and len(s["orders"]) == 1
    cols = io.read_csv(out / "eoc.csv")
    assert list(cols) == ["dx", "dt", "relative_error", "absolute_error", "order"]
    assert main(["bench", "--config", p, "--out", str(out)]) == 0
    b = io.read_json(out / "bench.json")
    assert set(b["online"]) == {"tensorial", "lifted"}
