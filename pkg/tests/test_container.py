"""Container format: round-trips, corruption handling, typed helpers."""
import numpy as np
import pytest

from qdrom.container import (
    FormatError,
    load_model,
    load_run_record,
    load_snapshot_set,
    read_container,
    save_model,
    save_run_record,
    save_snapshot_set,
    write_container,
)
from qdrom.lowrank import dmd_compress, pod_compress


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "a": rng.normal(size=(7, 3)),
        "b": np.array([1e-310, -0.0, np.pi, 1e300]),  # subnormal and signed zero
    }
    path = tmp_path / "t.ddet"
    write_container(path, "results", {"note": "x", "n": 3}, arrays)
    kind, desc, back = read_container(path)
    assert kind == "results"
    assert desc == {"note": "x", "n": 3}
    assert back["a"].tobytes() == arrays["a"].tobytes()
    assert back["b"].tobytes() == arrays["b"][None, :].tobytes()


def test_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    arrays = {"x": rng.normal(size=(4, 4))}
    p1, p2 = tmp_path / "a.ddet", tmp_path / "b.ddet"
    write_container(p1, "results", {"k": 1}, arrays)
    write_container(p2, "results", {"k": 1}, arrays)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ddet"
    path.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(FormatError):
        read_container(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v.ddet"
    write_container(path, "results", {}, {"x": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_container(path)


def test_truncation_and_trailing(tmp_path):
    path = tmp_path / "t.ddet"
    write_container(path, "results", {}, {"x": np.arange(6.0)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(FormatError):
        read_container(path)
    path.write_bytes(raw + b"extra")
    with pytest.raises(FormatError):
        read_container(path)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_container(tmp_path / "x.ddet", "mystery", {}, {})


def test_snapshot_set_roundtrip(tmp_path, tiny_snapshots, tiny_config):
    path = tmp_path / "snaps.ddet"
    save_snapshot_set(path, tiny_snapshots, tiny_config.to_dict())
    back, meta = load_snapshot_set(path)
    assert meta["nx"] == tiny_config.nx
    for name, mat in tiny_snapshots.items():
        assert np.array_equal(back[name].data, mat.data)
        assert back[name].layout == mat.layout
        assert back[name].dt == mat.dt


def test_pod_model_roundtrip(tmp_path, tiny_snapshots):
    model = pod_compress(tiny_snapshots["fxx_c"], 1e-6)
    path = tmp_path / "m.ddet"
    save_model(path, model)
    back = load_model(path)
    assert back.rank == model.rank
    assert back.xi_rel == model.xi_rel
    for n in (1, 3, 5):
        assert np.array_equal(back.reconstruct(n), model.reconstruct(n))


@pytest.mark.parametrize("variant", ["plain", "equilibrium_subtracted"])
def test_dmd_model_roundtrip(tmp_path, tiny_snapshots, variant):
    model = dmd_compress(tiny_snapshots["cb"], 1e-8, variant=variant)
    path = tmp_path / "m.ddet"
    save_model(path, model)
    back = load_model(path)
    assert back.variant == model.variant
    assert np.array_equal(back.eigenvalues, model.eigenvalues)
    for n in (1, 2, 5):
        assert np.allclose(back.reconstruct(n), model.reconstruct(n), rtol=0, atol=0)


def test_run_record_roundtrip(tmp_path, tiny_fom):
    path = tmp_path / "run.ddet"
    save_run_record(path, tiny_fom)
    back = load_run_record(path)
    assert np.array_equal(back.temperature, tiny_fom.temperature)
    assert np.array_equal(back.e_cell, tiny_fom.e_cell)
    assert np.array_equal(back.f_hface, tiny_fom.f_hface)
    assert np.array_equal(back.iterations, tiny_fom.iterations)
    assert back.mode == "fom"
    assert back.time.n_steps == tiny_fom.time.n_steps


def test_model_kind_mismatch(tmp_path, tiny_snapshots, tiny_config):
    path = tmp_path / "s.ddet"
    save_snapshot_set(path, tiny_snapshots, tiny_config.to_dict())
    with pytest.raises(FormatError):
        load_model(path)
    with pytest.raises(FormatError):
        load_run_record(path)
