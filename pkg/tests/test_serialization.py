"""Container format: roundtrips, canonical bytes, atomicity expectations."""

import os

import numpy as np
import pytest

from lgmix import serialization as ser
from lgmix.dataset import NormStats, TrajectoryDataset, assign_split
from lgmix.model import ModelConfig, build_model
from lgmix.training import AdamW


def sample_dataset():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((4, 3, 1, 16))
    return TrajectoryDataset(data, "ks1d", ["u"], assign_split(4, 0.75),
                             {"seed": 3, "pde": "ks1d"})


def test_dataset_roundtrip_bit_exact(tmp_path):
    path = str(tmp_path / "data.dmxd")
    ds = sample_dataset()
    ser.save_dataset(path, ds)
    back = ser.load_dataset(path)
    assert back.data.tobytes() == ds.data.tobytes()
    assert back.split == ds.split
    assert back.channel_names == ds.channel_names
    assert back.pde == ds.pde
    assert back.spec_echo == ds.spec_echo


def test_dataset_file_layout(tmp_path):
    path = str(tmp_path / "data.dmxd")
    ser.save_dataset(path, sample_dataset())
    blob = open(path, "rb").read()
    assert blob[:4] == b"DMXD"
    hlen = int(np.frombuffer(blob[4:8], "<u4")[0])
    header = blob[8 : 8 + hlen].decode("utf-8")
    assert '"kind":"dataset"' in header


def test_trajectory_roundtrip(tmp_path):
    path = str(tmp_path / "pred.dmxd")
    arr = np.random.default_rng(1).standard_normal((5, 1, 16))
    ser.save_trajectory(path, arr, meta={"steps": 5})
    back, meta = ser.load_trajectory(path)
    assert back.tobytes() == arr.tobytes()
    assert meta["steps"] == 5


def test_magic_mismatch_rejected(tmp_path):
    path = str(tmp_path / "x.bin")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ser.FormatError, match="magic"):
        ser.load_dataset(path)


def checkpoint_roundtrip_setup(tmp_path):
    model = build_model(ModelConfig(d_u=1, d_m=3, depth=2, modes=(3,)), 5, "f64")
    opt = AdamW(model.parameters(), lr=1e-3)
    for p in model.parameters():
        p.grad[...] = 0.01
    opt.step()
    norm = NormStats(mins=np.array([-1.0]), maxs=np.array([2.0]))
    path = str(tmp_path / "model.dmxc")
    ser.save_checkpoint(
        path, model_config=model.config.to_dict(), precision="f64",
        run_config={"seed": 5, "lr": 1e-3}, epoch=7, optimizer_step=opt.step_count,
        arrays=ser.checkpoint_arrays(model, opt, norm),
    )
    return model, opt, norm, path


def test_checkpoint_roundtrip_restores_everything(tmp_path):
    model, opt, norm, path = checkpoint_roundtrip_setup(tmp_path)
    ck = ser.load_checkpoint(path)
    assert ck["epoch"] == 7
    assert ck["optimizer_step"] == 1
    assert ck["model_config"] == model.config.to_dict()
    model2 = build_model(ModelConfig.from_dict(ck["model_config"]), 99, "f64")
    ser.restore_model_arrays(model2, ck["arrays"])
    for a, b in zip(model.parameters(), model2.parameters()):
        assert a.value.tobytes() == b.value.tobytes()
    norm2 = ser.norm_from_arrays(ck["arrays"])
    assert np.array_equal(norm2.mins, norm.mins)
    opt2 = AdamW(model2.parameters(), lr=1e-3)
    opt2.load_state_arrays(ck["arrays"], ck["optimizer_step"])
    for p in model.parameters():
        assert opt2.m[p.name].tobytes() == opt.m[p.name].tobytes()


def test_checkpoint_save_load_save_byte_identical(tmp_path):
    _, _, _, path = checkpoint_roundtrip_setup(tmp_path)
    first = open(path, "rb").read()
    ck = ser.load_checkpoint(path)
    path2 = str(tmp_path / "again.dmxc")
    ser.save_checkpoint(
        path2, model_config=ck["model_config"], precision=ck["precision"],
        run_config=ck["run_config"], epoch=ck["epoch"],
        optimizer_step=ck["optimizer_step"], arrays=ck["arrays"],
    )
    assert open(path2, "rb").read() == first


def test_restore_shape_mismatch_rejected(tmp_path):
    _, _, _, path = checkpoint_roundtrip_setup(tmp_path)
    ck = ser.load_checkpoint(path)
    other = build_model(ModelConfig(d_u=1, d_m=4, depth=2, modes=(3,)), 5, "f64")
    with pytest.raises(ser.FormatError, match="shape"):
        ser.restore_model_arrays(other, ck["arrays"])


def test_restore_missing_parameter_rejected(tmp_path):
    _, _, _, path = checkpoint_roundtrip_setup(tmp_path)
    ck = ser.load_checkpoint(path)
    arrays = dict(ck["arrays"])
    arrays.pop("param.lift.w")
    model = build_model(ModelConfig.from_dict(ck["model_config"]), 5, "f64")
    with pytest.raises(ser.FormatError, match="missing"):
        ser.restore_model_arrays(model, arrays)


def test_no_temp_files_left_behind(tmp_path):
    path = str(tmp_path / "data.dmxd")
    ser.save_dataset(path, sample_dataset())
    leftovers = [f for f in os.listdir(tmp_path) if f.endswith(".tmp")]
    assert leftovers == []


def test_complex_parameters_survive_roundtrip(tmp_path):
    model = build_model(ModelConfig(d_u=1, d_m=2, depth=1, modes=(4,)), 6, "f64")
    path = str(tmp_path / "c.dmxc")
    ser.save_checkpoint(
        path, model_config=model.config.to_dict(), precision="f64",
        run_config={}, epoch=0, optimizer_step=0,
        arrays=ser.checkpoint_arrays(model),
    )
    ck = ser.load_checkpoint(path)
    key = "param.layers.0.non.0.glob.w"
    assert ck["arrays"][key].dtype == np.complex128
    assert ck["arrays"][key].tobytes() == model.params["layers.0.non.0.glob.w"].value.tobytes()
