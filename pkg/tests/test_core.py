import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massgrasp.config import ExperimentConfig, MaterialParams, get_material
from massgrasp.core import (
    Dataset, Tray, dataset_from_bytes, dataset_to_bytes, load_dataset, quantize,
    save_dataset, total_mass_g,
)
from massgrasp.errors import (
    ChannelMismatchError, ConfigError, CorruptHeaderError, TruncatedPayloadError,
)
from massgrasp.sim import init_tray

from conftest import random_dataset


def flat_tray(h, shape=(40, 50), material=None):
    mat = material or get_material("coffee")
    z = np.full(shape, float(h))
    return Tray(z, np.zeros(shape), 5.0, mat)


def test_empty_tray_has_no_mass():
    assert total_mass_g(flat_tray(0.0)) == 0.0


@given(h=st.floats(0, 100), rows=st.integers(30, 60), cols=st.integers(30, 60))
def test_uniform_tray_closed_form(h, rows, cols):
    tray = flat_tray(h, (rows, cols))
    rho = tray.material.density_scale
    closed = rho * h * rows * cols * 25.0 / 1000.0
    summed = sum(rho * float(v) * 25.0 / 1000.0 for v in tray.heights.ravel())
    assert total_mass_g(tray) == pytest.approx(closed, rel=1e-9, abs=1e-12)
    assert summed == pytest.approx(closed, rel=1e-9, abs=1e-12)


def test_init_tray_mass_matches_cellwise_resummation():
    mat = get_material("coffee")
    tray = init_tray(mat, 2000.0, seed=7)
    acc = 0.0
    for row in tray.heights:
        for v in row:
            acc += float(v) * tray.cell_size_mm * tray.cell_size_mm
    assert total_mass_g(tray) == pytest.approx(mat.density_scale * acc / 1000.0, rel=1e-12)


@pytest.mark.parametrize("field,value", [
    ("density_scale", 0.0), ("noise_cv", -0.1), ("repose_slope", 0.0),
    ("capacity_g", -1.0), ("breakage_prob", 1.5), ("compress_factor", 0.0),
    ("compress_factor", 1.2),
])
def test_material_invariants(field, value):
    kw = dict(name="x", density_scale=1.0, noise_cv=0.1, repose_slope=1.0, capacity_g=10.0)
    kw[field] = value
    with pytest.raises(ConfigError):
        MaterialParams(**kw)


def test_band_defaults_to_half_resolution():
    cfg = ExperimentConfig()
    assert cfg.band_g == cfg.scale_resolution_g / 2
    assert cfg.output_dim == 1
    with pytest.raises(ConfigError):
        ExperimentConfig(output_dim=2)


@given(st.floats(0, 500, allow_nan=False))
def test_quantize_is_multiple(m):
    q = quantize(m, 1.0)
    assert q == int(q)
    assert abs(q - m) <= 0.5


def test_quantize_ties_to_even():
    assert quantize(22.5, 1.0) == 22.0
    assert quantize(23.5, 1.0) == 24.0


def test_save_rejects_empty_path():
    with pytest.raises(ValueError):
        save_dataset(random_dataset(1), "")
    with pytest.raises(ValueError):
        load_dataset("")


def test_single_record_roundtrip(tmp_path):
    ds = random_dataset(1, seed=3)
    save_dataset(ds, tmp_path / "one.mgds")
    back = load_dataset(tmp_path / "one.mgds")
    assert back == ds
    assert back.records[0] == ds.records[0]


def test_thousand_records_resave_is_byte_identical(tmp_path):
    ds = random_dataset(1000, seed=11)
    a, b = tmp_path / "a.mgds", tmp_path / "b.mgds"
    save_dataset(ds, a)
    save_dataset(load_dataset(a), b)
    assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(b.read_bytes()).hexdigest()
    assert load_dataset(b) == ds


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 8), p=st.integers(2, 12), seed=st.integers(0, 2**63 - 1),
       name=st.text(min_size=0, max_size=12))
def test_roundtrip_property(n, p, seed, name):
    ds = random_dataset(n, p=p, seed=seed % 1000)
    ds = Dataset(ds.records, name, seed)
    back = dataset_from_bytes(dataset_to_bytes(ds))
    assert back == ds
    assert back.seed == seed and back.material_name == name


def test_corrupt_header_is_distinct():
    buf = bytearray(dataset_to_bytes(random_dataset(2)))
    buf[:4] = b"XXXX"
    with pytest.raises(CorruptHeaderError):
        dataset_from_bytes(bytes(buf))
    with pytest.raises(CorruptHeaderError):
        dataset_from_bytes(b"MG")


def test_channel_mismatch_is_distinct():
    buf = dataset_to_bytes(random_dataset(2))
    with pytest.raises(ChannelMismatchError):
        dataset_from_bytes(buf, expect_channels=3)


def test_truncated_payload_is_distinct():
    buf = dataset_to_bytes(random_dataset(3))
    with pytest.raises(TruncatedPayloadError):
        dataset_from_bytes(buf[:-10])


def test_format_errors_are_different_types():
    kinds = {CorruptHeaderError, ChannelMismatchError, TruncatedPayloadError}
    assert len(kinds) == 3
    assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)
