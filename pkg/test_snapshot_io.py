#!/usr/bin/env python3
"""Tests for the binary block format, bases, operators and the manifest."""

import json
import struct

import numpy as np
import pytest

from conftest import create_sample_field, create_sample_snapshots
from fv_grid import FieldKind, StructuredGrid
from pod import build_basis
from rom import ReducedOperators
from snapshot_io import (
    HEADER,
    MAGIC,
    FingerprintError,
    SnapshotFormatError,
    iter_blocks,
    list_files,
    read_basis,
    read_manifest,
    read_operators,
    read_snapshot_set,
    write_basis,
    write_fields,
    write_manifest,
    write_operators,
    write_snapshot_set,
)


def create_sample_operators(n_omega=3, n_psi=2, seed=0):
    rng = np.random.default_rng(seed)
    return ReducedOperators(
        M=np.eye(n_omega),
        Mt=rng.standard_normal((n_psi, n_omega)),
        A=-np.eye(n_omega),
        B=-2.0 * np.eye(n_psi),
        H=rng.standard_normal(n_omega),
        G=rng.standard_normal((n_omega, n_psi, n_omega)),
        flux_mode="linear",
        fingerprint="abc123",
    )


def test_snapshot_set_round_trip_is_bitwise(tmp_path, grid):
    S = create_sample_snapshots(grid, count=4)
    write_snapshot_set(tmp_path / "omega.bin", S)
    loaded = read_snapshot_set(tmp_path / "omega.bin", grid, FieldKind.VORTICITY)
    assert loaded.kind is FieldKind.VORTICITY
    assert np.array_equal(loaded.matrix, S.matrix)
    assert loaded.params == S.params
    assert loaded.times == S.times


def test_header_layout(tmp_path, grid):
    S = create_sample_snapshots(grid, count=1)
    path = tmp_path / "one.bin"
    write_snapshot_set(path, S)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    magic, tag, nx, ny, lx, ly, n_params, t, n_values = HEADER.unpack(raw[: HEADER.size])
    assert tag.rstrip(b"\x00") == b"omega"
    assert (nx, ny, n_params, n_values) == (16, 16, 2, 256)
    assert t == pytest.approx(0.1)
    assert len(raw) == HEADER.size + 8 * (2 + 256)
    assert struct.unpack("<d", raw[HEADER.size : HEADER.size + 8])[0] == 800.0


def test_grid_fingerprint_guard(tmp_path):
    S = create_sample_snapshots(StructuredGrid(8, 8), count=2)
    write_snapshot_set(tmp_path / "omega.bin", S)
    with pytest.raises(FingerprintError):
        read_snapshot_set(tmp_path / "omega.bin", StructuredGrid(16, 16))


def test_corrupt_files(tmp_path, grid):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + bytes(HEADER.size - 8))
    with pytest.raises(SnapshotFormatError):
        list(iter_blocks(path))
    write_snapshot_set(path, create_sample_snapshots(grid, count=1))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(SnapshotFormatError):
        list(iter_blocks(path))
    path.write_bytes(b"")
    with pytest.raises(SnapshotFormatError):
        read_snapshot_set(path)
    assert len(read_snapshot_set(path, grid, FieldKind.STREAM_FUNCTION)) == 0


def test_basis_round_trip(tmp_path, sample_snapshots):
    basis = build_basis(sample_snapshots, threshold=1e-5)
    write_basis(tmp_path / "basis.bin", basis)
    loaded = read_basis(tmp_path / "basis.bin", basis.grid)
    assert np.array_equal(loaded.modes, basis.modes)
    assert np.array_equal(loaded.eigenvalues, basis.eigenvalues)
    assert loaded.threshold == 1e-5
    assert loaded.fixed_count is None
    assert loaded.kind is FieldKind.VORTICITY

    fixed = build_basis(sample_snapshots, fixed_count=2)
    write_basis(tmp_path / "fixed.bin", fixed)
    assert read_basis(tmp_path / "fixed.bin").fixed_count == 2


def test_basis_from_other_grid_is_refused(tmp_path):
    basis = build_basis(create_sample_snapshots(StructuredGrid(8, 8)), fixed_count=2)
    write_basis(tmp_path / "basis.bin", basis)
    with pytest.raises(FingerprintError):
        read_basis(tmp_path / "basis.bin", StructuredGrid(16, 16))


def test_operator_round_trip_and_fingerprint(tmp_path, grid):
    ops = create_sample_operators()
    path = tmp_path / "operators" / "operators.bin"
    write_operators(path, ops, grid)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    assert sidecar["fingerprint"] == "abc123"
    assert (sidecar["n_omega"], sidecar["n_psi"]) == (3, 2)

    loaded = read_operators(path, grid, "abc123")
    for name in ("M", "Mt", "A", "B", "H", "G"):
        assert np.array_equal(getattr(loaded, name), getattr(ops, name))
    assert loaded.flux_mode == "linear"
    with pytest.raises(FingerprintError):
        read_operators(path, grid, "other")
    with pytest.raises(FingerprintError):
        read_operators(path, StructuredGrid(8, 8))


def test_write_fields_and_manifest(tmp_path, grid):
    fields = [create_sample_field(grid, k) for k in range(3)]
    write_fields(tmp_path / "fields.bin", fields, ["omega_h", "omega_r", "omega_d"], [1.0, 1.0, 1.0], (800.0, 0.0))
    blocks = list(iter_blocks(tmp_path / "fields.bin"))
    assert [b.tag for b in blocks] == ["omega_h", "omega_r", "omega_d"]
    assert np.array_equal(blocks[1].values, fields[1].values)

    write_manifest(tmp_path / "manifest.json", {"snapshots": {"omega": 500}, "files": ["b", "a"]})
    assert read_manifest(tmp_path / "manifest.json")["snapshots"]["omega"] == 500
    assert list_files(tmp_path) == ["fields.bin", "manifest.json"]


def test_long_tags_are_rejected(tmp_path, grid):
    with pytest.raises(ValueError):
        write_fields(tmp_path / "x.bin", [create_sample_field(grid)], ["much_too_long"], [0.0])
