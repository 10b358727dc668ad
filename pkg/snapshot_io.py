"""
Binary persistence for snapshot sets, POD bases and reduced operators.

A file is a sequence of blocks. Each block is a fixed little-endian header

    magic "SFVROM1\\0" | tag (8 bytes ascii) | nx, ny (int64) | lx, ly (float64)
    | n_params (int64) | time (float64) | n_values (int64)

followed by n_params and n_values float64 values. Field blocks carry
n_values = nx * ny; operator blocks carry flattened matrices.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence

import numpy as np

from fv_grid import FieldKind, ScalarField, StructuredGrid
from pod import PodBasis, SnapshotSet
from rom import ReducedOperators

logger = logging.getLogger(__name__)

MAGIC = b"SFVROM1\x00"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8s8sqqddqdq")
FLOAT = np.dtype("<f8")


class SnapshotFormatError(ValueError):
    """File is not a readable block file."""


class FingerprintError(ValueError):
    """Stored data was produced for a different grid or configuration."""


@dataclass
class Block:
    tag: str
    nx: int
    ny: int
    lx: float
    ly: float
    params: np.ndarray
    time: float
    values: np.ndarray

    @property
    def grid(self) -> StructuredGrid:
        return StructuredGrid(self.nx, self.ny, self.lx, self.ly)


def _encode_tag(tag: str) -> bytes:
    raw = tag.encode("ascii")
    if len(raw) > 8:
        raise ValueError(f"Block tag '{tag}' is longer than 8 bytes")
    return raw.ljust(8, b"\x00")


def write_blocks(path, blocks: Sequence[Block]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        for block in blocks:
            params = np.asarray(block.params, dtype=FLOAT).reshape(-1)
            values = np.asarray(block.values, dtype=FLOAT).reshape(-1)
            f.write(
                HEADER.pack(
                    MAGIC, _encode_tag(block.tag), block.nx, block.ny, block.lx, block.ly,
                    params.size, block.time, values.size,
                )
            )
            f.write(params.tobytes())
            f.write(values.tobytes())
    logger.debug("Wrote %d blocks to %s", len(blocks), path)


def iter_blocks(path) -> Iterator[Block]:
    with open(path, "rb") as f:
        while True:
            header = f.read(HEADER.size)
            if not header:
                return
            if len(header) != HEADER.size:
                raise SnapshotFormatError(f"{path}: truncated block header")
            magic, tag, nx, ny, lx, ly, n_params, t, n_values = HEADER.unpack(header)
            if magic != MAGIC:
                raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
            payload = f.read(8 * (n_params + n_values))
            if len(payload) != 8 * (n_params + n_values):
                raise SnapshotFormatError(f"{path}: truncated block payload")
            data = np.frombuffer(payload, dtype=FLOAT).astype(np.float64)
            yield Block(tag.rstrip(b"\x00").decode("ascii"), nx, ny, lx, ly, data[:n_params], t, data[n_params:])


def _check_grid(block: Block, expected: StructuredGrid, path):
    if expected is not None and block.grid != expected:
        raise FingerprintError(
            f"{path} was written on a {block.nx}x{block.ny} grid, expected {expected.nx}x{expected.ny}"
        )


def _field_block(tag: str, grid: StructuredGrid, values, params=(), t=0.0) -> Block:
    return Block(tag, grid.nx, grid.ny, grid.lx, grid.ly, np.asarray(params, dtype=np.float64), t, values)


def write_snapshot_set(path, S: SnapshotSet):
    write_blocks(
        path, [_field_block(S.kind.value, S.grid, s.values, p, t) for s, p, t in zip(S, S.params, S.times)]
    )


def read_snapshot_set(path, expected_grid: StructuredGrid = None, kind: FieldKind = None) -> SnapshotSet:
    result = None
    for block in iter_blocks(path):
        _check_grid(block, expected_grid, path)
        if result is None:
            result = SnapshotSet(block.grid, FieldKind(block.tag) if kind is None else kind)
        result.append(ScalarField(block.grid, block.values, result.kind), tuple(block.params), block.time)
    if result is None:
        if expected_grid is None or kind is None:
            raise SnapshotFormatError(f"{path} holds no snapshots")
        return SnapshotSet(expected_grid, kind)
    return result


def write_fields(path, fields: Sequence[ScalarField], tags: Sequence[str], times: Sequence[float], params=()):
    """Write loose fields (e.g. FOM/ROM/difference at chosen times)."""
    write_blocks(path, [_field_block(tag, f.grid, f.values, params, t) for f, tag, t in zip(fields, tags, times)])


def write_basis(path, basis: PodBasis):
    """First block holds the spectrum, then one block per mode (time = lambda_k)."""
    meta = [
        np.nan if basis.threshold is None else basis.threshold,
        np.nan if basis.fixed_count is None else basis.fixed_count,
    ]
    blocks = [_field_block(basis.kind.value, basis.grid, basis.eigenvalues, meta, 0.0)]
    for k in range(basis.n_modes):
        blocks.append(_field_block(basis.kind.value, basis.grid, basis.modes[k], (k + 1,), basis.eigenvalues[k]))
    write_blocks(path, blocks)


def read_basis(path, expected_grid: StructuredGrid = None) -> PodBasis:
    blocks = list(iter_blocks(path))
    if not blocks:
        raise SnapshotFormatError(f"{path} holds no basis")
    for block in blocks:
        _check_grid(block, expected_grid, path)
    spectrum, mode_blocks = blocks[0], blocks[1:]
    threshold, fixed_count = spectrum.params
    grid = spectrum.grid
    modes = np.vstack([b.values for b in mode_blocks]) if mode_blocks else np.empty((0, grid.n_cells))
    return PodBasis(
        grid,
        FieldKind(spectrum.tag),
        modes,
        spectrum.values.copy(),
        None if np.isnan(threshold) else float(threshold),
        None if np.isnan(fixed_count) else int(fixed_count),
    )


_OPERATOR_TAGS = ("M", "Mt", "A", "B", "H", "G")


def write_operators(path, ops: ReducedOperators, grid: StructuredGrid):
    path = Path(path)
    blocks = []
    for tag in _OPERATOR_TAGS:
        array = getattr(ops, tag)
        blocks.append(Block(tag, grid.nx, grid.ny, grid.lx, grid.ly, np.asarray(array.shape, float), 0.0, array))
    write_blocks(path, blocks)
    sidecar = {
        "format": MAGIC.rstrip(b"\x00").decode(),
        "version": FORMAT_VERSION,
        "object": "reduced_operators",
        "fingerprint": ops.fingerprint,
        "flux_mode": ops.flux_mode,
        "grid": grid.fingerprint(),
        "n_omega": ops.n_omega,
        "n_psi": ops.n_psi,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def read_operators(path, expected_grid: StructuredGrid = None, expected_fingerprint: str = None) -> ReducedOperators:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    if sidecar.get("version") != FORMAT_VERSION:
        raise FingerprintError(f"{path}: format version {sidecar.get('version')} is not {FORMAT_VERSION}")
    if expected_fingerprint is not None and sidecar["fingerprint"] != expected_fingerprint:
        raise FingerprintError(f"{path}: operators were projected from different bases")
    arrays = {}
    for block in iter_blocks(path):
        _check_grid(block, expected_grid, path)
        arrays[block.tag] = block.values.reshape(tuple(int(s) for s in block.params))
    missing = [tag for tag in _OPERATOR_TAGS if tag not in arrays]
    if missing:
        raise SnapshotFormatError(f"{path}: missing operator blocks {missing}")
    return ReducedOperators(
        arrays["M"], arrays["Mt"], arrays["A"], arrays["B"], arrays["H"], arrays["G"],
        sidecar["flux_mode"], sidecar["fingerprint"],
    )


def write_manifest(path, manifest: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def list_files(root) -> List[str]:
    root = Path(root)
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())
