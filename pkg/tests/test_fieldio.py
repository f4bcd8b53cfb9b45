import numpy as np
import pytest

from ldglab.field import DirectorField, build_grid, init_field
from ldglab.fieldio import FormatError, MAGIC, export_field, export_vtk, import_field, read_header
from ldglab.material import ReducedParams


@pytest.fixture
def field():
    g = build_grid(17)
    return init_field(g, DirectorField("radial"), ReducedParams.from_t(200.0, Lbar=0.5), init="random", seed=1)


def test_round_trip_bit_exact(field, tmp_path):
    p = export_field(field, tmp_path / "f.bin")
    G = import_field(p)
    assert np.array_equal(G.values, field.values)
    assert G.params == field.params
    assert G.grid.n == field.grid.n and G.grid.R == field.grid.R
    hdr = read_header(p)
    assert hdr["n"] == 17 and hdr["Lbar"] == 0.5
    assert p.stat().st_size == 4 + 4 + 4 + 32 + 17**3 * 5 * 8


def test_exterior_zero_filled(field, tmp_path):
    vals = field.values.copy()
    vals[~field.grid.active] = 5.0
    G = import_field(export_field(field.with_values(vals), tmp_path / "f.bin"))
    assert np.all(G.values[~field.grid.active] == 0)


def test_truncated_and_bad_headers(field, tmp_path):
    p = export_field(field, tmp_path / "f.bin")
    raw = p.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        import_field(tmp_path / "short.bin")
    (tmp_path / "tiny.bin").write_bytes(raw[:10])
    with pytest.raises(FormatError):
        import_field(tmp_path / "tiny.bin")
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        import_field(tmp_path / "magic.bin")
    (tmp_path / "ver.bin").write_bytes(MAGIC + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(FormatError):
        import_field(tmp_path / "ver.bin")


def test_vtk_export(field, tmp_path):
    p = export_vtk(field, tmp_path / "f.vtk")
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert "DIMENSIONS 17 17 17" in lines
    assert sum(1 for l in lines if l.startswith("SCALARS")) == 3
    assert len(lines) == 8 + 3 * (2 + 17**3) + 1 + 17**3
