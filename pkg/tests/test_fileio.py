import numpy as np
import pytest

from lhsurf.errors import FormatError
from lhsurf.fileio import (
    read_field,
    read_mask,
    write_csv,
    write_field,
    write_mask,
)
from lhsurf.grid import ComplexField, HoleMask, ParamGrid, ScalarField, Vec3Field


@pytest.fixture
def grid():
    return ParamGrid(8, 1.25)


class TestBinaryFields:
    @pytest.mark.parametrize(
        "cls,fn",
        [
            (ScalarField, lambda u, v: u * v + 1.5),
            (ComplexField, lambda u, v: u + 2j * v),
            (Vec3Field, lambda u, v: (u, v, u - v)),
        ],
    )
    def test_round_trip(self, tmp_path, grid, cls, fn):
        f = cls.sample(grid, fn)
        path = tmp_path / "f.lhf"
        write_field(path, f)
        back = read_field(path)
        assert type(back) is cls
        assert back.grid == grid
        assert np.array_equal(back.values, f.values)

    def test_deterministic_bytes(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: np.sin(u) * v)
        p1, p2 = tmp_path / "a.lhf", tmp_path / "b.lhf"
        write_field(p1, f)
        write_field(p2, f)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: u)
        path = tmp_path / "f.lhf"
        write_field(path, f)
        raw = path.read_bytes()
        assert raw[:4] == b"LHF1"
        n = int.from_bytes(raw[4:12], "little")
        m = int.from_bytes(raw[12:20], "little")
        assert (n, m) == (grid.n, grid.m)
        assert raw[28] == 0  # scalar kind byte
        assert len(raw) == 29 + 8 * grid.node_count

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lhf"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(FormatError):
            read_field(path)

    def test_truncated_payload(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: u)
        path = tmp_path / "f.lhf"
        write_field(path, f)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_field(path)

    def test_nan_payload_rejected(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: u)
        path = tmp_path / "f.lhf"
        write_field(path, f)
        raw = bytearray(path.read_bytes())
        raw[29:37] = np.array([np.nan]).tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_field(path)

    def test_inconsistent_m_rejected(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: u)
        path = tmp_path / "f.lhf"
        write_field(path, f)
        raw = bytearray(path.read_bytes())
        raw[12:20] = int(grid.m + 1).to_bytes(8, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_field(path)


class TestCsv:
    def test_header_and_formatting(self, tmp_path, grid):
        f = ScalarField.sample(grid, lambda u, v: u + v / 3.0)
        path = tmp_path / "f.csv"
        write_csv(path, f)
        lines = path.read_text().splitlines()
        assert lines[0] == "i,j,u,v,value"
        assert len(lines) == 1 + grid.node_count
        # node order is row-major with i fastest
        assert lines[1].startswith("0,0,0,0,")
        assert lines[2].startswith("1,0,0.125,0,")
        # 17 significant digits survive a parse round trip
        val = float(lines[2].rsplit(",", 1)[1])
        assert val == f.values[0, 1]

    def test_vec3_columns(self, tmp_path, grid):
        f = Vec3Field.sample(grid, lambda u, v: (u, v, u * v))
        path = tmp_path / "f.csv"
        write_csv(path, f)
        assert path.read_text().splitlines()[0] == "i,j,u,v,x,y,z"

    def test_complex_columns(self, tmp_path, grid):
        f = ComplexField.sample(grid, lambda u, v: u + 1j * v)
        path = tmp_path / "f.csv"
        write_csv(path, f)
        assert path.read_text().splitlines()[0] == "i,j,u,v,re,im"

    def test_deterministic(self, tmp_path, grid):
        f = ComplexField.sample(grid, lambda u, v: u + 1j * v)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, f)
        write_csv(p2, f)
        assert p1.read_bytes() == p2.read_bytes()


class TestMask:
    def test_round_trip(self, tmp_path, grid):
        mask = HoleMask.from_rect(grid, 0.3, 0.7, 0.4, 0.8)
        path = tmp_path / "m.pgm"
        write_mask(path, mask)
        back = read_mask(path, grid)
        assert np.array_equal(back.occluded, mask.occluded)

    def test_pgm_format(self, tmp_path, grid):
        mask = HoleMask.from_rect(grid, 0.4, 0.6, 0.4, 0.6)
        path = tmp_path / "m.pgm"
        write_mask(path, mask)
        text = path.read_text().splitlines()
        assert text[0] == "P2"
        assert text[1] == f"{grid.n + 1} {grid.m + 1}"
        assert text[2] == "255"

    def test_bad_maxval(self, tmp_path, grid):
        path = tmp_path / "m.pgm"
        path.write_text("P2\n9 11\n100\n" + ("0 " * 99))
        with pytest.raises(FormatError):
            read_mask(path, grid)

    def test_bad_pixel_value(self, tmp_path, grid):
        vals = ["0"] * (9 * 11)
        vals[40] = "7"
        path = tmp_path / "m.pgm"
        path.write_text("P2\n9 11\n255\n" + " ".join(vals))
        with pytest.raises(FormatError):
            read_mask(path, grid)

    def test_size_mismatch(self, tmp_path, grid):
        path = tmp_path / "m.pgm"
        path.write_text("P2\n3 3\n255\n" + "0 " * 9)
        with pytest.raises(FormatError):
            read_mask(path, grid)

    def test_comments_tolerated(self, tmp_path, grid):
        mask = HoleMask.from_rect(grid, 0.4, 0.6, 0.4, 0.6)
        path = tmp_path / "m.pgm"
        write_mask(path, mask)
        lines = path.read_text().splitlines()
        lines.insert(1, "# a comment")
        path.write_text("\n".join(lines) + "\n")
        back = read_mask(path, grid)
        assert np.array_equal(back.occluded, mask.occluded)
