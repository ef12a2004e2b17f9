import numpy as np
import pytest
from conftest import random_flow

from mfgtorus.fieldio import FieldFormatError, read_csv, read_flow, write_csv, write_flow
from mfgtorus.grid import TorusGrid


@pytest.mark.parametrize("d,N", [(1, 16), (2, 8)])
def test_flow_round_trips(tmp_path, rng, d, N):
    g = TorusGrid(d, N, 3, 0.5)
    rho = random_flow(rng, g)
    v = rng.normal(size=g.vector_shape())
    write_flow(tmp_path / "rho.flow", rho, d, g.T, density=True)
    write_flow(tmp_path / "v.flow", v, d, g.T)
    hdr, back = read_flow(tmp_path / "rho.flow")
    assert (hdr.d, hdr.N, hdr.M, hdr.T, hdr.c) == (d, N, 3, 0.5, 1)
    assert np.array_equal(back, rho)
    assert np.array_equal(read_flow(tmp_path / "v.flow", vector=True)[1], v)
    write_csv(tmp_path / "rho.csv", rho, d)
    write_csv(tmp_path / "v.csv", v, d)
    assert np.array_equal(read_csv(tmp_path / "rho.csv", d), rho)
    assert np.array_equal(read_csv(tmp_path / "v.csv", d, vector=True), v)


def test_single_slice(tmp_path, rng):
    h = rng.normal(size=(8, 8))
    write_flow(tmp_path / "h.flow", h, 2, 1.0, is_slice=True)
    hdr, back = read_flow(tmp_path / "h.flow")
    assert hdr.M == 0 and np.array_equal(back[0], h)


def test_csv_layout(tmp_path):
    v = np.arange(2 * 2 * 4, dtype=float).reshape(2, 2, 2, 2)  # (M+1, c, N, N)
    write_csv(tmp_path / "v.csv", v, 2)
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "t_index,flat_node_index,component,value"
    assert lines[1:4] == ["0,0,0,0.0", "0,0,1,4.0", "0,1,0,1.0"]


def test_corrupted_files(tmp_path, rng):
    g = TorusGrid(1, 8, 2, 1.0)
    path = write_flow(tmp_path / "rho.flow", random_flow(rng, g), 1, 1.0, density=True)
    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.flow"
    bad.write_text("\n".join([lines[0], lines[1].replace(lines[1].split()[0], "5.0", 1)] + lines[2:]) + "\n")
    with pytest.raises(FieldFormatError, match="checksum"):
        read_flow(bad)
    bad.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(FieldFormatError):
        read_flow(bad)
    bad.write_text("1 8 2\n")
    with pytest.raises(FieldFormatError):
        read_flow(bad)
    bad.write_text("")
    with pytest.raises(FieldFormatError):
        read_flow(bad)
    with pytest.raises(FieldFormatError):
        write_flow(tmp_path / "x.flow", np.zeros((3, 3, 8)), 1, 1.0)
