from __future__ import annotations

import struct

import numpy as np
import pytest

from lsconf.centerfile import load_centers, meta_path, read_meta, save_centers
from lsconf.errors import ParseError
from lsconf.rootsys import CenterMatrix, Family, build_configuration, choose_centers, gen_rotation_2d


def test_root_family_round_trip(tmp_path):
    cfg = build_configuration("Anr", 9, projection="DropLast", seed=7)
    C = choose_centers(cfg, 90)
    p = tmp_path / "c.lsc"
    save_centers(p, C)
    raw = p.read_bytes()
    assert raw[:4] == b"LSC1"
    assert struct.unpack("<II", raw[4:12]) == (9, 90)
    assert len(raw) == 12 + 4 * 90 * 9
    back = load_centers(p)
    np.testing.assert_array_equal(back.centers, C.centers)
    assert back.config.family is Family.ANR and back.config.seed == 7
    meta = read_meta(meta_path(p))
    assert meta["projection"] == "DropLast" and meta["rank"] == "9"


def test_payload_deterministic(tmp_path):
    for name in ("a", "b"):
        save_centers(tmp_path / name, choose_centers(build_configuration("Anr", 5, seed=3), 20))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_radii_and_custom(tmp_path):
    p = tmp_path / "r.lsc"
    save_centers(p, gen_rotation_2d(6))
    back = load_centers(p)
    np.testing.assert_array_equal(back.radii, [1, 1, 1, 1, 0.5, 0.5])
    assert back.source == "Rotation2D"
    q = tmp_path / "c.lsc"
    save_centers(q, CenterMatrix(np.array([[1.0, 2.0], [3.0, -1.0]])))
    meta_path(q).unlink()
    assert load_centers(q).n_classes == 2


def test_bad_files(tmp_path):
    p = tmp_path / "bad.lsc"
    p.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ParseError):
        load_centers(p)
    save_centers(p, gen_rotation_2d(4))
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(ParseError):
        load_centers(p)


def test_tampered_permutation_detected(tmp_path):
    p = tmp_path / "c.lsc"
    save_centers(p, choose_centers(build_configuration("Anr", 4, seed=1), 10))
    text = meta_path(p).read_text().replace("seed = 1", "seed = 2")
    meta_path(p).write_text(text)
    with pytest.raises(ParseError):
        load_centers(p)
