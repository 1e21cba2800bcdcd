import numpy as np
import pytest

from extremal import io
from extremal.envelopes import geodesic, path_profile
from extremal.functionals import sphere_setup
from extremal.solvers import random_band_limited, solve_mean_field
from extremal.surface import Density, Potential, build_sphere, build_torus


@pytest.fixture(scope="module")
def s():
    return build_sphere(16, 32)


def test_text_roundtrip(tmp_path, s):
    u = Potential(s, random_band_limited(s, 0, 1.0))
    io.write_text(tmp_path / "u.txt", u)
    back = io.read_text(tmp_path / "u.txt")
    assert back.surface.shape == s.shape and np.array_equal(back.values, u.values)
    t = build_torus(0.3 + 0.9j, 16)
    d = Density(t, np.exp(random_band_limited(t, 1, 0.5)))
    io.write_text(tmp_path / "d.txt", d)
    dd = io.read_text(tmp_path / "d.txt")
    assert isinstance(dd, Density) and dd.surface.tau == t.tau
    assert np.array_equal(dd.values, d.values)


def test_binary_roundtrip_is_bit_exact(tmp_path, s):
    u = Potential(s, random_band_limited(s, 2, 1.0) * np.pi)
    io.write_binary(tmp_path / "u.bin", u)
    raw = (tmp_path / "u.bin").read_bytes()
    assert raw[:8] == io.MAGIC
    assert len(raw) == io._HEADER.size + 8 * s.n_nodes
    back = io.read_binary(tmp_path / "u.bin")
    assert back.values.tobytes() == u.values.tobytes()
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(ValueError):
        io.read_binary(tmp_path / "bad.bin")


def test_text_rejects_missing_header(tmp_path):
    (tmp_path / "x.txt").write_text("0 1.0\n")
    with pytest.raises(ValueError):
        io.read_text(tmp_path / "x.txt")


def test_metric_path_directory(tmp_path):
    g = build_sphere(24, 48)
    b = sphere_setup(g, 3)
    p = geodesic(b, 0.0, 0.1 * g.xyz[2], K=5)
    io.write_metric_path(tmp_path / "p", p, path_profile(b, p))
    assert sorted(f.name for f in (tmp_path / "p").iterdir()) == \
        ["diagnostics.csv", "path.json"] + [f"u_{k:04d}.bin" for k in range(5)]
    q = io.read_metric_path(tmp_path / "p")
    assert np.array_equal(q.times, p.times) and q.method == p.method
    assert all(np.array_equal(a.values, c.values) for a, c in zip(p.potentials, q.potentials))
    assert "E" in q.diagnostics


def test_solve_report_roundtrip(tmp_path):
    t = build_torus(1j, 32)
    rep = solve_mean_field(t, (0, 0), 2 * np.pi)
    io.write_solve_report(tmp_path / "r.json", rep)
    back = io.read_solve_report(tmp_path / "r.json")
    assert back.residual == rep.residual and back.converged == rep.converged
    assert np.array_equal(back.solution.values, rep.solution.values)
    assert back.extra["eta"] == pytest.approx(2 * np.pi)
    io.write_continuation_csv(tmp_path / "c.csv", [rep])
    assert list(io.read_csv(tmp_path / "c.csv")[0]) == ["eta", "residual", "min_eig", "iterations"]


def test_csv_and_jsonl(tmp_path):
    rows = [{"a": 0.1, "b": 2, "c": True}, {"a": 1 / 3, "d": "x"}]
    io.write_csv(tmp_path / "t.csv", rows)
    back = io.read_csv(tmp_path / "t.csv")
    assert list(back[0]) == ["a", "b", "c", "d"]
    assert float(back[1]["a"]) == 1 / 3 and back[0]["d"] == ""
    recs = [{"x": np.float64(0.5), "v": np.arange(3), "z": 1 + 2j, "bad": float("nan")}]
    io.write_jsonl(tmp_path / "r.jsonl", recs)
    assert io.read_jsonl(tmp_path / "r.jsonl") == [{"bad": "nan", "v": [0, 1, 2], "x": 0.5, "z": [1.0, 2.0]}]
