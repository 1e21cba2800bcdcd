import json

import numpy as np
import pytest

from extremal import io
from extremal.cli import format_list, main, run
from extremal.experiments import REGISTRY

GEO = """[experiment]
name = geodesic-profile
[surface]
kind = sphere
n_theta = 32
n_phi = 64
[bundle]
degree = 3
[path]
n_times = 7
u1_family = zonal
seed = 4
"""

MTO = """[experiment]
name = verify-mto
[surface]
kind = sphere
n_theta = 32
n_phi = 64
[fields]
count = 4
seed = 2
[mobius]
count = 2
"""


def _cfg(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "verify-fang" in out
    names = [line.split()[0] for line in out.splitlines() if line and not line.startswith(" ")]
    assert names == sorted(REGISTRY) and len(names) == len(REGISTRY)
    assert out.strip() == format_list()


def test_unknown_experiment_writes_nothing(tmp_path, capsys):
    cfg = _cfg(tmp_path, "[experiment]\nname = nope\n")
    assert run(cfg, tmp_path / "out") == 2
    assert not (tmp_path / "out").exists()
    assert "unknown experiment" in capsys.readouterr().err


def test_bad_values_are_reported_per_field(tmp_path, capsys):
    cfg = _cfg(tmp_path, MTO.replace("count = 4", "count = -3").replace("n_theta = 32", "n_theta = abc"))
    assert run(cfg, tmp_path / "out") == 2
    err = capsys.readouterr().err
    assert "[fields] count" in err and "[surface] n_theta" in err
    assert not (tmp_path / "out").exists()
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert run(_cfg(tmp_path, MTO), tmp_path / "o2", threads=0) == 2


def test_geodesic_profile_run(tmp_path):
    out = tmp_path / "geo"
    assert main(["run", str(_cfg(tmp_path, GEO)), "--output-dir", str(out)]) == 0
    rows = io.read_csv(out / "profile.csv")
    t = np.array([float(r["t"]) for r in rows])
    E = np.array([float(r["E"]) for r in rows])
    assert len(rows) == 7
    assert np.max(np.abs(E - (E[0] + t * (E[-1] - E[0])))) < 1e-4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == 0 and manifest["experiment"] == "geodesic-profile"
    assert manifest["config_text"] == GEO
    assert {"numpy", "scipy", "python", "extremal", "kernel_backend"} <= set(manifest["versions"])
    assert "profile.csv" in manifest["outputs"]
    assert manifest["resolved_config"]


def test_verify_mto_run_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, MTO)
    assert run(cfg, tmp_path / "a") == 0
    assert run(cfg, tmp_path / "b", threads=3) == 0
    a = (tmp_path / "a" / "margins.csv").read_text()
    assert a == (tmp_path / "b" / "margins.csv").read_text()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["min_margin"] >= 0


def test_seed_override(tmp_path):
    cfg = _cfg(tmp_path, MTO)
    assert run(cfg, tmp_path / "a") == 0
    assert run(cfg, tmp_path / "b", seed_override=99) == 0
    ma = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["seed_override"] == 99 and 99 in ma["seeds"]
    assert (tmp_path / "a" / "margins.csv").read_text() != (tmp_path / "b" / "margins.csv").read_text()


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_shipped_configs_validate(name):
    from pathlib import Path

    from extremal.experiments import Config, _DryRun

    path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.ini"
    cfg = Config.from_text(path.read_text())
    cfg.dry = True
    with pytest.raises(_DryRun):
        REGISTRY[name].run(cfg, 1)
