import json

import numpy as np
import pytest

from mortar_sdg.cli import main, rates_table
from mortar_sdg.config import RunConfig, dump_config, dumps_config, load_config
from mortar_sdg.errors import ConfigError
from mortar_sdg.io import read_mesh_json, write_coarse_vtk, write_fine_vtk, write_mesh_json, write_vtk
from mortar_sdg.fine_mesh import build_fine_mesh
from mortar_sdg.mesh import build_initial_mesh, refine_red_green, uniform_partition


def test_config_round_trip(tmp_path):
    cfg = RunConfig(problem="example2", k=2, theta=0.3, grid=[1, 2, 3, 4], estimator="eta1")
    p = tmp_path / "c.json"
    dump_config(cfg, p)
    back = load_config(p)
    assert back == cfg
    assert dumps_config(back) == dumps_config(cfg)


@pytest.mark.parametrize(
    "data, key",
    [
        ({"theta": 1.5}, "theta"),
        ({"theta": "half"}, "theta"),
        ({"k": 0}, "k"),
        ({"grid": [2, 0]}, "grid[1]"),
        ({"grid": []}, "grid"),
        ({"colour": "red"}, "colour"),
        ({"problem": "example4"}, "problem"),
        ({"max_dofs": True}, "max_dofs"),
        ({"mortar_rule": "random"}, "mortar_rule"),
    ],
)
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError) as e:
        RunConfig.from_dict(data)
    assert e.value.key_path == key


def test_config_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{theta: }")
    with pytest.raises(ConfigError):
        load_config(p)


def test_overrides_win():
    cfg = RunConfig().with_overrides(theta=0.7, k=None)
    assert cfg.theta == 0.7 and cfg.k == 1


def parse_vtk(path):
    lines = path.read_text().splitlines()
    i = next(n for n, l in enumerate(lines) if l.startswith("POINTS"))
    npts = int(lines[i].split()[1])
    j = next(n for n, l in enumerate(lines) if l.startswith("CELLS"))
    ncell = int(lines[j].split()[1])
    cells = [list(map(int, l.split())) for l in lines[j + 1 : j + 1 + ncell]]
    types = lines[j + 2 + ncell : j + 2 + 2 * ncell]
    arrays = {}
    for n, l in enumerate(lines):
        if l.startswith("SCALARS"):
            arrays[l.split()[1]] = [float(v) for v in lines[n + 2 : n + 2 + ncell]]
    return npts, cells, types, arrays


def test_vtk_writer(tmp_path):
    p = tmp_path / "t.vtk"
    write_vtk(p, [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], {"a": np.array([1]), "b": np.array([0.5])})
    npts, cells, types, arrays = parse_vtk(p)
    assert npts == 3 and cells == [[3, 0, 1, 2]] and types == ["5"]
    assert arrays == {"a": [1.0], "b": [0.5]}
    with pytest.raises(ValueError):
        write_vtk(p, [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], {"a": np.zeros(2)})


def test_fine_and_coarse_vtk(tmp_path):
    coarse = refine_red_green(build_initial_mesh(uniform_partition(0, 0, 1, 1, 2, 2), grid=2), [3])
    fine = build_fine_mesh(coarse)
    write_fine_vtk(tmp_path / "f.vtk", fine, np.arange(fine.n_triangles, dtype=float))
    _, cells, _, arrays = parse_vtk(tmp_path / "f.vtk")
    assert len(cells) == fine.n_triangles
    assert set(arrays) == {"subdomain", "coarse_parent", "estimator"}
    assert arrays["coarse_parent"] == fine.parent.tolist()
    write_coarse_vtk(tmp_path / "c.vtk", coarse)
    _, cells, _, arrays = parse_vtk(tmp_path / "c.vtk")
    assert len(cells) == coarse.n_triangles


def test_mesh_json_round_trip(tmp_path):
    part = uniform_partition(0, 0, 1, 1, 2, 2)
    coarse = refine_red_green(build_initial_mesh(part, grid=2), [1, 2])
    p = tmp_path / "m.json"
    write_mesh_json(coarse, p)
    d = json.loads(p.read_text())
    assert set(d) == {"vertices", "triangles", "subdomain"}
    back = read_mesh_json(p, part)
    np.testing.assert_allclose(back.triangle_points(), coarse.triangle_points())


def test_cli_solve_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--problem", "example1", "--out", str(a)]) == 0
    assert main(["solve", "--problem", "example1", "--out", str(b), "--dump-system"]) == 0
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    for name in ("fields.vtk", "estimators.csv", "mesh.json"):
        assert (a / name).exists()
    assert (b / "system.mtx").exists() and (b / "rhs.txt").exists()


def test_cli_adapt_and_rates(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["adapt", "--problem", "example2", "--theta", "0.5", "--estimator", "eta2",
               "--max-levels", "3", "--out", str(out), "--vtk-every-level"])
    assert rc == 0
    for name in ("history.csv", "final.vtk", "final_coarse.vtk", "mesh.json", "level_000.vtk"):
        assert (out / name).exists()
    capsys.readouterr()
    assert main(["rates", str(out / "history.csv"), "--tail", "3"]) == 0
    text = capsys.readouterr().out
    assert "quantity,slope_vs_dofs,slope_vs_h" in text and "err_energy" in text


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["adapt", "--theta", "1.5", "--out", str(tmp_path)]) == 2
    assert "theta" in capsys.readouterr().err
    assert main(["uniform", "--grid", "2,0,2,2", "--out", str(tmp_path)]) == 2
    assert "grid[1]" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["solve", "--problem", "nope"])
    assert e.value.code == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"unknown": 1}))
    assert main(["solve", "--config", str(cfg)]) == 2
    assert main(["rates", str(tmp_path / "missing.csv")]) == 1


def test_cli_solver_failure_exit_code(tmp_path, monkeypatch, capsys):
    import mortar_sdg.adaptive as adaptive
    from mortar_sdg.errors import SolverError

    def boom(system):
        raise SolverError("forced", stage="factorization")

    monkeypatch.setattr(adaptive, "solve", boom)
    assert main(["adapt", "--problem", "example1", "--out", str(tmp_path)]) == 3
    assert (tmp_path / "history.csv").exists()


def test_rates_table_synthetic():
    n = np.array([1e2, 4e2, 1.6e3])
    data = {
        "level": np.arange(3.0), "n_dof": 6 * n, "n_coarse": n,
        "err_l2": n**-0.75, "err_energy": n**-0.25, "eta1": n**-0.75, "eta2": n**-0.25,
    }
    t = rates_table(data, 3)
    assert np.isclose(t["err_energy"][0], -0.25) and np.isclose(t["err_energy"][1], 0.5)
    assert np.isclose(t["err_l2"][1], 1.5)
