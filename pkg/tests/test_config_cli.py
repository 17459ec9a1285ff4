import json

import pytest
import yaml

from jumpchain.cli import main
from jumpchain.config import RunConfig, config_from_dict, default_yaml, load_config, resolved_p
from jumpchain.csvio import read_csv
from jumpchain.errors import ConfigError


def small_config(**sections):
    tree = {"schema_version": 1,
            "kernel": {"family": "cauchy"},
            "scheme": {"name": "dirichlet", "p": 1.0},
            "lattice": {"n": 4, "window_radius": 4.0},
            "simulation": {"T": 0.5, "n_paths": 200, "seed": 1},
            "output": {"plots": False}}
    for k, v in sections.items():
        tree.setdefault(k, {}).update(v)
    return tree


def write(tmp_path, tree, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return str(p)


def run(tmp_path, command, tree=None, *extra, out="out"):
    argv = [command, "--out", str(tmp_path / out)]
    if tree is not None:
        argv += ["--config", write(tmp_path, tree)]
    return main(argv + list(extra))


def test_defaults_round_trip():
    tree = yaml.safe_load(default_yaml())
    cfg = config_from_dict(tree)
    assert cfg == RunConfig().validate()
    assert yaml.safe_load(cfg.to_yaml()) == tree


def test_unknown_keys_are_rejected_at_every_level():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"schema_version": 1, "extra": 1})
    with pytest.raises(ConfigError, match="kernel: unknown key"):
        config_from_dict({"schema_version": 1, "kernel": {"famliy": "cauchy"}})


def test_schema_version_is_required_and_checked():
    with pytest.raises(ConfigError, match="missing"):
        config_from_dict({})
    with pytest.raises(ConfigError, match="expected 1"):
        config_from_dict({"schema_version": 2})


def test_type_errors_are_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "lattice": {"n": "four"}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "output": {"plots": 1}})


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("kernel: [unclosed")
    with pytest.raises(ConfigError):
        load_config(p)


def test_resolved_p_defaults():
    base = {"schema_version": 1}
    assert resolved_p(config_from_dict(base)) == pytest.approx(0.99)
    stable = config_from_dict({**base, "kernel": {"family": "stable", "alpha": 1.5}})
    assert resolved_p(stable) == pytest.approx(0.66)
    measure = config_from_dict({**base, "scheme": {"name": "semimartingale"}})
    assert resolved_p(measure) == 0.5
    sl = config_from_dict({**base, "kernel": {"family": "stable_like", "alpha": "1.5 + 0.1*cos(x)"}})
    assert resolved_p(sl) == pytest.approx(0.99 / 1.6, rel=1e-12)
    fixed = config_from_dict({**base, "kernel": {"family": "stable_like", "alpha": 0.8}})
    assert resolved_p(fixed) == pytest.approx(0.99)
    given = config_from_dict({**base, "scheme": {"p": 0.7}})
    assert resolved_p(given) == 0.7


def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("schema_version: 1") and "p: null" in out


@pytest.mark.parametrize("section,override", [
    ("scheme", {"p": 1.5}),
    ("simulation", {"n_paths": 0}),
    ("lattice", {"n": 0}),
])
def test_invalid_values_exit_2(tmp_path, section, override):
    assert run(tmp_path, "discretize", small_config(**{section: override})) == 2


def test_missing_config_file_exits_4(tmp_path):
    assert main(["discretize", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 4


def test_missing_command_exits_2():
    assert main([]) == 2


def test_check_without_matrix_exits_2(tmp_path):
    assert run(tmp_path, "check", small_config()) == 2


def test_semigroup_needs_exact_reference(tmp_path):
    tree = small_config(kernel={"family": "stable_like", "alpha": 1.5})
    assert run(tmp_path, "semigroup", tree) == 2


def test_discretize_outputs_and_manifest(tmp_path):
    assert run(tmp_path, "discretize", small_config(lattice={"n": [2, 4]}, output={"export_triplets": True})) == 0
    out = tmp_path / "out"
    for name in ("conductance_n2.npz", "conductance_n4.npz", "conductance_n4_triplets.csv",
                 "discretize_summary.csv", "config.yaml", "manifest.json"):
        assert (out / name).exists(), name
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "discretize"
    assert man["inputs"][0]["path"].endswith("cfg.yaml") and len(man["inputs"][0]["sha256"]) == 64
    listed = {o["path"] for o in man["outputs"]}
    assert "conductance_n4.npz" in listed and "config.yaml" in listed
    assert set(man["versions"]) >= {"python", "numpy", "scipy"}
    # the stored resolved config loads back
    assert load_config(out / "config.yaml").lattice.n == [2, 4]


def test_simulate_is_deterministic_and_seed_flag_overrides(tmp_path):
    tree = small_config()
    assert run(tmp_path, "simulate", tree, out="a") == 0
    assert run(tmp_path, "simulate", tree, "--threads", "3", out="b") == 0
    assert run(tmp_path, "simulate", tree, "--seed", "2", out="c") == 0
    a = (tmp_path / "a" / "ensemble_t0.5_marginal.csv").read_text()
    assert a == (tmp_path / "b" / "ensemble_t0.5_marginal.csv").read_text()
    assert a != (tmp_path / "c" / "ensemble_t0.5_marginal.csv").read_text()
    cols, rows = read_csv(tmp_path / "a" / "diagnostics.csv")
    assert "ks" in cols and len(rows) == 1
    assert (tmp_path / "a" / "characteristics_0_B.csv").exists()


def test_check_with_matrix(tmp_path):
    tree = small_config()
    assert run(tmp_path, "discretize", tree, out="d") == 0
    m = str(tmp_path / "d" / "conductance.npz")
    assert run(tmp_path, "check", tree, "--matrix", m, out="c") == 0
    cols, rows = read_csv(tmp_path / "c" / "conditions.csv")
    conds = {r[0] for r in rows}
    assert {"T1.D", "T3", "C2", "C3", "C4"} <= conds
    man = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert any(i["path"] == m for i in man["inputs"])


def test_semigroup_and_sweep_commands(tmp_path):
    tree = small_config(lattice={"n": [2, 4]})
    assert run(tmp_path, "semigroup", tree, out="s") == 0
    cols, rows = read_csv(tmp_path / "s" / "semigroup.csv")
    assert len(rows) == 2 and "leakage" in cols
    assert run(tmp_path, "sweep", tree, out="w") == 0
    cols, rows = read_csv(tmp_path / "w" / "sweep.csv")
    assert [int(r[cols.index("n")]) for r in rows] == [2, 4]


def test_plots_are_written_next_to_csvs(tmp_path):
    tree = small_config(lattice={"n": [2, 4]}, output={"plots": True})
    assert run(tmp_path, "sweep", tree, out="w") == 0
    assert (tmp_path / "w" / "sweep.png").stat().st_size > 0
    assert run(tmp_path, "discretize", tree, out="d") == 0
    assert (tmp_path / "d" / "stencil_n2.png").exists()
