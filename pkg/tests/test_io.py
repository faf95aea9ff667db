import csv
import json
import math

import numpy as np
import pytest

import oracles
from bavart.io import FORMAT, manifest_hash, read_draws, read_meta, write_draws
from bavart.sampler import ModelConfig, estimate
from bavart.simulate import linear_var

FILES = ("data.csv", "forests.csv", "a.csv", "sv.csv", "h.csv", "horseshoe.csv", "loglik.csv")


@pytest.fixture(scope="module")
def draws():
    sim = linear_var(oracles.LINEAR_PHI, oracles.LINEAR_A0, oracles.LINEAR_SD, T=80, seed=5)
    return estimate(sim.data, ModelConfig(n_trees=8, sweeps=40, burn_in=20, thin=2, seed=9, min_leaf_size=3))


def test_round_trip_is_exact(draws, tmp_path):
    write_draws(draws, tmp_path / "d")
    back = read_draws(tmp_path / "d")
    for name in ("a", "c", "rho", "sigma2_h", "h", "tau2", "lam2", "loglik", "leaf_variance", "move_counts"):
        np.testing.assert_array_equal(getattr(back, name), getattr(draws, name), err_msg=name)
    assert back.config == draws.config
    assert back.names == draws.names
    np.testing.assert_array_equal(back.data.values, draws.data.values)
    X = np.random.default_rng(0).standard_normal((25, 3))
    np.testing.assert_array_equal(back.evaluate(X), draws.evaluate(X))
    np.testing.assert_array_equal(back.evaluate(draws.design().X), draws.fitted)
    np.testing.assert_array_equal(back.splitting_counts(), draws.splitting_counts())
    assert back.metadata()["config_hash"] == draws.metadata()["config_hash"] == manifest_hash(tmp_path / "d")


def test_rewrite_is_byte_identical(draws, tmp_path):
    write_draws(draws, tmp_path / "a")
    write_draws(read_draws(tmp_path / "a"), tmp_path / "b")
    for name in FILES + ("meta.json",):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_forest_file_layout(draws, tmp_path):
    write_draws(draws, tmp_path)
    with open(tmp_path / "forests.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["draw", "equation", "tree", "id", "parent", "covariate", "threshold", "leaf"]
    for r in rows:
        node, parent = int(r["id"]), int(r["parent"])
        assert parent == (-1 if node == 0 else (node - 1) // 2)
        leaf = int(r["covariate"]) == -1
        assert math.isnan(float(r["threshold"])) == leaf
        assert math.isnan(float(r["leaf"])) != leaf
    D, M, N = draws.forest.roots.shape
    assert sum(int(r["id"]) == 0 for r in rows) == D * M * N


def test_meta_contents(draws, tmp_path):
    write_draws(draws, tmp_path, extra={"note": "x"})
    meta = read_meta(tmp_path)
    assert meta["format"] == FORMAT
    assert meta["note"] == "x"
    assert meta["shape"] == {"draws": 10, "equations": 3, "trees": 8, "observations": 79}
    assert set(meta["files"]) == set(FILES)
    assert "a0_convention" in meta["decisions"]
    with open(tmp_path / "loglik.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert sum(int(r["retained"]) for r in rows) == 10


def test_checksum_mismatch_detected(draws, tmp_path):
    write_draws(draws, tmp_path)
    p = tmp_path / "sv.csv"
    p.write_text(p.read_text().replace("e", "E", 1))
    with pytest.raises(ValueError, match="checksum"):
        read_draws(tmp_path)
    read_draws(tmp_path, verify=False)


def test_missing_and_foreign_directories(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_draws(tmp_path)
    (tmp_path / "meta.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError, match="format"):
        read_draws(tmp_path)
