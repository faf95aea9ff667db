"""On-disk layout of posterior draws.

A draws directory holds

* ``meta.json``: configuration, its hash, modelling decisions, series names
  and sha256 checksums of the other files;
* ``data.csv``: the estimation sample in fitted variable order;
* ``forests.csv``: one node per line
  (``draw,equation,tree,id,parent,covariate,threshold,leaf``) where ``id`` is
  the heap position (children of i are 2i+1 for ``x <= threshold`` and
  2i+2), ``parent`` is -1 at the root, ``covariate`` is -1 at leaves and
  ``threshold``/``leaf`` are ``nan`` where they do not apply;
* ``a.csv``, ``sv.csv``, ``h.csv``, ``horseshoe.csv``, ``loglik.csv``.

Floats are written with 17 significant digits so reloading is exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .data import TimeSeriesMatrix, load_csv, write_csv
from .sampler import CompactForest, ModelConfig, PosteriorDraws, config_hash

FORMAT = "bavart-draws/1"
FLOAT = "%.17g"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _savetxt(path, header: list[str], arr, fmt) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if arr.size:
            np.savetxt(fh, arr, fmt=fmt, delimiter=",")


def _loadtxt(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.size == 0:
        arr = np.empty((0, len(header)))
    return header, arr


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_draws(draws: PosteriorDraws, directory, extra: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    D, M, N = draws.forest.roots.shape
    n = draws.h.shape[2]
    write_csv(out / "data.csv", draws.data)

    f = draws.forest
    d, j, k = f.locate()
    parent = f.parents()
    node_fmt = ["%d"] * 6 + [FLOAT, FLOAT]
    nodes = np.empty((len(f.var), 8))
    nodes[:, 0], nodes[:, 1], nodes[:, 2] = d, j, k
    nodes[:, 3], nodes[:, 4], nodes[:, 5] = f.node_id, parent, np.where(f.var >= 0, f.var, -1)
    nodes[:, 6], nodes[:, 7] = f.threshold, f.value
    # group rows by (draw, equation, tree) in that order, nodes by heap id
    order = np.lexsort((f.node_id, k, j, d))
    _savetxt(out / "forests.csv", ["draw", "equation", "tree", "id", "parent", "covariate", "threshold", "leaf"],
             nodes[order], node_fmt)

    draw_idx = np.arange(D)
    rows, cols = np.tril_indices(M, -1)
    a_names = [f"a_{r}_{c}" for r, c in zip(rows, cols)]
    _savetxt(out / "a.csv", ["draw"] + a_names, np.column_stack([draw_idx, draws.a]),
             ["%d"] + [FLOAT] * len(a_names))

    dd, jj = np.meshgrid(draw_idx, np.arange(M), indexing="ij")
    sv = np.column_stack([dd.ravel(), jj.ravel(), draws.c.ravel(), draws.rho.ravel(), draws.sigma2_h.ravel()])
    _savetxt(out / "sv.csv", ["draw", "equation", "c", "rho", "sigma2_h"], sv, ["%d", "%d"] + [FLOAT] * 3)
    h = np.column_stack([dd.ravel(), jj.ravel(), draws.h.reshape(D * M, n)])
    _savetxt(out / "h.csv", ["draw", "equation"] + [f"h_{t}" for t in range(n)], h, ["%d", "%d"] + [FLOAT] * n)

    tau_names = [f"tau2_{r}_{c}" for r, c in zip(rows, cols)]
    _savetxt(out / "horseshoe.csv", ["draw", "lambda2"] + tau_names,
             np.column_stack([draw_idx, draws.lam2, draws.tau2]), ["%d"] + [FLOAT] * (1 + len(tau_names)))

    cfg = draws.config
    sweeps = np.arange(len(draws.loglik))
    retained = (sweeps >= cfg.burn_in) & ((sweeps - cfg.burn_in) % cfg.thin == 0)
    _savetxt(out / "loglik.csv", ["sweep", "retained", "loglik"],
             np.column_stack([sweeps, retained, draws.loglik]), ["%d", "%d", FLOAT])

    meta = draws.metadata()
    meta.update(extra or {})
    meta["format"] = FORMAT
    meta["shape"] = {"draws": D, "equations": M, "trees": N, "observations": n}
    meta["files"] = {name: sha256_file(out / name) for name in
                     ("data.csv", "forests.csv", "a.csv", "sv.csv", "h.csv", "horseshoe.csv", "loglik.csv")}
    write_json(out / "meta.json", meta)
    return out


def read_meta(directory) -> dict:
    path = Path(directory) / "meta.json"
    if not path.is_file():
        raise FileNotFoundError(f"{directory}: no draws manifest (meta.json)")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported format {meta.get('format')!r}")
    return meta


def read_draws(directory, verify: bool = True) -> PosteriorDraws:
    src = Path(directory)
    meta = read_meta(src)
    if verify:
        for name, digest in meta["files"].items():
            if sha256_file(src / name) != digest:
                raise ValueError(f"{src / name}: checksum mismatch")
    cfg = ModelConfig.from_dict(meta["config"])
    data = load_csv(src / "data.csv")
    shape = meta["shape"]
    D, M, N, n = shape["draws"], shape["equations"], shape["trees"], shape["observations"]

    _, nodes = _loadtxt(src / "forests.csv")
    ints = nodes[:, :6].astype(np.int64)
    forest = CompactForest.from_nodes(ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3], ints[:, 5],
                                      nodes[:, 6], nodes[:, 7], (D, M, N))
    _, a = _loadtxt(src / "a.csv")
    _, sv = _loadtxt(src / "sv.csv")
    _, h = _loadtxt(src / "h.csv")
    _, hs = _loadtxt(src / "horseshoe.csv")
    _, ll = _loadtxt(src / "loglik.csv")
    return PosteriorDraws(
        config=cfg,
        data=TimeSeriesMatrix(data.values, tuple(meta["names"]), data.frequency),
        forest=forest,
        a=a[:, 1:].reshape(D, M * (M - 1) // 2),
        c=sv[:, 2].reshape(D, M),
        rho=sv[:, 3].reshape(D, M),
        sigma2_h=sv[:, 4].reshape(D, M),
        h=h[:, 2:].reshape(D, M, n),
        tau2=hs[:, 2:].reshape(D, M * (M - 1) // 2),
        lam2=hs[:, 1].copy(),
        loglik=ll[:, 2].copy(),
        leaf_variance=np.asarray(meta["leaf_variance"], dtype=float),
        move_counts=np.asarray(meta["move_counts"], dtype=np.int64),
        decisions=dict(meta["decisions"]),
    )


def manifest_hash(directory) -> str:
    return read_meta(directory)["config_hash"]


__all__ = ["FORMAT", "config_hash", "manifest_hash", "read_draws", "read_meta", "sha256_file",
           "write_draws", "write_json"]
