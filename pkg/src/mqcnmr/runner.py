"""Pipeline orchestration: simulate -> spectra -> fit, with manifests.

Every stage writes its outputs atomically (temp file + rename) and records
them in a manifest with content hashes, so reruns can be diffed and no
orphan files appear.  Identical configurations produce bit-identical
signal and spectrum files regardless of worker count; only manifest
timings differ.  The environment variable ``MQCNMR_CACHE_DIR`` names an
optional directory for cached eigendecompositions.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import curves_to_csv, eigen_selectivity_report, frequency_cuts
from .config import RunConfig, config_hash
from .errors import ConfigError, NumericalValidationError
from .hamiltonian import EigenSystem, eigendecompose, secular_hamiltonian
from .opensystem import run_grid_open
from .sequence import (Mrev8Spec, PropagatorCache, run_grid, verify_reversion)
from .spectra import CoherenceSpectrum, SignalGrid, fft2_coherence, spectrum_to_csv

CACHE_ENV = "MQCNMR_CACHE_DIR"


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def _atomic_save_array(path: Path, arr: np.ndarray) -> None:
    import io
    buf = io.BytesIO()
    np.save(buf, arr)
    _atomic_write_bytes(path, buf.getvalue())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, stage: str, cfg_hash: str, elapsed: float,
                    files, cache_stats=None) -> dict:
    manifest = {
        "stage": stage,
        "config_hash": cfg_hash,
        "tool_version": __version__,
        "elapsed_s": elapsed,
        "cache_stats": cache_stats or {},
        "files": {name: _sha256(out_dir / name) for name in sorted(files)},
    }
    _atomic_write_text(out_dir / f"manifest_{stage}.json",
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def molecule_key(cfg: RunConfig) -> str:
    from .hamiltonian import coupling_table
    table = coupling_table(cfg.molecule)
    blob = table.tobytes() + repr(cfg.molecule.order_parameter).encode()
    return hashlib.sha256(blob).hexdigest()


def build_eigensystem(cfg: RunConfig) -> EigenSystem:
    """Eigendecompose the molecule's Hamiltonian, with optional disk cache."""
    reg = cfg.molecule.register()
    cache_dir = os.environ.get(CACHE_ENV)
    cache_file = None
    if cache_dir:
        cache_file = Path(cache_dir) / f"eig_{molecule_key(cfg)}.npz"
        if cache_file.exists():
            data = np.load(cache_file)
            return EigenSystem(zeta=data["zeta"], vectors=data["vectors"],
                               m=data["m"], s=data["s"],
                               order_parameter=float(data["order_parameter"]))
    h = secular_hamiltonian(cfg.molecule, reg)
    eig = eigendecompose(h, reg, cfg.molecule.order_parameter)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, zeta=eig.zeta, vectors=eig.vectors, m=eig.m, s=eig.s,
                 order_parameter=eig.order_parameter)
    return eig


def simulate(cfg: RunConfig, out_dir=None) -> dict:
    """Run the configured engine over the grid and write signal files."""
    t0 = time.monotonic()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    eig = build_eigensystem(cfg)
    reg = cfg.molecule.register()
    if cfg.engine == "closed":
        grid = run_grid(eig, reg, cfg.grid, block=cfg.block, acquisition=cfg.acquisition,
                        n_molecules=cfg.n_molecules, workers=cfg.workers)
    else:
        grid = run_grid_open(eig, reg, cfg.grid, cfg.decoherence,
                             acquisition=cfg.acquisition,
                             n_molecules=cfg.n_molecules, workers=cfg.workers)

    _atomic_save_array(out / "signals.npy", grid.data)
    _atomic_write_text(out / "signals_meta.json",
                       json.dumps(grid.metadata(), indent=2, sort_keys=True) + "\n")
    return _write_manifest(out, "simulate", config_hash(cfg.raw), time.monotonic() - t0,
                           ["signals.npy", "signals_meta.json"],
                           cache_stats=grid.cache_stats)


def load_signals(run_dir) -> SignalGrid:
    run_dir = Path(run_dir)
    sig_path = run_dir / "signals.npy"
    meta_path = run_dir / "signals_meta.json"
    if not sig_path.exists() or not meta_path.exists():
        raise ConfigError(f"{run_dir} does not contain signals.npy + signals_meta.json")
    meta = json.loads(meta_path.read_text())
    return SignalGrid(data=np.load(sig_path), dt=meta["dt"],
                      taus=np.asarray(meta["taus"]), t_p=meta["t_p"],
                      t_m=meta["t_m"], window=meta["window"])


def spectra_stage(run_dir, zero_pad: int = 1, band_hz: float | None = None) -> dict:
    """Transform stored signals into coherence spectra and write them as CSV."""
    t0 = time.monotonic()
    run_dir = Path(run_dir)
    grid = load_signals(run_dir)
    spec = fft2_coherence(grid, zero_pad=zero_pad)
    if band_hz is not None:
        spec = spec.band(band_hz)

    tmp = run_dir / "spectra.csv"
    fd, tmp_name = tempfile.mkstemp(dir=run_dir, prefix="spectra.csv.")
    os.close(fd)
    spectrum_to_csv(spec, tmp_name)
    os.replace(tmp_name, tmp)
    _atomic_write_text(run_dir / "spectra_meta.json",
                       json.dumps({**spec.meta, "mu": spec.mu.tolist(),
                                   "n_freq": len(spec.freqs_hz)},
                                  indent=2, sort_keys=True) + "\n")
    return _write_manifest(run_dir, "spectra", "", time.monotonic() - t0,
                           ["spectra.csv", "spectra_meta.json"])


def read_spectrum_csv(path) -> CoherenceSpectrum:
    """Rebuild a CoherenceSpectrum from the CSV written by spectra_stage."""
    taus, mus, freqs = [], [], []
    values = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["tau", "mu", "omega_hz"]:
            raise ConfigError(f"{path} is not a spectra CSV")
        for row in reader:
            tau, mu, f = float(row[0]), int(row[1]), float(row[2])
            if tau not in taus:
                taus.append(tau)
            if mu not in mus:
                mus.append(mu)
            if f not in freqs:
                freqs.append(f)
            values[(tau, mu, f)] = complex(float(row[3]), float(row[4]))
    data = np.zeros((len(taus), len(mus), len(freqs)), dtype=complex)
    for k, tau in enumerate(taus):
        for i, mu in enumerate(mus):
            for j, f in enumerate(freqs):
                data[k, i, j] = values[(tau, mu, f)]
    return CoherenceSpectrum(data=data, mu=np.asarray(mus), freqs_hz=np.asarray(freqs),
                             taus=np.asarray(taus))


def fit_stage(run_dir, mu: int, frequencies, model: str = "exponential",
              cut_mode: str = "nearest") -> dict:
    """Cut stored spectra at fixed frequencies, fit decays, write the report."""
    t0 = time.monotonic()
    run_dir = Path(run_dir)
    spec_path = run_dir / "spectra.csv"
    if not spec_path.exists():
        raise ConfigError(f"{spec_path} not found; run the spectra stage first")
    spec = read_spectrum_csv(spec_path)
    curves = frequency_cuts(spec, mu, frequencies, mode=cut_mode)
    report = eigen_selectivity_report(curves, model=model)
    _atomic_write_text(run_dir / "fit_report.json",
                       json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    _atomic_write_text(run_dir / "fit_report.txt", report.table())
    curves_to_csv(curves, run_dir / "decay_curves.csv")
    _write_manifest(run_dir, "fit", "", time.monotonic() - t0,
                    ["fit_report.json", "fit_report.txt", "decay_curves.csv"])
    return report.as_dict()


def verify_stage(cfg: RunConfig, max_residual: float = 1e-2) -> dict:
    """Compile the configured reversion block and gate on its residual."""
    if cfg.block is None:
        raise ConfigError("config has no reversion block to verify")
    eig = build_eigensystem(cfg)
    reg = cfg.molecule.register()
    cache = PropagatorCache(eig, reg)
    tau = next((t for t in cfg.grid.taus if t > 0), None)
    if tau is None:
        if isinstance(cfg.block, Mrev8Spec):
            tau = cfg.block.cycle_time
        else:
            raise ConfigError("tau schedule has no positive entry to verify")
    report = verify_reversion(cfg.block.events_for(tau), cache)
    result = {"tau": tau, "residual": report.residual,
              "effective_hamiltonian_norm": report.effective_norm,
              "duration": report.duration, "max_residual": max_residual}
    if report.residual > max_residual:
        raise NumericalValidationError(
            f"reversion residual {report.residual:.3e} exceeds the gate "
            f"{max_residual:.3e} (tau = {tau})")
    return result


def _set_dotted(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def sweep(base_doc: dict, base_dir=None, out_root=None) -> list:
    """Run a cartesian parameter sweep of simulate over dotted-path overrides.

    The config's ``sweep.parameters`` maps dotted paths (for example
    ``sequence.t_p``) to value lists; each combination runs in its own
    subdirectory, in deterministic order.
    """
    import copy
    from itertools import product

    from .config import config_from_dict

    sweep_doc = base_doc.get("sweep")
    if not sweep_doc or "parameters" not in sweep_doc:
        raise ConfigError("sweep needs a 'sweep.parameters' mapping in the config")
    params = sweep_doc["parameters"]
    names = sorted(params)
    value_lists = [params[n] for n in names]
    out_root = Path(out_root or base_doc.get("output", "sweep_out"))
    manifests = []
    for combo in product(*value_lists):
        doc = copy.deepcopy(base_doc)
        doc.pop("sweep", None)
        label_parts = []
        for name, value in zip(names, combo):
            _set_dotted(doc, name, value)
            label_parts.append(f"{name.split('.')[-1]}={value:g}" if isinstance(value, float)
                               else f"{name.split('.')[-1]}={value}")
        run_dir = out_root / "_".join(label_parts)
        cfg = config_from_dict(doc, base_dir=base_dir)
        manifests.append(simulate(cfg, out_dir=run_dir))
    return manifests
