"""CLI exit codes and the staged pipeline (simulate -> spectra -> fit)."""

import json
import os

import numpy as np
import pytest
import yaml

from mqcnmr.cli import main
from mqcnmr.config import config_from_dict, load_config, preset_path
from mqcnmr.runner import (build_eigensystem, load_signals, read_spectrum_csv,
                           simulate, sweep, verify_stage)


def tiny_doc(**overrides):
    doc = {
        "molecule": {
            "name": "pair",
            "order_parameter": 0.6,
            "couplings_hz": [[0, 1, 5000.0]],
        },
        "engine": "closed",
        "sequence": {
            "t_p": 4e-5,
            "block": {"type": "magic_sandwich"},
            "tau_schedule": [0.0, 9e-5, 1.8e-4],
            "grid": {"n_t": 8, "dt": 2e-6, "n_phi": 5},
            "acquisition": {"t_m": 3e-6, "window": 2e-6},
        },
        "workers": 1,
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def test_full_pipeline_exit_codes(tmp_path):
    cfg_path = write_config(tmp_path, tiny_doc())
    out = tmp_path / "run1"
    assert main(["simulate", str(cfg_path), "--output", str(out)]) == 0
    assert (out / "signals.npy").exists()
    assert main(["spectra", str(out)]) == 0
    assert (out / "spectra.csv").exists()
    assert main(["fit", str(out), "--mu", "2", "--frequency", "0"]) == 0
    assert (out / "fit_report.json").exists()
    report = json.loads((out / "fit_report.json").read_text())
    assert "rows" in report and "monotone_decreasing" in report


def test_configuration_errors_exit_2(tmp_path):
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("sequence: [unclosed")
    assert main(["simulate", str(bad)]) == 2
    assert main(["simulate", "--preset", "no_such_preset"]) == 2
    assert main(["spectra", str(tmp_path)]) == 2  # no signals there
    assert main(["fit", str(tmp_path), "--mu", "0", "--frequency", "0"]) == 2
    assert main(["simulate"]) == 2  # neither config nor preset
    # a config pointing at the placeholder molecule template
    doc = tiny_doc(molecule=str(preset_path("molecules/paa_like_8site_template.yaml")))
    assert main(["simulate", str(write_config(tmp_path, doc))]) == 2


def test_numerical_gate_exit_3(tmp_path):
    doc = tiny_doc()
    # a single pair is refocused exactly; three coupled spins leave a
    # genuine third-order residual for the gate to catch
    doc["molecule"] = {"order_parameter": 0.6,
                       "couplings_hz": [[0, 1, 5000.0], [1, 2, 4000.0],
                                        [0, 2, -2500.0]]}
    doc["sequence"]["block"] = {"type": "mrev8", "tau1": 2e-5}
    doc["sequence"]["tau_schedule"] = {"count": 2}
    cfg_path = write_config(tmp_path, doc)
    # MREV8 at 20 us spacing has a small but nonzero residual
    assert main(["verify-reversion", str(cfg_path)]) == 0
    assert main(["verify-reversion", str(cfg_path), "--max-residual", "1e-12"]) == 3


def test_verify_stage_no_block(tmp_path):
    from mqcnmr.errors import ConfigError
    doc = tiny_doc()
    del doc["sequence"]["block"]
    cfg = config_from_dict(doc)
    with pytest.raises(ConfigError):
        verify_stage(cfg)


def test_simulate_outputs_are_bit_identical_across_workers(tmp_path):
    outs = []
    for workers in (1, 3):
        doc = tiny_doc(workers=workers)
        out = tmp_path / f"w{workers}"
        simulate(config_from_dict(doc), out_dir=out)
        outs.append((out / "signals.npy").read_bytes())
    assert outs[0] == outs[1]


def test_manifest_inventory_and_hashes(tmp_path):
    import hashlib
    out = tmp_path / "run"
    simulate(config_from_dict(tiny_doc()), out_dir=out)
    manifest = json.loads((out / "manifest_simulate.json").read_text())
    assert manifest["stage"] == "simulate"
    assert manifest["config_hash"]
    listed = set(manifest["files"])
    assert listed == {"signals.npy", "signals_meta.json"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    # no orphan files beyond outputs and the manifest itself
    on_disk = {p.name for p in out.iterdir()}
    assert on_disk == listed | {"manifest_simulate.json"}


def test_signals_roundtrip_and_spectra_csv(tmp_path):
    out = tmp_path / "run"
    cfg = config_from_dict(tiny_doc())
    simulate(cfg, out_dir=out)
    grid = load_signals(out)
    assert grid.data.shape == (5, 8, 3)
    assert main(["spectra", str(out), "--band-hz", "100000"]) == 0
    spec = read_spectrum_csv(out / "spectra.csv")
    assert np.all(np.abs(spec.freqs_hz) <= 100000)
    assert spec.data.shape[0] == 3
    # CSV floats are exact round-trips
    meta = json.loads((out / "signals_meta.json").read_text())
    assert meta["n_phi"] == 5


def test_eigensystem_disk_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("MQCNMR_CACHE_DIR", str(tmp_path / "cache"))
    cfg = config_from_dict(tiny_doc())
    eig1 = build_eigensystem(cfg)
    cached = list((tmp_path / "cache").glob("eig_*.npz"))
    assert len(cached) == 1
    eig2 = build_eigensystem(cfg)
    np.testing.assert_array_equal(eig1.zeta, eig2.zeta)
    np.testing.assert_array_equal(eig1.vectors, eig2.vectors)


def test_sweep_runs_all_combinations(tmp_path):
    doc = tiny_doc()
    doc["sweep"] = {"parameters": {
        "sequence.t_p": [0.0, 4e-5],
        "n_molecules": [1, 2],
    }}
    manifests = sweep(doc, out_root=tmp_path / "sw")
    assert len(manifests) == 4
    subdirs = sorted(p.name for p in (tmp_path / "sw").iterdir())
    assert len(subdirs) == 4
    assert all("t_p=" in d and "n_molecules=" in d for d in subdirs)
    # doubling n_molecules doubles the stored signals at equal t_p
    by_name = {d: np.load(tmp_path / "sw" / d / "signals.npy") for d in subdirs}
    singles = {d: a for d, a in by_name.items() if "n_molecules=1" in d}
    doubles = {d: a for d, a in by_name.items() if "n_molecules=2" in d}
    for d1, a1 in singles.items():
        d2 = d1.replace("n_molecules=1", "n_molecules=2")
        np.testing.assert_allclose(doubles[d2], 2.0 * a1, atol=0)


def test_sweep_requires_parameters(tmp_path):
    from mqcnmr.errors import ConfigError
    with pytest.raises(ConfigError):
        sweep(tiny_doc(), out_root=tmp_path)


def test_sweep_cli_with_preset_config(tmp_path):
    doc = tiny_doc()
    doc["sweep"] = {"parameters": {"sequence.t_p": [0.0, 2e-5]}}
    cfg_path = write_config(tmp_path, doc)
    assert main(["sweep", str(cfg_path), "--output", str(tmp_path / "out")]) == 0
    assert len(list((tmp_path / "out").iterdir())) == 2


def test_cli_preset_simulate(tmp_path):
    assert main(["simulate", "--preset", "two_spin_ms",
                 "--output", str(tmp_path / "preset_run")]) == 0
    sig = np.load(tmp_path / "preset_run" / "signals.npy")
    assert sig.shape == (8, 64, 4)
