"""Tests for persistence, the thread pool helper, logging setup and the declared dependencies."""

import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from rich.console import Console

from tdpt.core.polarization_tensors import FrequencyGrid, compute_fdpt, compute_tdpt
from tdpt.core.special_functions import MultiIndex
from tdpt.forward.forward_model import MsrDataset, SourceReceiverLayout, add_measurement_noise, synthetic_msr_from_fdpt
from tdpt.inverse.fdpt_recovery import reconstruct_fdpt
from tdpt.utils.logging_setup import setup_logging
from tdpt.utils.parallel import parallel_map, spawn_generators
from tdpt.utils.serialization import (
    decode_complex,
    encode_complex,
    entry_key,
    load_fdpt_tables,
    load_msr_dataset,
    load_tdpt_table,
    parse_entry_key,
    save_boundary,
    save_fdpt_tables,
    save_msr_dataset,
    save_tdpt_table,
)

pytestmark = pytest.mark.unit


def test_entry_keys():
    alpha, beta = MultiIndex(2, 1), MultiIndex(0, 1)
    assert entry_key(alpha, beta) == "2,1|0,1"
    assert parse_entry_key("2,1|0,1") == (alpha, beta)


def test_complex_encoding():
    values = np.array([[1 + 2j, -0.5j]])
    assert encode_complex(values) == [[[1.0, 2.0], [0.0, -0.5]]]
    np.testing.assert_array_equal(decode_complex(encode_complex(values)), values)


def test_msr_dataset_persistence(tmp_path):
    layout = SourceReceiverLayout.circle(4)
    rng = np.random.default_rng(0)
    matrices = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    clean = MsrDataset(layout=layout, frequencies=np.array([0.5, 1.0]), matrices=matrices)
    noisy = add_measurement_noise(clean, 10.0, seed=3, realization=2)
    path = save_msr_dataset(noisy, tmp_path / "run")
    restored = load_msr_dataset(path)
    np.testing.assert_array_equal(restored.matrices, noisy.matrices)
    np.testing.assert_array_equal(restored.sigma, noisy.sigma)
    assert (restored.seed, restored.realization, restored.noise_percent) == (3, 2, 10.0)
    assert restored.layout.geometry == "circle"
    frame = pd.read_csv(tmp_path / "run" / "msr_csv" / "msr_0001.csv")
    assert list(frame.columns) == ["receiver", "transmitter", "re", "im"]
    assert frame["re"].iloc[5] == pytest.approx(noisy.matrices[1, 1, 1].real, rel=1e-15)


def test_tdpt_table_persistence_keeps_projectors(disk, tmp_path):
    grid = FrequencyGrid.build(2.0, 4)
    layout = SourceReceiverLayout.circle(12)
    center = (0.2, 0.1)
    truth = [compute_fdpt(disk, 0.05, float(omega), 3.0, 1, max_order=1) for omega in grid.omegas]
    measured = reconstruct_fdpt(synthetic_msr_from_fdpt(layout, center, truth), center, 1)
    tdpt = compute_tdpt(measured, np.linspace(0.0, 3.0, 20), grid=grid)
    path = save_tdpt_table(tdpt, tmp_path / "tdpt", stem="tdpt_n1")
    restored = load_tdpt_table(path)
    np.testing.assert_allclose(restored.values, tdpt.values, rtol=1e-14, atol=1e-300)
    np.testing.assert_allclose(restored.t, tdpt.t, rtol=1e-15)
    assert restored.indices == tdpt.indices
    assert restored.grid == tdpt.grid
    assert len(restored.sources) == 3
    np.testing.assert_array_equal(restored.sources[2].row_projector, measured[2].row_projector)

    tables_path = save_fdpt_tables(truth, tmp_path / "truth.json")
    reloaded = load_fdpt_tables(tables_path)
    assert reloaded[0].contrast == 3.0
    np.testing.assert_array_equal(reloaded[3].values, truth[3].values)


def test_boundary_csv(ellipse, tmp_path):
    path = save_boundary(ellipse, tmp_path / "curve.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x1", "x2", "nu1", "nu2", "weight"]
    np.testing.assert_allclose(frame[["x1", "x2"]].to_numpy(), ellipse.points, rtol=1e-15, atol=1e-300)


def test_parallel_map_preserves_order():
    items = list(range(20))
    assert parallel_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert parallel_map(lambda x: -x, items, threads=1) == [-x for x in items]


def test_parallel_map_propagates_errors():
    def fail(x):
        if x == 3:
            raise ValueError("boom")
        return x

    with pytest.raises(ValueError):
        parallel_map(fail, list(range(6)), threads=3)


def test_spawned_generators_are_reproducible():
    first = [rng.standard_normal() for rng in spawn_generators(5, 3, 1)]
    again = [rng.standard_normal() for rng in spawn_generators(5, 3, 1)]
    other = [rng.standard_normal() for rng in spawn_generators(5, 3, 2)]
    assert first == again
    assert first != other
    assert len(set(first)) == 3


def test_setup_logging_writes_to_the_console():
    console = Console(record=True, width=200)
    logger = setup_logging("debug", console=console)
    assert logger.name == "TDPT"
    assert logging.getLogger().level == logging.DEBUG
    logging.getLogger("TDPT.Test").info("solver ready")
    assert "solver ready" in console.export_text()
    assert logging.getLogger("urllib3").level == logging.WARNING


def test_structured_logging_renders_key_values(capsys):
    setup_logging("INFO", structured=True)
    logging.getLogger("TDPT.Test").warning("resonance near ω=2")
    err = capsys.readouterr().err
    assert "event='resonance near ω=2'" in err
    assert "level='warning'" in err


def test_runtime_dependencies_are_imported():
    root = Path(__file__).resolve().parents[1]
    declared = tomllib.loads((root / "pyproject.toml").read_text())["project"]["dependencies"]
    names = {re.split(r"[<>=!~\[ ]", spec, maxsplit=1)[0].lower() for spec in declared}
    # python-dotenv backs the settings env_file; pytest tooling is only imported by the suite
    modules = {name.replace("-", "_") for name in names - {"python-dotenv", "pytest", "pytest-cov"}}
    source = "\n".join(path.read_text(encoding="utf-8") for path in (root / "tdpt").rglob("*.py"))
    for module in sorted(modules):
        assert re.search(rf"^\s*(import|from) {module}\b", source, re.MULTILINE), module
    assert "typing-extensions" not in names
