"""Size and contrast estimates from BEM-simulated multistatic data of a small disk."""

import numpy as np
import pytest

from tdpt.core.geometry import Inclusion, make_shape
from tdpt.core.polarization_tensors import FrequencyGrid
from tdpt.errors import EstimationError
from tdpt.forward.forward_model import SourceReceiverLayout, add_measurement_noise, synthesize_msr
from tdpt.inverse.estimators import estimate_size_and_contrast
from tdpt.inverse.fdpt_recovery import reconstruct_fdpt, reconstruct_tdpt

pytestmark = [pytest.mark.slow, pytest.mark.integration]

CENTER = np.array([0.3, -0.1])
EPSILON, CONTRAST = 0.05, 3.0
VOLUME = EPSILON ** 2


@pytest.fixture(scope="module")
def disk_measurement():
    inclusion = Inclusion(base=make_shape("disk", nodes=128), center=CENTER, epsilon=EPSILON, contrast=CONTRAST)
    layout = SourceReceiverLayout.circle(70, 1.0)
    grid = FrequencyGrid.build(np.pi, 128)
    clean = synthesize_msr(layout, inclusion, grid.omegas, threads=4)
    return clean, grid, np.linspace(0.0, 5.0, 512)


def _tdpt(dataset, grid, t):
    cutoff = 1e-6 if dataset.noise_percent > 0 else 1e-12
    return reconstruct_tdpt(reconstruct_fdpt(dataset, CENTER, 1, cutoff=cutoff), t, grid=grid)


def test_monopole_size_is_not_used_without_a_prior(disk_measurement):
    clean, grid, t = disk_measurement
    with pytest.raises(EstimationError):
        estimate_size_and_contrast(_tdpt(clean, grid, t))


def test_noiseless_contrast_with_a_known_size(disk_measurement):
    clean, grid, t = disk_measurement
    estimate = estimate_size_and_contrast(_tdpt(clean, grid, t), prior_volume=VOLUME, size_source="prior")
    assert estimate.volume == VOLUME
    assert estimate.contrast == pytest.approx(CONTRAST, rel=0.10)


def test_noisy_contrast_over_twenty_seeds(disk_measurement):
    clean, grid, t = disk_measurement
    contrasts = []
    for seed in range(20):
        noisy = add_measurement_noise(clean, 20.0, seed)
        estimate = estimate_size_and_contrast(_tdpt(noisy, grid, t), prior_volume=VOLUME, size_source="prior")
        contrasts.append(estimate.contrast)
    np.testing.assert_allclose(contrasts, CONTRAST, rtol=0.25)
