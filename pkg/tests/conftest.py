import numpy as np
import pytest

from rsm.gallery import build_gallery
from rsm.inference import PosteriorState


def random_gallery(rng, d, block_sizes):
    labels = np.repeat(np.arange(1, len(block_sizes) + 1), block_sizes)
    return build_gallery(rng.standard_normal((d, labels.size)), labels)


def random_state(rng, gallery, L):
    """Arbitrary but valid posterior state with moderate moments."""
    N, d, C = gallery.n_columns, gallery.d, gallery.n_subjects
    S = rng.standard_normal((N, N))
    return PosteriorState(
        mu_x=rng.standard_normal((N, L)),
        sigma_x=S @ S.T / N + 0.1 * np.eye(N),
        mu_e=0.3 * rng.standard_normal((d, L)),
        sigma_e_diag=rng.uniform(0.1, 2.0, (d, L)),
        inv_gamma_mean=rng.uniform(0.1, 10.0, C),
        inv_D_mean=rng.uniform(0.1, 10.0, (d, L)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
