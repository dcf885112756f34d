import math

import numpy as np
import pytest
from loguru import logger

from ubic.core.config import Settings
from ubic.features.grid import Axis, Field
from ubic.features.select import ScoreInputs
from ubic.features.weaklib import SubdomainSpec, WeakLibrary, enumerate_terms


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    """No log files from tests; drop sinks bound to streams a test may have closed."""
    monkeypatch.setenv("UBIC_LOG_TO_FILE", "false")
    yield
    logger.remove()


@pytest.fixture
def settings():
    return Settings(log_to_file=False, threads=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_field():
    """``sin(x) cos(t)`` on a 64 x 48 grid."""
    x_axis = Axis(min=0.0, max=2 * np.pi, count=64)
    t_axis = Axis(min=0.0, max=3.0, count=48)
    x, t = np.meshgrid(x_axis.points(), t_axis.points(), indexing="ij")
    return Field(x_axis, t_axis, np.sin(x) * np.cos(t))


def library_from(phi, q0, terms=None):
    """Wrap a matrix and target as a WeakLibrary with the 8-term Burgers grammar."""
    phi = np.asarray(phi, dtype=np.float64)
    terms = enumerate_terms(2, 2)[: phi.shape[1]] if terms is None else terms
    spec = SubdomainSpec(n_domains=phi.shape[0], half_width_x=1.0, half_width_t=1.0)
    return WeakLibrary(phi, np.asarray(q0, dtype=np.float64), list(terms), False, spec)


@pytest.fixture
def planted_library(rng):
    """``q0 = 0.1 col4 - 1.0 col5`` plus tiny noise on a random 200 x 8 design."""
    phi = rng.standard_normal((200, 8))
    q0 = 0.1 * phi[:, 4] - 1.0 * phi[:, 5] + 1e-6 * rng.standard_normal(200)
    return library_from(phi, q0)


def inputs_from_bic(bic, sizes=None, u=None, n_samples=1000, supports=None):
    """ScoreInputs whose BIC column equals ``bic``."""
    bic = np.asarray(bic, dtype=np.float64)
    sizes = np.arange(1, bic.size + 1) if sizes is None else np.asarray(sizes)
    u = np.ones(bic.size) if u is None else np.asarray(u, dtype=np.float64)
    log_likelihood = (math.log(n_samples) * sizes - bic) / 2.0
    supports = supports if supports is not None else [list(range(s)) for s in sizes]
    return ScoreInputs(
        support_sizes=sizes,
        log_likelihood=log_likelihood,
        u=u,
        n_samples=n_samples,
        supports=supports,
        means=[np.ones(len(s)) for s in supports],
        sds=[np.full(len(s), 0.1) for s in supports],
        descriptors=[t.to_dict() for t in enumerate_terms(2, 2)],
    )
