import numpy as np
import pytest

from densecount import model

TINY_ENC = (2, 2, 2, 4)
TINY_DEC = (2, 2, 2, 1)


@pytest.fixture
def tiny_drm():
    """Small float64 regressor for gradient and optimizer tests."""
    return model.init_drm(3, encoder_channels=TINY_ENC, decoder_channels=TINY_DEC, dtype=np.float64)


@pytest.fixture
def tiny_dcm():
    return model.init_dcm(5, in_channels=TINY_ENC[-1], conv_channels=(3, 3), fc_units=4, dtype=np.float64)


def params_equal(a, b) -> bool:
    pairs = list(zip(a.named_arrays(), b.named_arrays()))
    return all(na == nb and np.array_equal(pa, pb) for (na, pa), (nb, pb) in pairs)


def relative_error(numeric: float, analytic: float) -> float:
    denom = max(abs(numeric), abs(analytic))
    if denom < 1e-10:
        return 0.0
    return abs(numeric - analytic) / denom
