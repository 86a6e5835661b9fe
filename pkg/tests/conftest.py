import numpy as np
import pytest

import mvphase as mv


@pytest.fixture
def tiny():
    """4-dimensional hand-checkable instance: s = [2, 0, -1, 0], full view.

    Measurement rows are unit/two-hot so every stage can be verified by hand:
    y = [4, 1, 1, 0, 0].
    """
    signal = mv.GlobalSignal(n=4, support=np.array([0, 2]),
                             values=np.array([2.0, 0.0, -1.0, 0.0]))
    phi = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    mask = np.ones(4, dtype=np.int8)
    outliers = np.zeros(5)
    view = mv.make_device_view(1, signal, mask, phi, outliers)
    cfg = mv.ScenarioConfig(n=4, k=2, i_count=1, b_count=1, m_per_device=5,
                            q=0.5, theta=0.0, p_outlier=0.0, sigma_w=0.0, seed=1)
    return mv.Scenario(config=cfg, signal=signal, views=(view,))


@pytest.fixture
def tiny_view(tiny):
    return tiny.views[0]
