import math

import numpy as np
import pytest

from pilotwave import (
    AnalyticTimeline,
    harmonic_params,
    line_domain,
    make_harmonic_eigenstate,
    make_plane_wave_ring,
    ring_domain,
)


@pytest.fixture(scope="session")
def ho_setup():
    """Harmonic-oscillator line grid with x=0 on the grid."""
    dom = line_domain(-6.0, 6.0, 513)
    params = harmonic_params(1.0, dom, alpha=1.0)
    return dom, params


def ground_state_timeline(dom, params, dt):
    """Stationary ground-state timeline (density static, drift b = -x)."""
    return AnalyticTimeline(
        lambda t: make_harmonic_eigenstate(0, 1.0, params, dom, t=t), 0.0, dt
    )


def plane_wave_timeline(k_index, dom, dt):
    return AnalyticTimeline(lambda t: make_plane_wave_ring(k_index, dom, t=t), 0.0, dt)


@pytest.fixture(scope="session")
def unit_ring():
    return ring_domain(0.0, 2.0 * math.pi, 512)
