import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

angle = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
intensity = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)
phase = st.floats(min_value=0.0, max_value=np.pi, allow_nan=False, exclude_max=True)


@pytest.fixture
def canonical():
    # (i_u, i_f, phi_f, i_r, phi_r) used across the decomposition tests
    return 0.4, 0.6, 0.1, 0.2, 1.0
