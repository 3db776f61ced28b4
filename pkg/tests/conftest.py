import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def report(capsys):
    """Print one acceptance line past pytest's capture."""
    def _report(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    return _report


def ket(dim, n):
    v = np.zeros(dim, dtype=complex)
    v[n] = 1
    return v
