"""Shared test configuration.

Property-based tests run derandomized so the suite is reproducible; any
example hypothesis finds is therefore stable across reruns and machines.
"""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")
