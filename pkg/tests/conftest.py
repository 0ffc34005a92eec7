import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from triage.scenario import write_scenario
from triage.synth import ScenarioSpec, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_spec():
    return ScenarioSpec(
        rng_seed=11, n_frames=8, tokens_per_frame=12, planted_frames=[1, 6],
        planted_tokens=[[0, 3], [5]], cluster_redundancy=2, cluster_size=3,
    )


@pytest.fixture
def scenario_dir(tmp_path, small_spec):
    return write_scenario(generate(small_spec), tmp_path / "scenario")


_ACCEPTANCE: list[tuple[str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and rep.when == "call":
        _ACCEPTANCE.append((marker.args[0], "PASS" if rep.passed else "FAIL", rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, verdict, duration in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split(".")[0])):
        terminalreporter.write_line(f"{verdict}  {label}  ({duration:.2f}s)")
