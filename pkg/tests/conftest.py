import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation or trajectory test")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def closed_loop_run():
    """Default closed-loop simulation and its wall-clock time."""
    from scpkit import hovercraft as hv

    t0 = time.perf_counter()
    trace = hv.simulate_closed_loop()
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def closed_loop(closed_loop_run):
    return closed_loop_run[0]


@pytest.fixture(scope="session")
def replay_report(closed_loop):
    """Contraction diagnostics along the measured states of the default simulation."""
    from scpkit import diagnostics as dg
    from scpkit import hovercraft as hv
    from scpkit.rtscp import ApproximateScp

    seq = closed_loop.xi_sequence()
    x0 = hv.initial_guess(hv.OcpLayout(hv.HORIZON, True), seq[0])
    return dg.contraction_trace(hv.build_ocp(), seq, x0, warmup=ApproximateScp(10))
