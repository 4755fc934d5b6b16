import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from delaysys import make_rtds  # noqa: E402


def example_system():
    """Two states, one unit state delay, SISO."""
    return make_rtds(
        [(0.0, [[-2.0, -1.0], [-1.5, -0.5]]), (1.0, [[0.0, 0.5], [1.0, 0.0]])],
        [(0.0, [[1.0], [-1.0]])],
        [(0.0, [[2.0, 0.2]])],
        name="example",
    )


def stable_rtds(n, seed, n_u=1, n_y=1, n_delays=2):
    """Random delay system that is stable for every delay value.

    The logarithmic norm of A_0 plus the norms of the delayed A_i is kept
    at -0.5, which rules out characteristic roots in the closed right
    half-plane.
    """
    rng = np.random.default_rng(seed)
    delays = np.sort(rng.uniform(0.05, 1.0, n_delays))
    delayed = [rng.normal(size=(n, n)) for _ in range(n_delays)]
    delayed = [0.4 * m / np.linalg.norm(m, 2) for m in delayed]
    a0 = rng.normal(size=(n, n))
    mu = np.max(np.linalg.eigvalsh(0.5 * (a0 + a0.T)))
    a0 = a0 - (mu + 0.5 + sum(np.linalg.norm(m, 2) for m in delayed)) * np.eye(n)
    b = rng.normal(size=(n, n_u))
    c_terms = [(0.0, rng.normal(size=(n_y, n)))]
    if seed % 2:
        c_terms.append((float(rng.uniform(0.1, 0.5)), 0.5 * rng.normal(size=(n_y, n))))
    b_terms = [(0.0, b), (float(rng.uniform(0.1, 0.5)), 0.5 * rng.normal(size=(n, n_u)))]
    return make_rtds([(0.0, a0)] + list(zip(delays.tolist(), delayed)), b_terms, c_terms,
                     name=f"stable_n{n}_s{seed}")


def hurwitz_delay_free(n, seed, n_u=2, n_y=2):
    rng = np.random.default_rng(1000 + seed)
    a = rng.normal(size=(n, n)) / np.sqrt(n)
    shift = np.max(np.linalg.eigvals(a).real) + rng.uniform(0.2, 1.0)
    a = a - shift * np.eye(n)
    return make_rtds([(0.0, a)], [(0.0, rng.normal(size=(n, n_u)))],
                     [(0.0, rng.normal(size=(n_y, n)))], name=f"hurwitz_n{n}_s{seed}")


@pytest.fixture
def example():
    return example_system()


# --------------------------------------------------- acceptance summary

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    name = item.name
    if item.module.__name__.endswith("test_acceptance") and name.startswith("test_criterion_"):
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            number = int(name.split("_")[2])
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
            detail = dict(item.user_properties).get("detail", "")
            _CRITERIA[number] = (status, " ".join(name.split("_")[3:]), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number} {status}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
