"""Shared, session-scoped objects for the reference configuration."""

import warnings

import numpy as np
import pytest

from ratdil.domain import reference_domain


@pytest.fixture(scope="session")
def D():
    return reference_domain()


@pytest.fixture(scope="session")
def sel(D):
    from ratdil.testfn import select_offX

    return select_offX(D)


@pytest.fixture(scope="session")
def tp(D, sel):
    from ratdil.testfn import test_function

    return test_function(D, sel.p, sel.b)


@pytest.fixture(scope="session")
def tq(D, sel):
    from ratdil.testfn import test_function

    return test_function(D, sel.p.mirror(), sel.b)


@pytest.fixture(scope="session")
def crit(D, sel):
    from ratdil.fay import critical_points

    return critical_points(D, sel.b)


@pytest.fixture(scope="session")
def gram(D, sel):
    from ratdil.fay import fay_gram

    return fay_gram(D, sel.b)


@pytest.fixture(scope="session")
def kernel(D, sel, gram):
    from ratdil.fay import fay_theta

    return fay_theta(D, sel.b, gram)


@pytest.fixture(scope="session")
def F0(D, sel):
    from ratdil.matinner import psi, trivial_team

    return psi(D, trivial_team(D.n), sel.p, sel.b)


@pytest.fixture(scope="session")
def selected_t(D, sel, crit, kernel):
    from ratdil.matinner import select_t

    return select_t(D, sel.p, sel.b, crit.points, kernel)


@pytest.fixture(scope="session")
def Ft(selected_t):
    return selected_t[1]


@pytest.fixture(scope="session")
def disc(D, sel, Ft, tp, tq):
    from ratdil.cone import build_discretization, default_nodes

    S = default_nodes(D, Ft.zero_report.zeros, sel.b)
    return build_discretization(D, sel.b, S, 8, [tp, tq], ["psi_p", "psi_mp"])


@pytest.fixture(scope="session")
def solvers(disc, tp, F0, Ft):
    """One cached cone solver per function under test."""
    from ratdil.cone import ConeSolver

    return {"psi_p": ConeSolver(tp, disc), "psi_0": ConeSolver(F0, disc),
            "psi_t": ConeSolver(Ft, disc)}


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """One full default pipeline run, written to ``ratdil_out`` under a fresh directory."""
    import contextlib
    import io
    import os
    import time

    from ratdil.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    cwd = os.getcwd()
    os.chdir(root)
    try:
        t0 = time.perf_counter()
        with contextlib.redirect_stdout(io.StringIO()):
            code = main(["pipeline", "--out", "ratdil_out"])
        elapsed = time.perf_counter() - t0
    finally:
        os.chdir(cwd)
    return {"dir": root / "ratdil_out", "code": code, "elapsed": elapsed}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=RuntimeWarning, module="ratdil")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import RESULTS

    lines = config.stash.get(RESULTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
