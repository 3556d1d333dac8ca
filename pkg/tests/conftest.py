import numpy as np
import pytest
import scipy.sparse as sp

from msct_potts import experiments as ex
from msct_potts.projector import RayOperator


def sparse_op(dense):
    return RayOperator(sp.csr_matrix(np.asarray(dense, dtype=float)))


class Runs:
    """One simulated standard problem plus the results of all its configured runs."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.problem = ex.build_problem(cfg)
        self.reference = ex.reference_values(self.problem, cfg.solver.dirs)
        self.results = {}
        for spec in cfg.runs:
            u, trace = ex.run(self.problem, spec, cfg.solver)
            self.results[spec.name] = (u, trace)

    def mean_mssim(self, name):
        from msct_potts.metrics import evaluate
        return evaluate(self.results[name][0], self.problem.truth).mean()["mssim"]


@pytest.fixture(scope="session")
def radon15_runs():
    return Runs(ex.radon15_config())


@pytest.fixture(scope="session")
def radon20_runs():
    return Runs(ex.radon20_config())


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
