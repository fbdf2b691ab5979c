import pytest

from src.config_loader import ConfigLoader
from src.coupling import TreeCoupling, inverse_transform
from src.csv_exporter import CSVExporter
from src.settings import RwoggSettings


class AntitheticTreeCoupling(TreeCoupling):
    """Control negativo: en el caso (ii) X usa 1-u e Y usa u, así que el orden se rompe."""

    def case_internal(self, u, pX, pY):
        return inverse_transform(1.0 - u, pX, self.hold), inverse_transform(u, pY, self.hold)


@pytest.fixture
def results_dir(tmp_path):
    return tmp_path / "results"


@pytest.fixture
def exporter(results_dir):
    return CSVExporter(results_dir)


@pytest.fixture
def config(results_dir):
    base, _ = ConfigLoader(RwoggSettings())({})
    base["output"]["directory"] = str(results_dir)
    return base


@pytest.fixture
def antithetic_tree_coupling():
    return AntitheticTreeCoupling(k=2, lam=1.0)
