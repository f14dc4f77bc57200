import random
from pathlib import Path

import pytest

from homemesh.netmodel import DistanceTable, load_topology

REPO_ROOT = Path(__file__).resolve().parent.parent
TABLE1_PATH = REPO_ROOT / "fixtures" / "table1.json"


@pytest.fixture(scope="session")
def table1_topology():
    return load_topology(TABLE1_PATH)


@pytest.fixture(scope="session")
def table1(table1_topology):
    return table1_topology.table


def random_symmetric_table(rng: random.Random, n: int) -> DistanceTable:
    rows = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            rows[i][j] = rows[j][i] = rng.randint(1, 9)
    return DistanceTable.from_rows(rows)
