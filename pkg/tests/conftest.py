import numpy as np
import pandas as pd
import pytest

from rangequant.features import QuantDesign
from rangequant.rangevol import LambdaTable, lambda_grid

# analytic m=1 moments: the 1-step range is |N(0,1)|
M1_LAM = np.array([np.sqrt(2 / np.pi), 1.0, 2 * np.sqrt(2 / np.pi), 3.0])


@pytest.fixture(scope="session")
def grid_m5():
    """Shared m=5 moment grid, large enough for tight estimator tests."""
    return lambda_grid(5, n_paths=300_000, seed=42)


@pytest.fixture(scope="session")
def table_m1_exact():
    """m=1 table with the closed-form moments instead of simulated ones."""
    return LambdaTable(m=1, lam=M1_LAM, tilde1=float(M1_LAM[0]),
                       tilde2=float(M1_LAM[1]), n_paths=0, seed=0)


def make_design(n, seed=0, k=2, hetero=0.0):
    """Location(-scale) regression design: y = 1 + 2 x1 [+ 0 x2] + (1 + hetero x1) eps."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(0.0, 2.0, n)
    cols = [np.ones(n), x1]
    names = ["const", "x1"]
    if k >= 2:
        cols.append(rng.standard_normal(n))
        names.append("x2")
    X = np.column_stack(cols)
    eps = rng.standard_normal(n)
    y = 1.0 + 2.0 * x1 + (1.0 + hetero * x1) * eps
    return QuantDesign(y=y, X=X, dates=np.arange(n), column_names=tuple(names))


@pytest.fixture
def design_500():
    return make_design(500, seed=3)


def bundled_panel_frame():
    import os

    path = os.path.join(os.path.dirname(__file__), "data", "synthetic_panel.csv")
    frame = pd.read_csv(path, parse_dates=["date"])
    frame["date"] = frame["date"].dt.date
    return frame
