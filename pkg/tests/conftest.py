import datetime as dt

import numpy as np
import pytest
from hypothesis import settings

from attestcast.ingest import PanelDataset
from attestcast.simulate import network_scale_config, simulate_panel, to_raw_tables, write_raw_tables

settings.register_profile("repo", deadline=None, max_examples=100)
settings.load_profile("repo")


def make_panel(y, x, start=dt.date(2020, 4, 2), units=None, frequency="daily", onsite=None):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    step = dt.timedelta(days=1 if frequency == "daily" else 7)
    calendar = tuple(start + step * t for t in range(y.shape[1]))
    units = units or tuple(f"H{i + 1}" for i in range(y.shape[0]))
    return PanelDataset(units, calendar, y, x, frequency, onsite)


@pytest.fixture(scope="session")
def network_sim():
    cfg = network_scale_config(seed=3)
    panel, truth = simulate_panel(cfg)
    return cfg, panel, truth


@pytest.fixture(scope="session")
def sim_triple(tmp_path_factory, network_sim):
    cfg, panel, _ = network_sim
    out = tmp_path_factory.mktemp("sim")
    paths = write_raw_tables(to_raw_tables(panel, cfg), out)
    return paths, panel
