import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from ctad.theory import SyntheticSpec, generate


def write_dataset_csv(ds, path):
    header = ",".join([f"f{j}" for j in range(ds.features.shape[1])] + ["label"])
    np.savetxt(path, np.column_stack([ds.features, ds.labels]), delimiter=",", header=header, comments="", fmt="%.17g")
    return path


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    """Small separated three-blob dataset with far anomalies."""
    spec = SyntheticSpec(n_train=120, n_test_normal=60, n_test_anomaly=15, seed=3)
    return str(write_dataset_csv(generate(spec), tmp_path_factory.mktemp("data") / "blobs.csv"))


@pytest.fixture(scope="session")
def overlap_csv(tmp_path_factory):
    """Harder set: anomalies close to the clusters, so AUC is off the ceiling."""
    spec = SyntheticSpec(cluster_std=0.3, anomaly_offset=1.0, n_train=200, n_test_normal=100, n_test_anomaly=30, seed=4)
    return str(write_dataset_csv(generate(spec), tmp_path_factory.mktemp("data") / "overlap.csv"))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE
    except ImportError:
        return
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
