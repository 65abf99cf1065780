import numpy as np
import pytest

from wirelessfl.learning import Dataset, Partition, SoftmaxObjective


@pytest.fixture
def small_problem():
    """Three devices, three classes, five features, a handful of samples."""
    rng = np.random.default_rng(7)
    n_per = 8
    features, labels, assign = [], [], []
    for c in range(3):
        x = rng.normal(loc=c, scale=1.0, size=(n_per, 4))
        x = np.hstack([x, np.ones((n_per, 1))])        # bias coordinate
        features.append(x)
        labels.extend([c] * n_per)
        assign.append(np.arange(c * n_per, (c + 1) * n_per))
    dataset = Dataset(np.vstack(features), np.array(labels), n_classes=3)
    partition = Partition(assign)
    return SoftmaxObjective(dataset, partition, mu=0.05)
