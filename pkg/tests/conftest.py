import numpy as np
import pytest

from polygcl.graphdata import Graph, SplitMasks, save_canonical


def clustered_graph(num_classes=3, per_class=30, num_features=12,
                    p_in=0.3, p_out=0.02, noise=0.6, seed=5) -> Graph:
    """Planted-partition toy graph with class-prototype features plus noise."""
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    protos = rng.normal(size=(num_classes, num_features))
    features = protos[labels] + noise * rng.normal(size=(n, num_features))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if labels[i] == labels[j] else p_out
            if rng.random() < p:
                edges.append((i, j))
    return Graph(n, np.array(edges, dtype=np.int64), features, labels, num_classes)


def toy_masks(g: Graph, train_per_class=8, val=10, seed=9) -> SplitMasks:
    rng = np.random.default_rng(seed)
    order = rng.permutation(g.num_nodes)
    train = []
    for c in range(g.num_classes):
        members = order[g.labels[order] == c]
        train.extend(members[:train_per_class])
    train = np.array(sorted(train))
    rest = np.array([i for i in order if i not in set(train.tolist())])
    return SplitMasks(train=train, val=rest[:val], test=rest[val:])


@pytest.fixture(scope="session")
def toy_graph() -> Graph:
    return clustered_graph()


@pytest.fixture(scope="session")
def toy_dataset_path(tmp_path_factory, toy_graph):
    """Canonical JSON file of the toy graph with embedded masks."""
    path = tmp_path_factory.mktemp("data") / "toy.json"
    save_canonical(toy_graph, path, toy_masks(toy_graph))
    return path
