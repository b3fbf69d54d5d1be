import numpy as np
import pytest

from romforge.architectures import ArchitectureSpec, build_networks
from romforge.checkpoint import read_model, write_model
from romforge.dataset import NormStats
from romforge.errors import FormatError
from romforge.graph import grid_graph


@pytest.mark.parametrize("kind", ["FCNN", "CNN", "GCNN"])
def test_round_trip(tmp_path, kind):
    graph = grid_graph(3, 4) if kind == "GCNN" else None
    nets = build_networks(ArchitectureSpec(kind, 4, 12, 2, graph=graph), seed=5)
    stats = NormStats(np.zeros(3), np.ones(3), np.array(-1.0), np.array(2.0))
    path = tmp_path / "m.mdl"
    size = write_model(path, nets, stats, {"epochs": 7})
    loaded = read_model(path)
    assert size == path.stat().st_size == loaded.size
    assert loaded.meta == {"epochs": "7"}
    for (na, a), (nb, b) in zip(nets.named_arrays(), loaded.nets.named_arrays()):
        assert na == nb and np.array_equal(a, b)
    for k in NormStats._fields:
        assert np.array_equal(getattr(stats, k), getattr(loaded.stats, k))
    x = np.random.default_rng(0).standard_normal((2, 12, 2))
    nets.eval()
    assert np.array_equal(nets.decode(nets.encode(x)).data, loaded.nets.decode(loaded.nets.encode(x)).data)
    if graph is not None:
        assert loaded.nets.spec.graph.edges == graph.edges


def test_bytes_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_model(a, build_networks(ArchitectureSpec("FCNN", 3, 20), seed=2))
    write_model(b, build_networks(ArchitectureSpec("FCNN", 3, 20), seed=2))
    assert a.read_bytes() == b.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "x.mdl"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(FormatError, match="magic"):
        read_model(path)


def test_truncated_blobs(tmp_path):
    path = tmp_path / "m.mdl"
    write_model(path, build_networks(ArchitectureSpec("FCNN", 3, 20)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_model(path)


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        read_model(tmp_path / "absent.mdl")
