import numpy as np
import pytest

from romforge.dataset import SnapshotSet, denormalize_snaps, fit_normalizer, normalize_snaps
from romforge.errors import ConfigError, ShapeError
from romforge.evaluation import (
    IdentityModel, MetricsRecord, evaluate, relative_errors, write_metrics_csv,
)
from romforge.pod import pod_fit


def test_relative_error_examples():
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert relative_errors(x, x) == (0.0, 0.0)
    assert relative_errors(x, np.zeros_like(x)) == (100.0, 100.0)
    rec = np.array([[0.0, 0.0], [0.0, 2.0]])
    assert relative_errors(x, rec)[1] == pytest.approx(100 / 3, abs=1e-12)


def test_relative_error_errors():
    with pytest.raises(ShapeError):
        relative_errors(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        relative_errors(np.zeros((2, 2)), np.ones((2, 2)))


def test_normalisation_round_trip_leaves_metrics(rng):
    train = SnapshotSet(rng.uniform(size=(20, 3)), rng.uniform(1, 2, (20, 6, 1)))
    stats = fit_normalizer(train)
    rec = train.snaps + 0.01 * rng.standard_normal(train.snaps.shape)
    back = denormalize_snaps(normalize_snaps(rec, stats), stats)
    a, b = relative_errors(train.snaps, rec), relative_errors(train.snaps, back)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_identity_stub(burgers_val):
    rec = evaluate(IdentityModel(), burgers_val, "compression")
    assert (rec.rl1, rec.rl2) == (0.0, 0.0) and rec.method == "identity"


def test_pod_full_rank_compression(burgers_train):
    sub = burgers_train.subset(slice(0, 40))
    basis = pod_fit(sub, 40)
    rec = evaluate(basis, sub, "compression")
    assert rec.rl2 <= 1e-8


def test_unknown_task(burgers_val):
    with pytest.raises(ConfigError):
        evaluate(IdentityModel(), burgers_val, "forecast")


def test_metrics_csv(tmp_path):
    rows = [MetricsRecord("POD", "compression", 3, 3.5, 8.2, 10.3, None),
            MetricsRecord("FCNN", "prediction", 10, 1.0, 2.0, 160.0, 0.08)]
    write_metrics_csv(rows, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "Method,n,Rℓ1%,Rℓ2%,Size (kB),Time per Epoch (s)"
    assert lines[1] == "POD,3,3.5,8.2,10.3,N/A"
    assert lines[2] == "FCNN,10,1,2,160,0.08"
