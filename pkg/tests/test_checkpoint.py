import numpy as np
import pytest

from breathcue import checkpoint as ck
from breathcue.errors import ConfigError, InputError
from breathcue.model import Model, ModelDims

SMALL = ModelDims(n_layers=2, dim=8, n_filters=4, kernel_size=9, heads=2, film_hidden=4, lstm_hidden=(4,))


def make(seed, epoch=1):
    return ck.Checkpoint.from_model(Model.init(SMALL, seed=seed), epoch, [1.0] * epoch)


def test_save_load_bytes_identical(tmp_path):
    a = make(0)
    p1, p2 = ck.save(a, tmp_path / "a.ckpt"), ck.save(make(0), tmp_path / "b.ckpt")
    assert p1.read_bytes() == p2.read_bytes()
    b = ck.load(p1)
    assert b.dims == a.dims and b.variant == a.variant and b.epoch == 1
    assert all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    assert b.to_model().n_parameters() == Model.init(SMALL).n_parameters()


def test_load_errors(tmp_path):
    with pytest.raises(InputError, match="cannot open"):
        ck.load(tmp_path / "none.ckpt")
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a zip")
    with pytest.raises(InputError):
        ck.load(junk)


def test_average_identity_and_pairs():
    a = make(1)
    same = ck.average_checkpoints([a, make(1), make(1)])
    assert all(np.array_equal(same.arrays[k], a.arrays[k]) for k in a.arrays)
    z = make(2)
    zero = ck.Checkpoint(z.dims, z.variant, {k: np.zeros_like(v) for k, v in z.arrays.items()})
    two = ck.Checkpoint(z.dims, z.variant, {k: np.full_like(v, 2.0) for k, v in z.arrays.items()})
    avg = ck.average_checkpoints([zero, two])
    assert all(np.all(v == 1.0) for k, v in avg.arrays.items() if k != "buffer/center_initialized")


def test_average_is_a_multiset_mean():
    a, b = make(3), make(4)
    aab = ck.average_checkpoints([a, a, b])
    ab = ck.average_checkpoints([a, b])
    k = "param/cls.head_w"
    assert np.allclose(aab.arrays[k], (2 * a.arrays[k] + b.arrays[k]) / 3)
    assert not np.allclose(aab.arrays[k], ab.arrays[k])
    assert ck.average_checkpoints([make(1, 1), make(1, 3)]).epoch == 3


def test_average_errors():
    a = make(5)
    with pytest.raises(InputError):
        ck.average_checkpoints([])
    other = ck.Checkpoint.from_model(Model.init(ModelDims(n_layers=2, dim=8, n_filters=4, kernel_size=9, heads=2,
                                                          film_hidden=4, lstm_hidden=(6,))))
    with pytest.raises(InputError, match="different model"):
        ck.average_checkpoints([a, other])
    bent = ck.Checkpoint(a.dims, a.variant, dict(a.arrays))
    bent.arrays["param/sls.u"] = np.zeros(3)
    with pytest.raises(InputError, match="param/sls.u"):
        ck.average_checkpoints([a, bent])
    short = ck.Checkpoint(a.dims, a.variant, {k: v for k, v in a.arrays.items() if k != "param/sls.b"})
    with pytest.raises(InputError, match="param/sls.b"):
        ck.average_checkpoints([a, short])


def test_check_dims():
    a = make(6)
    a.check_dims(SMALL)
    with pytest.raises(ConfigError, match="dim=8"):
        a.check_dims(ModelDims(n_layers=2, dim=16, n_filters=4, kernel_size=9, heads=2, film_hidden=4,
                               lstm_hidden=(4,)))
