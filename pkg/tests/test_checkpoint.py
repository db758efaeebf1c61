import numpy as np
import pytest

from hctn.engine.checkpoint import MAGIC, assign_arrays, load_checkpoint, save_checkpoint
from hctn.engine.tensor import Tensor
from hctn.exceptions import DimensionMismatchError, QoSDataError


def test_arrays_survive_a_save_and_load(tmp_path, rng):
    arrays = {
        'hcfm.w': rng.normal(size=(3, 4)),
        'bias': rng.normal(size=(4,)),
        'conv': rng.normal(size=(3, 2, 2)),
        'meta.epoch': np.array(7.0),
    }
    path = tmp_path / 'model.ckpt'
    save_checkpoint(path, arrays)
    assert path.read_bytes()[:4] == MAGIC
    loaded = load_checkpoint(path)
    assert list(loaded) == list(arrays)
    for name, value in arrays.items():
        np.testing.assert_array_equal(loaded[name], value)


def test_bad_magic(tmp_path):
    path = tmp_path / 'x.ckpt'
    path.write_bytes(b'NOPE' + b'\x00' * 8)
    with pytest.raises(QoSDataError, match="not an HCTN checkpoint"):
        load_checkpoint(path)


def test_trailing_bytes_are_rejected(tmp_path):
    path = tmp_path / 'x.ckpt'
    save_checkpoint(path, {'a': np.ones(2)})
    path.write_bytes(path.read_bytes() + b'\x00')
    with pytest.raises(QoSDataError, match="trailing"):
        load_checkpoint(path)


def test_assign_arrays_checks_names_and_shapes():
    target = {'w': Tensor(np.zeros((2, 2)))}
    assign_arrays(target, {'w': np.ones((2, 2))})
    np.testing.assert_array_equal(target['w'].data, np.ones((2, 2)))
    with pytest.raises(DimensionMismatchError):
        assign_arrays(target, {'w': np.ones((3, 2))})
    with pytest.raises(DimensionMismatchError, match="no entry 'buffer.w'"):
        assign_arrays(target, {}, prefix='buffer.')
