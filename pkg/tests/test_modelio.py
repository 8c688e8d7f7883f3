import numpy as np
import pytest

from curatelink.model import BASELINE, PROPOSED, ModelConfig, init_params
from curatelink.modelio import BadMagicError, TruncatedModelError, ModelFileError, dumps, load_model, loads, save_model


@pytest.mark.parametrize("variant,ki,kc", [(PROPOSED, 0, 0), (PROPOSED, 0, 3), (PROPOSED, 2, 3), (BASELINE, 2, 3)])
def test_round_trip_bit_identical(tmp_path, rng, variant, ki, kc):
    cfg = ModelConfig(variant, 4, 3, ki, kc, margin=0.5, reg_weight=1e-3, reg_latent=2e-4)
    p = init_params(cfg, 6, 5, seed=1)
    p.b_C = rng.normal(size=5)
    save_model(p, tmp_path / "m.bin")
    q = load_model(tmp_path / "m.bin")
    assert q.config == cfg
    # stored as float32: values round once, then survive further round trips exactly
    for name in p.block_order():
        np.testing.assert_array_equal(getattr(q, name), getattr(p, name).astype(np.float32))
    assert dumps(q) == (tmp_path / "m.bin").read_bytes()
    assert loads(dumps(q)) == q


def test_bad_magic():
    with pytest.raises(BadMagicError):
        loads(b"NOPE1" + b"\0" * 40)


def test_truncated():
    data = dumps(init_params(ModelConfig(PROPOSED, 3, 2, 0, 2), 4, 5, seed=0))
    for cut in (6, 12, len(data) - 1):
        with pytest.raises(TruncatedModelError):
            loads(data[:cut])


def test_trailing_bytes():
    data = dumps(init_params(ModelConfig(PROPOSED, 3, 2, 0, 2), 4, 5, seed=0))
    with pytest.raises(ModelFileError):
        loads(data + b"\0")
