"""Smoke test for the retouch_py extension module.

Build and install first:
    cd crates/py && maturin develop --release
Then run:
    python python/smoke_test.py
"""
import math
import os
import tempfile

import retouch_py as rp

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")


def crop(img, size):
    c = img.channels
    data = img.data()
    px = []
    for y in range(size):
        start = y * img.width * c
        px.extend(data[start:start + size * c])
    return rp.Image(size, size, c, px)


def main():
    full = rp.Image.load(os.path.join(ROOT, "data", "train", "astronaut.png"))
    assert (full.width, full.height, full.channels) == (256, 256, 3), full
    before = crop(full, 64)

    after = rp.filter(before, "gaussian")
    assert rp.psnr(after, rp.filter(before, "gaussian")) == math.inf
    assert 0.0 < rp.ssim(before, after) < 1.0

    bands, residual = rp.decompose_luma(before, levels=2)
    assert len(bands) == 3
    assert (residual.width, residual.height) == (32, 32)

    assert rp.parameter_count() == 183360
    model, losses = rp.train(before, after, k=4, levels=2, hidden=8, epochs=5, batch=512, seed=1)
    assert len(losses) == 3 and all(l >= 0 for l in losses), losses
    out = model.apply(before)
    assert out.channels == 3
    score = rp.psnr(out, after)
    assert score > rp.psnr(before, after) - 1.0, score

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.osr")
        model.save(path)
        again = rp.Model.load(path)
        assert again.param_count == model.param_count and again.seed == 1
        assert again.apply(before).data() == out.data()
        with open(path, "wb") as f:
            f.write(b"XXXX")
        try:
            rp.Model.load(path)
        except ValueError as e:
            assert "not a model file" in str(e)
        else:
            raise AssertionError("bad magic accepted")

    identity = rp.Model.identity(n_levels=2)
    assert rp.psnr(identity.apply(before), before) > 35.0

    print(f"ok: trained PSNR {score:.2f} dB, losses {[round(l, 5) for l in losses]}")


if __name__ == "__main__":
    main()
