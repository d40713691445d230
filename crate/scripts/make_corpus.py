"""Regenerate the checked-in 256x256 evaluation images from scikit-image samples.

All sources are public domain or CC0 (see data/README.md).
"""
import os

import numpy as np
from PIL import Image
from skimage import data

ROOT = os.path.join(os.path.dirname(__file__), "..", "data")
SIZE = 256

TRAIN = {"astronaut": data.astronaut}
CORPUS = {
    "camera": data.camera,
    "coffee": data.coffee,
    "chelsea": data.chelsea,
    "rocket": data.rocket,
    "coins": data.coins,
    "brick": data.brick,
    "hubble": data.hubble_deep_field,
}


def square_resize(arr: np.ndarray) -> Image.Image:
    img = Image.fromarray(arr)
    w, h = img.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    return img.resize((SIZE, SIZE), Image.LANCZOS)


def main() -> None:
    for sub, table in (("train", TRAIN), ("corpus", CORPUS)):
        out = os.path.join(ROOT, sub)
        os.makedirs(out, exist_ok=True)
        for name, fetch in table.items():
            square_resize(fetch()).save(os.path.join(out, f"{name}.png"))


if __name__ == "__main__":
    main()
