#!/usr/bin/env python3
"""Generate the checked-in camera fixtures (lossless PNG).

Run from the repo root: python scripts/gen_fixtures.py
"""

from pathlib import Path

from PIL import Image

from policyserve.fixtures import make_gradient, make_natural, make_noise

OUT = Path(__file__).resolve().parents[1] / "fixtures"


def main():
    OUT.mkdir(exist_ok=True)
    for name, img in [
        ("gradient_224.png", make_gradient(224)),
        ("natural_224.png", make_natural(224)),
        ("noise_224.png", make_noise(224, seed=0)),
    ]:
        Image.fromarray(img, "RGB").save(OUT / name, "PNG")
        print(f"wrote {OUT / name}")


if __name__ == "__main__":
    main()
