"""Regenerates the bundled sample PNGs (deterministic, no RNG).

Run from the package root:  python3 tools/make_samples.py
"""

from pathlib import Path

from PIL import Image, ImageDraw

OUT = Path(__file__).resolve().parent.parent / "src" / "model_backend" / "samples" / "data"


def leaf() -> Image.Image:
    """Green leaf on a dark bench with three small brown lesions."""
    img = Image.new("RGB", (256, 256), (38, 40, 42))
    draw = ImageDraw.Draw(img)
    # Leaf body: stacked ellipses with a mild vertical shade gradient.
    for i, (box, green) in enumerate(
        [
            ((28, 48, 228, 208), 136),
            ((40, 58, 216, 198), 144),
            ((56, 70, 200, 186), 152),
        ]
    ):
        draw.ellipse(box, fill=(60 - 2 * i, green, 64))
    # Midrib, still inside the green hue band.
    draw.line((48, 128, 210, 128), fill=(52, 124, 58), width=3)
    # Lesions: brown, well separated, each far below 12% of the image.
    draw.ellipse((84, 96, 114, 120), fill=(122, 74, 36))
    draw.ellipse((150, 140, 172, 158), fill=(126, 78, 40))
    draw.ellipse((118, 168, 134, 182), fill=(118, 70, 34))
    return img


def coins() -> Image.Image:
    """Bright discs on a flat gray table."""
    img = Image.new("RGB", (256, 192), (128, 128, 128))
    draw = ImageDraw.Draw(img)
    for cx, cy, r in [(60, 60, 26), (150, 50, 18), (200, 120, 22), (90, 140, 16)]:
        draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=(245, 245, 245))
        draw.ellipse((cx - r + 4, cy - r + 4, cx + r - 4, cy + r - 4), outline=(232, 232, 232), width=2)
    return img


def cells() -> Image.Image:
    """Blue stained blobs on a pale slide."""
    img = Image.new("RGB", (200, 200), (235, 233, 230))
    draw = ImageDraw.Draw(img)
    for box in [(22, 30, 58, 62), (120, 24, 160, 70), (60, 110, 96, 150), (140, 130, 186, 172), (30, 160, 56, 184)]:
        draw.ellipse(box, fill=(52, 61, 148))
    return img


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in (("leaf.png", leaf), ("coins.png", coins), ("cells.png", cells)):
        build().save(OUT / name, format="PNG", optimize=True)
        print(f"wrote {OUT / name}")


if __name__ == "__main__":
    main()
