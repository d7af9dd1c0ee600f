"""Word-image ingestion: manifest -> slices -> binary frames -> CLI round trip.

Renders a few synthetic word images, writes the manifest format the loader
expects, and drives the actual command-line entry points end to end:
prep-icdar -> train -> predict.  Swap the synthetic manifest for one pointing
at real word images (one `image-path<TAB>transcript` line each) to run the
same pipeline on real data.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from deepcrf.cli import main
from deepcrf.data import load_icdar, normalize_character, segment_word_image

work = Path(tempfile.mkdtemp(prefix="wordpipe_"))
rng = np.random.default_rng(2)

# draw words as crude glyph stripes so each character is learnable
WORDS = ["cat", "to", "act", "cot", "tact", "coat"] * 8
GLYph_SEED = {ch: i for i, ch in enumerate(sorted(set("".join(WORDS))))}


def render(word: str) -> Image.Image:
    w, h = 24 * len(word), 48
    img = Image.new("L", (w, h), color=255)
    draw = ImageDraw.Draw(img)
    for i, ch in enumerate(word):
        x0 = 24 * i
        g = GLYph_SEED[ch]
        # a distinct bar pattern per glyph
        for k in range(g + 1):
            y = 4 + 6 * k
            draw.rectangle([x0 + 3, y, x0 + 20, y + 3], fill=0)
    return img


manifest_lines = []
for i, word in enumerate(WORDS):
    name = f"img{i:03d}.png"
    render(word).save(work / name)
    manifest_lines.append(f"{name}\t{word}")
manifest = work / "manifest.tsv"
manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
print(f"rendered {len(WORDS)} word images under {work}")

# the loader pieces, shown standalone
words = load_icdar(manifest)
slices = segment_word_image(words[0])
print(f"\n'{words[0].transcript}' image {words[0].pixels.shape} -> "
      f"{len(slices)} slices of widths {[s.shape[1] for s in slices]}")
frame = normalize_character(slices[0])
print(f"each slice becomes a {frame.shape[0]}-dim binary frame "
      f"(on-rate {frame.mean():.2f})")

# the same pipeline through the CLI
data = work / "words.txt"
model = work / "model.dcrf"
print("\n$ deepcrf prep-icdar ...")
assert main(["prep-icdar", "--manifest", str(manifest), "--out", str(data)]) == 0
print("\n$ deepcrf train ... (small encoder, brief run)")
assert main(["train", "--data", str(data), "--out", str(model),
             "--sweeps", "30", "--layer-sizes", "40,20",
             "--pretrain-epochs", "5", "--pretrain-batch-size", "20",
             "--seed", "3", "--log", str(work / "train.log")]) == 0
print("\n$ deepcrf predict ... (first lines)")


class Tee:
    def __init__(self):
        self.lines = []

    def write(self, text):
        self.lines.append(text)

    def flush(self):
        pass


tee = Tee()
stdout, sys.stdout = sys.stdout, tee
try:
    assert main(["predict", "--model", str(model), "--data", str(data)]) == 0
finally:
    sys.stdout = stdout
for line in "".join(tee.lines).splitlines()[:6]:
    print(f"  {line}")
print(f"\nartifacts left in {work} (canonical data, alphabet sidecar, model, log)")
