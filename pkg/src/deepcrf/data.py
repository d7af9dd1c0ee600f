"""Dataset loading and preprocessing for handwritten word recognition.

Two sources are supported:

* the tab-separated OCR letter file (one character per line, words chained
  through the next-id column, 16x8 binary glyph images -> 128-dim frames);
* a manifest of word images (``relative-image-path<TAB>transcript`` per
  line) which are sliced into equal-width character cells, resized to 65x40
  with nearest-neighbor sampling, binarized at mid-range, and flattened to
  2600-dim frames.

Both end up in the same canonical text form: header ``d K N``, then per
sequence a ``word_id fold T`` line followed by T lines of
``label_index bit ...``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OCR_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
OCR_FRAME_DIM = 128
CHAR_ROWS, CHAR_COLS = 65, 40  # normalized character cell


class FormatError(ValueError):
    """Malformed input file; message carries the offending line number."""


@dataclass
class LabelAlphabet:
    """Bijection between label glyphs and indices [0, K)."""

    symbols: list[str]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be unique")
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @property
    def K(self) -> int:
        return len(self.symbols)

    def index(self, glyph: str) -> int:
        try:
            return self._index[glyph]
        except KeyError:
            raise FormatError(f"glyph {glyph!r} not in alphabet") from None

    def glyph(self, idx: int) -> str:
        return self.symbols[idx]

    @classmethod
    def from_transcripts(cls, transcripts) -> "LabelAlphabet":
        return cls(sorted({ch for t in transcripts for ch in t}))

    @classmethod
    def generic(cls, K: int) -> "LabelAlphabet":
        """Placeholder glyphs for data whose alphabet is not recorded:
        a..z when K fits, #<index> tokens otherwise."""
        if K <= 26:
            return cls(list(OCR_ALPHABET[:K]))
        return cls([f"#{i}" for i in range(K)])


@dataclass
class LabeledSequence:
    """One word: (T, d) frame matrix, per-frame labels, id and fold tag."""

    frames: np.ndarray
    labels: np.ndarray
    word_id: str
    fold: int = -1

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError("frames must be a non-empty (T, d) matrix")
        if self.labels.shape != (self.frames.shape[0],):
            raise ValueError("frames and labels must have equal length")

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class Dataset:
    sequences: list[LabeledSequence]
    alphabet: LabelAlphabet
    d: int

    def __post_init__(self):
        for seq in self.sequences:
            if seq.frames.shape[1] != self.d:
                raise ValueError(f"sequence {seq.word_id}: frame dim {seq.frames.shape[1]} != {self.d}")
            if len(seq.labels) and seq.labels.max() >= self.alphabet.K:
                raise ValueError(f"sequence {seq.word_id}: label out of alphabet range")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def n_frames(self) -> int:
        return sum(len(s) for s in self.sequences)


@dataclass
class WordImage:
    """Raw word image (grayscale grid) with its transcript."""

    pixels: np.ndarray
    transcript: str
    source: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise ValueError("pixels must be a non-empty 2-D grid")
        if not self.transcript:
            raise ValueError("transcript must be non-empty")


# ---------------------------------------------------------------------------
# OCR letter file


def load_ocr(path) -> Dataset:
    """Parse the tab-separated OCR letter file into word sequences.

    Line layout: id, glyph, next_id, word_id, position, fold, then 128 pixel
    bits.  Characters are chained into words via next_id (-1 ends a word);
    a chain that does not continue on the following line is a structural
    error.
    """
    alphabet = LabelAlphabet(list(OCR_ALPHABET))
    sequences: list[LabeledSequence] = []
    cur_frames: list[np.ndarray] = []
    cur_labels: list[int] = []
    cur_meta: tuple[str, int] | None = None  # (word_id, fold)
    expected_id: str | None = None
    seen_word_ids: dict[str, int] = {}

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 6 + OCR_FRAME_DIM:
                raise FormatError(
                    f"line {lineno}: expected {6 + OCR_FRAME_DIM} fields, got {len(fields)}"
                )
            char_id, glyph, next_id, word_id = fields[0], fields[1], fields[2], fields[3]
            fold_s = fields[5]
            try:
                fold = int(fold_s)
                bits = np.array([int(x) for x in fields[6:6 + OCR_FRAME_DIM]], dtype=np.float64)
            except ValueError as e:
                raise FormatError(f"line {lineno}: {e}") from None
            if not np.isin(bits, (0.0, 1.0)).all():
                raise FormatError(f"line {lineno}: pixel values must be 0 or 1")
            if glyph not in alphabet._index:
                raise FormatError(f"line {lineno}: unknown glyph {glyph!r}")

            if expected_id is not None and char_id != expected_id:
                raise FormatError(
                    f"line {lineno}: broken chain, expected character id {expected_id}, got {char_id}"
                )
            if cur_meta is not None and word_id != cur_meta[0].split("#")[0]:
                raise FormatError(
                    f"line {lineno}: word id changed mid-chain ({cur_meta[0]} -> {word_id})"
                )
            if cur_meta is None:
                n_seen = seen_word_ids.get(word_id, 0)
                seen_word_ids[word_id] = n_seen + 1
                uid = word_id if n_seen == 0 else f"{word_id}#{n_seen}"
                cur_meta = (uid, fold)
            cur_frames.append(bits)
            cur_labels.append(alphabet.index(glyph))

            if next_id == "-1":
                sequences.append(LabeledSequence(
                    frames=np.vstack(cur_frames), labels=np.array(cur_labels),
                    word_id=cur_meta[0], fold=cur_meta[1],
                ))
                cur_frames, cur_labels, cur_meta, expected_id = [], [], None, None
            else:
                expected_id = next_id

    if cur_meta is not None:
        raise FormatError("file ended inside a word chain (no terminating next id of -1)")
    if not sequences:
        raise FormatError("no sequences")
    return Dataset(sequences=sequences, alphabet=alphabet, d=OCR_FRAME_DIM)


# ---------------------------------------------------------------------------
# Word images (ICDAR-style manifest)


def load_icdar(manifest_path, skipped: list | None = None) -> list[WordImage]:
    """Read a ``relative-image-path<TAB>transcript`` manifest.

    Image paths are resolved against the manifest's directory; PNG/PGM (or
    anything Pillow reads) is converted to a grayscale grid.  Entries with an
    empty transcript are skipped with a warning (and recorded in ``skipped``
    when a list is supplied); a missing image file is an error naming the
    entry.
    """
    from pathlib import Path

    from PIL import Image

    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    words: list[WordImage] = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise FormatError(f"line {lineno}: expected 'path<TAB>transcript'")
            rel, transcript = line.split("\t", 1)
            if not transcript:
                log.warning("line %d: empty transcript for %s, skipping", lineno, rel)
                if skipped is not None:
                    skipped.append(rel)
                continue
            img_path = base / rel
            if not img_path.is_file():
                raise IOError(f"line {lineno}: image file not found: {rel}")
            with Image.open(img_path) as img:
                pixels = np.asarray(img.convert("L"), dtype=np.float64)
            words.append(WordImage(pixels=pixels, transcript=transcript, source=rel))
    return words


def segment_word_image(img: WordImage) -> list[np.ndarray]:
    """Split the image into len(transcript) vertical slices of near-equal
    width; the remainder pixels go to the leftmost slices and the slices tile
    the image exactly."""
    n = len(img.transcript)
    width = img.pixels.shape[1]
    if width < n:
        raise ValueError(f"image too narrow: width {width} < {n} characters")
    base, extra = divmod(width, n)
    slices = []
    x = 0
    for i in range(n):
        w = base + (1 if i < extra else 0)
        slices.append(img.pixels[:, x:x + w])
        x += w
    return slices


def normalize_character(grid) -> np.ndarray:
    """Binarize a character cell and resize it to 65x40, flattened row-major
    to a 2600-dim {0,1} vector.

    Binarization thresholds at the middle of the grid's dynamic range; a
    constant grid maps to all ones when nonzero, all zeros otherwise.  The
    resize uses nearest-neighbor sampling so no gray levels are introduced.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError("grid must be a non-empty 2-D array")
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        binary = (grid >= lo + 0.5 * (hi - lo)).astype(np.float64)
    else:
        binary = np.full_like(grid, 1.0 if lo > 0 else 0.0)
    rows = (np.arange(CHAR_ROWS) * grid.shape[0]) // CHAR_ROWS
    cols = (np.arange(CHAR_COLS) * grid.shape[1]) // CHAR_COLS
    return binary[np.ix_(rows, cols)].reshape(-1)


def words_to_dataset(words: list[WordImage]) -> Dataset:
    """Full image pipeline: equal split, per-character normalization, and a
    label alphabet derived from the transcripts."""
    if not words:
        raise FormatError("no sequences")
    alphabet = LabelAlphabet.from_transcripts(w.transcript for w in words)
    sequences = []
    for i, w in enumerate(words):
        frames = np.vstack([normalize_character(g) for g in segment_word_image(w)])
        labels = np.array([alphabet.index(ch) for ch in w.transcript])
        wid = w.source.replace("\t", "_").replace(" ", "_") if w.source else f"word{i:05d}"
        sequences.append(LabeledSequence(frames=frames, labels=labels, word_id=wid))
    return Dataset(sequences=sequences, alphabet=alphabet, d=CHAR_ROWS * CHAR_COLS)


# ---------------------------------------------------------------------------
# Cross-validation folds


def make_folds(ds: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train_indices, test_indices) partitions.

    When the sequences carry exactly k distinct fold tags (the OCR file ships
    with tags 0..9), the tags define the partition and the seed is ignored;
    otherwise the sequences are shuffled once with the seed and split into k
    near-equal test chunks (larger chunks first).
    """
    N = len(ds.sequences)
    if k < 2:
        raise ValueError("fold count must be >= 2")
    if k > N:
        raise ValueError(f"cannot make {k} folds from {N} sequences")
    tags = sorted({s.fold for s in ds.sequences})
    if len(tags) == k:
        test_sets = [np.array([i for i, s in enumerate(ds.sequences) if s.fold == tag],
                              dtype=np.int64)
                     for tag in tags]
    else:
        order = np.random.default_rng(seed).permutation(N)
        test_sets = np.array_split(order, k)
    all_indices = np.arange(N)
    folds = []
    for test in test_sets:
        mask = np.ones(N, dtype=bool)
        mask[test] = False
        folds.append((all_indices[mask], np.sort(np.asarray(test))))
    return folds


# ---------------------------------------------------------------------------
# Canonical text serialization


def dump_dataset(ds: Dataset) -> str:
    """Serialize to the canonical text form (see module docstring)."""
    out = [f"{ds.d} {ds.alphabet.K} {len(ds.sequences)}"]
    for seq in ds.sequences:
        out.append(f"{seq.word_id} {seq.fold} {len(seq)}")
        for t in range(len(seq)):
            bits = " ".join(str(int(b)) for b in seq.frames[t])
            out.append(f"{seq.labels[t]} {bits}")
    return "\n".join(out) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_dataset(ds))


def load_dataset(path, alphabet: LabelAlphabet | None = None) -> Dataset:
    """Parse the canonical text form.  The format does not record glyphs, so
    an alphabet can be supplied; otherwise a generic one is synthesized."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("no sequences")
    try:
        d, K, N = (int(x) for x in lines[0].split())
    except ValueError:
        raise FormatError("line 1: header must be 'd K N'") from None
    if alphabet is None:
        alphabet = LabelAlphabet.generic(K)
    if alphabet.K != K:
        raise FormatError(f"alphabet has {alphabet.K} glyphs, header says K={K}")
    sequences = []
    pos = 1
    for _ in range(N):
        if pos >= len(lines):
            raise FormatError(f"line {pos + 1}: expected sequence header, found end of file")
        parts = lines[pos].split()
        if len(parts) != 3:
            raise FormatError(f"line {pos + 1}: sequence header must be 'word_id fold T'")
        word_id, fold_s, T_s = parts
        try:
            fold, T = int(fold_s), int(T_s)
        except ValueError:
            raise FormatError(f"line {pos + 1}: fold and T must be integers") from None
        pos += 1
        frames = np.empty((T, d))
        labels = np.empty(T, dtype=np.int64)
        for t in range(T):
            if pos >= len(lines):
                raise FormatError(f"line {pos + 1}: truncated sequence {word_id}")
            row = lines[pos].split()
            if len(row) != 1 + d:
                raise FormatError(f"line {pos + 1}: expected label and {d} bits, got {len(row)} fields")
            try:
                labels[t] = int(row[0])
                frames[t] = [float(x) for x in row[1:]]
            except ValueError as e:
                raise FormatError(f"line {pos + 1}: {e}") from None
            if labels[t] < 0 or labels[t] >= K:
                raise FormatError(f"line {pos + 1}: label {labels[t]} out of range [0, {K})")
            pos += 1
        sequences.append(LabeledSequence(frames=frames, labels=labels, word_id=word_id, fold=fold))
    if pos != len(lines) and any(l.strip() for l in lines[pos:]):
        raise FormatError(f"line {pos + 1}: trailing content after {N} sequences")
    return Dataset(sequences=sequences, alphabet=alphabet, d=d)


# Sidecar with one line of concatenated glyphs; keeps the canonical format
# exactly as specified while letting prepared datasets remember their glyphs.

def save_alphabet(alphabet: LabelAlphabet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(alphabet.symbols) + "\n")


def load_alphabet(path) -> LabelAlphabet:
    with open(path, "r", encoding="utf-8") as fh:
        return LabelAlphabet(list(fh.readline().rstrip("\n")))
