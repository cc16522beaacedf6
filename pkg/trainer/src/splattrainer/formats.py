"""Readers/writers for the toolkit's token-stream ("ARGT") and attention-mask
("ARGM") binary formats. These files are the only contract with the core
toolkit; this module re-implements the layouts independently.

All integers little-endian. Token payload per node: node_id u32, parent_id
u32 (root 0xFFFFFFFF), level u16, splittable u8, 14 uint8 bins. The spec
block carries 14 min/max float64 pairs plus one flag byte per attribute
(bit0 = log-scale, bit1 = widened range).
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC_TOKENS = b"ARGT"
MAGIC_MASK = b"ARGM"
FORMAT_VERSION = 1
ROOT_PARENT = 0xFFFFFFFF

NUM_ATTRIBUTES = 14
NUM_BINS = 256

MASK_VARIANTS = {0: "causal", 1: "levelwise", 2: "tree", 3: "tree_all_internal"}


class TokenFormatError(ValueError):
    pass


@dataclass
class Token:
    node_id: int
    parent_id: int | None
    level: int
    splittable: bool
    bins: np.ndarray  # uint8[14]


@dataclass
class QuantRanges:
    mins: np.ndarray
    maxs: np.ndarray
    flags: bytes

    def centers(self, bins: np.ndarray, attrs: slice = slice(None)) -> np.ndarray:
        """Codebook-domain values at bin centers; `attrs` selects which of
        the 14 attribute ranges the trailing bin axis refers to."""
        b = np.asarray(bins, dtype=np.float64)
        mins = self.mins[attrs]
        maxs = self.maxs[attrs]
        return mins + (b + 0.5) * (maxs - mins) / NUM_BINS


class _Cursor:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TokenFormatError(f"{self.what}: truncated at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def read_tokens(path) -> tuple[list[Token], QuantRanges, int]:
    cur = _Cursor(open(path, "rb").read(), str(path))
    if cur.take(4) != MAGIC_TOKENS:
        raise TokenFormatError(f"{path}: bad magic")
    (version,) = cur.unpack("H")
    if version != FORMAT_VERSION:
        raise TokenFormatError(f"{path}: unknown version {version}")
    count, depth = cur.unpack("IH")
    mins = np.frombuffer(cur.take(NUM_ATTRIBUTES * 8), dtype="<f8").copy()
    maxs = np.frombuffer(cur.take(NUM_ATTRIBUTES * 8), dtype="<f8").copy()
    flags = cur.take(NUM_ATTRIBUTES)
    tokens = []
    for _ in range(count):
        node_id, parent, level, splittable = cur.unpack("IIHB")
        bins = np.frombuffer(cur.take(NUM_ATTRIBUTES), dtype=np.uint8).copy()
        tokens.append(
            Token(
                node_id=node_id,
                parent_id=None if parent == ROOT_PARENT else parent,
                level=level,
                splittable=bool(splittable),
                bins=bins,
            )
        )
    return tokens, QuantRanges(mins=mins, maxs=maxs, flags=flags), depth


def write_tokens(tokens: list[Token], ranges: QuantRanges, depth: int, path) -> None:
    parts = [MAGIC_TOKENS, struct.pack("<HIH", FORMAT_VERSION, len(tokens), depth)]
    parts.append(ranges.mins.astype("<f8").tobytes())
    parts.append(ranges.maxs.astype("<f8").tobytes())
    parts.append(ranges.flags)
    for tok in tokens:
        parent = ROOT_PARENT if tok.parent_id is None else tok.parent_id
        parts.append(struct.pack("<IIHB", tok.node_id, parent, tok.level, int(tok.splittable)))
        parts.append(np.asarray(tok.bins, dtype=np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_mask(path) -> tuple[np.ndarray, str]:
    cur = _Cursor(open(path, "rb").read(), str(path))
    if cur.take(4) != MAGIC_MASK:
        raise TokenFormatError(f"{path}: bad magic")
    (version,) = cur.unpack("H")
    if version != FORMAT_VERSION:
        raise TokenFormatError(f"{path}: unknown version {version}")
    n, variant_code = cur.unpack("IB")
    row_bytes = (n + 7) // 8
    packed = np.frombuffer(cur.take(n * row_bytes), dtype=np.uint8).reshape(n, row_bytes)
    allowed = np.unpackbits(packed, axis=1)[:, :n].astype(bool)
    return allowed, MASK_VARIANTS.get(variant_code, "unknown")
