"""File ingest/export: splat PLY checkpoints, the toolkit's binary formats
(merge sequences "ARGS", token streams "ARGT", masks "ARGM"), PPM images, and
raw float32 images.

All multi-byte integers are little-endian. Every writer/reader pair is a
bitwise inverse on valid inputs, and every format is versioned; unknown
versions raise VersionError, bad magic MagicError, and short files
TruncationError.
"""

import struct

import numpy as np
from scipy.special import expit, logit

from .errors import (
    MagicError,
    MissingPropertyError,
    TruncationError,
    UnsupportedVariantError,
    VersionError,
)
from .gaussians import MIN_SCALE, Gaussian3D, canonicalize_quaternion
from .masks import VARIANT_CODES, VARIANT_NAMES, AttentionMask
from .simplify import GaussianSet, MergeRecord, MergeSequence
from .tokens import NUM_ATTRIBUTES, QuantSpec, TokenRecord

SEQUENCE_MAGIC = b"ARGS"
TOKENS_MAGIC = b"ARGT"
MASK_MAGIC = b"ARGM"
IMAGE_MAGIC = b"ARGI"
FORMAT_VERSION = 1

ROOT_PARENT = 0xFFFFFFFF

# Loaded opacities are floored here so deep-saturated logits cannot underflow
# to an invalid opacity of exactly zero.
MIN_OPACITY = 1e-12

# Quaternions already this close to unit length are kept verbatim so that a
# save/load/save cycle is byte-stable.
_QUAT_RENORM_TOL = 5e-7

_REQUIRED_PLY_PROPS = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(f"{self.what}: needed {n} bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise MagicError(f"{self.what}: magic {got!r} != {magic!r}")

    def expect_version(self, version: int) -> None:
        (got,) = self.unpack("H")
        if got != version:
            raise VersionError(f"{self.what}: unknown format version {got}")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise TruncationError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


# ---------------------------------------------------------------------------
# splat PLY


def load_ply(path) -> GaussianSet:
    """Load a standard splat checkpoint; activations are applied (sigmoid
    opacity, exp scale floored at 1e-8, quaternion normalized with w >= 0)
    and ids are assigned 0..n-1 in file order."""
    with open(path, "rb") as fh:
        data = fh.read()
    marker = b"end_header\n"
    idx = data.find(marker)
    if not data.startswith(b"ply"):
        raise MagicError(f"{path}: not a PLY file")
    if idx < 0:
        raise TruncationError(f"{path}: header never ends")
    header = data[: idx + len(marker)].decode("ascii", errors="replace")
    payload = data[idx + len(marker) :]

    count = None
    props: list[str] = []
    fmt_seen = False
    for line in header.splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt_seen = True
            if parts[1] == "ascii":
                raise UnsupportedVariantError(f"{path}: ascii PLY is not supported")
            if parts[1] != "binary_little_endian":
                raise UnsupportedVariantError(f"{path}: unsupported PLY format {parts[1]}")
        elif parts[0] == "element":
            if parts[1] == "vertex":
                count = int(parts[2])
            elif count is not None and props:
                raise UnsupportedVariantError(f"{path}: extra element {parts[1]} after vertex")
        elif parts[0] == "property" and count is not None:
            if parts[1] not in ("float", "float32"):
                raise UnsupportedVariantError(f"{path}: non-float property {parts[-1]}")
            props.append(parts[-1])
    if not fmt_seen or count is None:
        raise MagicError(f"{path}: malformed PLY header")
    for name in _REQUIRED_PLY_PROPS:
        if name not in props:
            raise MissingPropertyError(f"{path}: missing required property {name}")

    stride = 4 * len(props)
    if len(payload) < count * stride:
        raise TruncationError(f"{path}: payload holds {len(payload)} bytes, needs {count * stride}")
    table = np.frombuffer(payload[: count * stride], dtype="<f4").reshape(count, len(props))
    col = {name: table[:, i].astype(np.float64) for i, name in enumerate(props)}

    rest_names = sorted(
        (n for n in props if n.startswith("f_rest_")), key=lambda n: int(n.rsplit("_", 1)[1])
    )
    gset = GaussianSet()
    for i in range(count):
        quat = np.array([col[f"rot_{k}"][i] for k in range(4)])
        norm = float(np.linalg.norm(quat))
        if norm == 0.0:
            raise MissingPropertyError(f"{path}: vertex {i} has a zero quaternion")
        if abs(norm - 1.0) > _QUAT_RENORM_TOL:
            quat = quat / norm
        quat = canonicalize_quaternion(quat)
        features = [col["f_dc_0"][i], col["f_dc_1"][i], col["f_dc_2"][i]]
        features += [col[n][i] for n in rest_names]
        gset.add(
            Gaussian3D(
                center=np.array([col["x"][i], col["y"][i], col["z"][i]]),
                opacity=max(float(expit(col["opacity"][i])), MIN_OPACITY),
                scale=np.maximum(np.exp([col[f"scale_{k}"][i] for k in range(3)]), MIN_SCALE),
                rotation=quat,
                features=np.asarray(features),
            )
        )
    return gset


def save_ply(gset: GaussianSet, path) -> None:
    """Write the active set as a splat PLY with pre-activation storage
    (logit opacity, log scales); normals are zero-filled."""
    items = gset.active_gaussians()
    extra = len(items[0][1].features) - 3 if items else 0
    for _, g in items:
        if len(g.features) - 3 != extra:
            raise UnsupportedVariantError("cannot save a set with mixed SH feature lengths")
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{k}" for k in range(extra)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(items)}"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")

    table = np.zeros((len(items), len(names)), dtype=np.float64)
    for row, (_, g) in enumerate(items):
        table[row, 0:3] = g.center
        table[row, 6:9] = g.features_dc
        if extra:
            table[row, 9 : 9 + extra] = g.features[3:]
        table[row, 9 + extra] = logit(g.opacity)
        table[row, 10 + extra : 13 + extra] = np.log(g.scale)
        table[row, 13 + extra : 17 + extra] = g.rotation
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(table.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Gaussian payloads inside binary records


def _pack_gaussian(g: Gaussian3D) -> bytes:
    extra = g.features[3:]
    values = np.concatenate([g.center, [g.opacity], g.scale, g.rotation, g.features_dc])
    return (
        values.astype("<f8").tobytes()
        + struct.pack("<H", len(extra))
        + extra.astype("<f8").tobytes()
    )


def _unpack_gaussian(reader: _Reader) -> Gaussian3D:
    values = np.frombuffer(reader.take(14 * 8), dtype="<f8")
    (extra_count,) = reader.unpack("H")
    extras = np.frombuffer(reader.take(extra_count * 8), dtype="<f8")
    return Gaussian3D(
        center=values[0:3],
        opacity=float(values[3]),
        scale=values[4:7],
        rotation=values[7:11],
        features=np.concatenate([values[11:14], extras]),
    )


# ---------------------------------------------------------------------------
# merge sequences ("ARGS")


def save_sequence(seq: MergeSequence, path) -> None:
    parts = [
        SEQUENCE_MAGIC,
        struct.pack("<HII", FORMAT_VERSION, seq.source_count, len(seq.records)),
    ]
    for rec in seq.records:
        parts.append(struct.pack("<IIII", rec.step, rec.parent_id, rec.child1_id, rec.child2_id))
        parts.append(_pack_gaussian(rec.child1_payload))
        parts.append(_pack_gaussian(rec.child2_payload))
        parts.append(_pack_gaussian(rec.parent_payload))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_sequence(path) -> MergeSequence:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    reader.expect_magic(SEQUENCE_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    source_count, n_records = reader.unpack("II")
    records = []
    for _ in range(n_records):
        step, parent_id, child1_id, child2_id = reader.unpack("IIII")
        child1 = _unpack_gaussian(reader)
        child2 = _unpack_gaussian(reader)
        parent = _unpack_gaussian(reader)
        records.append(
            MergeRecord(
                step=step,
                parent_id=parent_id,
                child1_id=child1_id,
                child2_id=child2_id,
                child1_payload=child1,
                child2_payload=child2,
                parent_payload=parent,
            )
        )
    reader.done()
    return MergeSequence(records=tuple(records), source_count=source_count)


# ---------------------------------------------------------------------------
# token streams ("ARGT")


def save_tokens(tokens: list[TokenRecord], spec: QuantSpec, depth: int, path) -> None:
    parts = [TOKENS_MAGIC, struct.pack("<HIH", FORMAT_VERSION, len(tokens), depth)]
    parts.append(spec.mins.astype("<f8").tobytes())
    parts.append(spec.maxs.astype("<f8").tobytes())
    flags = bytes(
        (1 if spec.log_scale[a] else 0) | (2 if spec.widened[a] else 0)
        for a in range(NUM_ATTRIBUTES)
    )
    parts.append(flags)
    for tok in tokens:
        parent = ROOT_PARENT if tok.parent_id is None else tok.parent_id
        parts.append(
            struct.pack("<IIHB", tok.node_id, parent, tok.level, 1 if tok.splittable else 0)
        )
        parts.append(tok.bins.astype(np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_tokens(path) -> tuple[list[TokenRecord], QuantSpec, int]:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    reader.expect_magic(TOKENS_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    count, depth = reader.unpack("IH")
    mins = np.frombuffer(reader.take(NUM_ATTRIBUTES * 8), dtype="<f8")
    maxs = np.frombuffer(reader.take(NUM_ATTRIBUTES * 8), dtype="<f8")
    flags = reader.take(NUM_ATTRIBUTES)
    spec = QuantSpec(
        mins=mins,
        maxs=maxs,
        log_scale=tuple(bool(f & 1) for f in flags),
        widened=tuple(bool(f & 2) for f in flags),
    )
    tokens = []
    for _ in range(count):
        node_id, parent, level, splittable = reader.unpack("IIHB")
        bins = np.frombuffer(reader.take(NUM_ATTRIBUTES), dtype=np.uint8)
        tokens.append(
            TokenRecord(
                bins=bins,
                splittable=bool(splittable),
                node_id=node_id,
                level=level,
                parent_id=None if parent == ROOT_PARENT else parent,
            )
        )
    reader.done()
    return tokens, spec, depth


# ---------------------------------------------------------------------------
# attention masks ("ARGM")


def save_mask(mask: AttentionMask, path) -> None:
    packed = np.packbits(mask.allowed, axis=1)
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC)
        fh.write(struct.pack("<HIB", FORMAT_VERSION, mask.n, VARIANT_CODES[mask.variant]))
        fh.write(packed.tobytes())


def load_mask(path) -> AttentionMask:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    reader.expect_magic(MASK_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    n, variant_code = reader.unpack("IB")
    if variant_code not in VARIANT_NAMES:
        raise UnsupportedVariantError(f"{path}: unknown mask variant code {variant_code}")
    row_bytes = (n + 7) // 8
    packed = np.frombuffer(reader.take(n * row_bytes), dtype=np.uint8).reshape(n, row_bytes)
    reader.done()
    allowed = np.unpackbits(packed, axis=1)[:, :n].astype(bool)
    return AttentionMask(n=n, allowed=allowed, variant=VARIANT_NAMES[variant_code])


# ---------------------------------------------------------------------------
# images


def save_ppm(image: np.ndarray, path) -> None:
    """8-bit binary PPM (P6)."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise MagicError(f"{path}: not a binary PPM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncationError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise UnsupportedVariantError(f"{path}: only 8-bit PPM supported")
    need = w * h * 3
    if len(data) - pos < need:
        raise TruncationError(f"{path}: payload holds {len(data) - pos} bytes, needs {need}")
    pixels = np.frombuffer(data[pos : pos + need], dtype=np.uint8).reshape(h, w, 3)
    return pixels.astype(np.float64) / 255.0


def save_float_image(image: np.ndarray, path) -> None:
    """Raw float32 image with a fixed 16-byte header."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, c = image.shape
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(struct.pack("<HHII", FORMAT_VERSION, c, h, w))
        fh.write(image.astype("<f4").tobytes())


def load_float_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), str(path))
    reader.expect_magic(IMAGE_MAGIC)
    reader.expect_version(FORMAT_VERSION)
    c, h, w = reader.unpack("HII")
    data = np.frombuffer(reader.take(h * w * c * 4), dtype="<f4")
    reader.done()
    return data.reshape(h, w, c).astype(np.float64)
