"""Packed bit streams, running-parity extraction and k-fold distillation.

Bits are packed LSB-first into little-endian 64-bit words: bit ``i`` of a
stream is bit ``i % 64`` of word ``i // 64``. Read as bytes, byte ``j`` holds
stream bits ``8j .. 8j+7`` with the earliest bit in the least significant
position. Exported files and the bit-file payload use this order.
"""
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .exceptions import BitFileError, ConfigurationError

logger = logging.getLogger(__name__)

WORD_BITS = 64
ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
_SCAN_SHIFTS = tuple(np.uint64(shift) for shift in (1, 2, 4, 8, 16, 32))
_TOP_BIT = np.uint64(63)

BITFILE_MAGIC = b'QRNB'
BITFILE_VERSION = 1
# magic, version, kind, k, length
_HEADER = struct.Struct('<4sBBHQ')


class BitKind(IntEnum):
    RAW = 0
    EXTRACTED = 1
    DISTILLED = 2


def words_for(length):
    return -(-length // WORD_BITS)


def pack_bits(bits):
    """Pack a 0/1 array into LSB-first uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(bits, bitorder='little')
    padded = np.zeros(words_for(bits.size) * 8, dtype=np.uint8)
    padded[:packed.size] = packed
    return padded.view('<u8').astype(np.uint64, copy=False)


def unpack_words(words, length):
    words = np.ascontiguousarray(words, dtype='<u8')
    return np.unpackbits(words.view(np.uint8), bitorder='little')[:length]


def _tail_mask(length):
    used = length % WORD_BITS
    if used == 0:
        return ALL_ONES
    return np.uint64((1 << used) - 1)


@dataclass(eq=False)
class BitStream:
    """Packed bits plus their length and provenance (raw d, extracted x, distilled z)."""

    words: np.ndarray
    length: int
    kind: BitKind = BitKind.RAW
    k: int = 1

    def __post_init__(self):
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64)
        self.kind = BitKind(self.kind)
        if self.length < 0 or self.length > WORD_BITS * self.words.size:
            raise ConfigurationError(f"length {self.length} does not fit in {self.words.size} words")
        if self.words.size > words_for(self.length):
            self.words = self.words[:words_for(self.length)]
        if self.words.size and self.words[-1] & ~_tail_mask(self.length):
            raise ConfigurationError("trailing bits of the final word must be zero")

    @classmethod
    def from_bits(cls, bits, kind=BitKind.RAW, k=1):
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(pack_bits(bits), int(bits.size), kind, k)

    @classmethod
    def from_bytes(cls, data, length=None, kind=BitKind.RAW, k=1):
        raw = np.frombuffer(bytes(data), dtype=np.uint8)
        if length is None:
            length = raw.size * 8
        if length > raw.size * 8:
            raise BitFileError(f"{raw.size} bytes cannot hold {length} bits")
        return cls.from_bits(np.unpackbits(raw, bitorder='little')[:length], kind, k)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, BitStream):
            return NotImplemented
        return (
            self.length == other.length
            and self.kind == other.kind
            and self.k == other.k
            and np.array_equal(self.words, other.words)
        )

    def bit(self, index):
        if not 0 <= index < self.length:
            raise IndexError(index)
        return int((self.words[index // WORD_BITS] >> np.uint64(index % WORD_BITS)) & np.uint64(1))

    def to_bits(self):
        return unpack_words(self.words, self.length)

    def to_bytes(self):
        n_bytes = (self.length + 7) // 8
        return self.words.astype('<u8').tobytes()[:n_bytes]

    def ones(self):
        return int(np.bitwise_count(self.words).sum(dtype=np.int64))

    def iter_chunks(self, chunk_bits):
        """Unpacked 0/1 chunks of ``chunk_bits`` bits (a multiple of 64), in order."""
        if chunk_bits <= 0 or chunk_bits % WORD_BITS:
            raise ConfigurationError("chunk_bits must be a positive multiple of 64")
        step = chunk_bits // WORD_BITS
        for start in range(0, self.words.size, step):
            first_bit = start * WORD_BITS
            yield unpack_words(self.words[start:start + step], min(chunk_bits, self.length - first_bit))

    def slice_bits(self, start, stop):
        """Unpacked bits ``start .. stop`` without unpacking the whole stream."""
        stop = min(stop, self.length)
        first, last = start // WORD_BITS, words_for(stop)
        bits = unpack_words(self.words[first:last], (last - first) * WORD_BITS)
        return bits[start - first * WORD_BITS:stop - first * WORD_BITS]

    def with_kind(self, kind, k=1):
        return BitStream(self.words, self.length, kind, k)

    @staticmethod
    def concatenate(parts, kind=BitKind.RAW, k=1):
        """Join streams whose lengths (except the last) are multiples of 64."""
        parts = list(parts)
        for part in parts[:-1]:
            if part.length % WORD_BITS:
                raise ConfigurationError("only the last part may end inside a word")
        words = np.concatenate([part.words for part in parts]) if parts else np.zeros(0, np.uint64)
        return BitStream(words, sum(part.length for part in parts), kind, k)


def _scan_words(words):
    """In-word inclusive prefix XOR; returns the scanned words and each word's parity."""
    scanned = words.copy()
    for shift in _SCAN_SHIFTS:
        scanned ^= scanned << shift
    return scanned, (scanned >> _TOP_BIT).astype(np.uint8)


def _apply_carry(scanned, parities, carry_in):
    # carry into word w = carry_in ^ parity(words before w)
    carries = np.bitwise_xor.accumulate(parities) ^ np.uint8(carry_in)
    flips = np.empty_like(parities)
    flips[0] = carry_in
    flips[1:] = carries[:-1]
    scanned[flips.astype(bool)] ^= ALL_ONES
    return int(carries[-1])


def running_parity(words, length, x0=0, workers=1, chunk_words=1 << 16):
    """x_i = x_{i-1} XOR d_i over packed words, split into chunks fixed up by their carry."""
    words = np.asarray(words, dtype=np.uint64)
    if words.size == 0:
        return words.copy()
    bounds = list(range(0, words.size, chunk_words)) + [words.size]
    chunks = [words[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scans = list(pool.map(_scan_words, chunks))
    else:
        scans = [_scan_words(chunk) for chunk in chunks]
    carry = int(x0) & 1
    for scanned, parities in scans:
        carry = _apply_carry(scanned, parities, carry)
    out = np.concatenate([scanned for scanned, _ in scans])
    out[-1] &= _tail_mask(length)
    return out


def extract(raw, x0=0, workers=1):
    """Two-state parity machine over raw bits d; same length as the input."""
    if raw.kind != BitKind.RAW:
        raise ConfigurationError(f"extract expects raw bits, got {raw.kind.name.lower()}")
    return BitStream(running_parity(raw.words, raw.length, x0, workers), raw.length, BitKind.EXTRACTED)


def raw_from_extracted(x, x0=0):
    """Inverse of ``extract``: d_i = x_i XOR x_{i-1}."""
    bits = x.to_bits()
    previous = np.empty_like(bits)
    if bits.size:
        previous[0] = x0
        previous[1:] = bits[:-1]
    return BitStream.from_bits(bits ^ previous, BitKind.RAW)


def distill(x, k, chunk_bits=1 << 22):
    """z_i = x_{ik}: every k-th extracted bit starting at index 0; floor(len/k) bits."""
    if k < 1:
        raise ConfigurationError("distillation factor k must be at least 1")
    if x.kind != BitKind.EXTRACTED:
        raise ConfigurationError(f"distill expects extracted bits, got {x.kind.name.lower()}")
    count = x.length // k
    if k == 1:
        return x.with_kind(BitKind.DISTILLED, 1)
    chunk_bits -= chunk_bits % WORD_BITS
    picked = []
    for n, chunk in enumerate(x.iter_chunks(chunk_bits)):
        first = n * chunk_bits
        offset = (-first) % k
        picked.append(chunk[offset::k])
    bits = np.concatenate(picked)[:count] if picked else np.zeros(0, np.uint8)
    return BitStream.from_bits(bits, BitKind.DISTILLED, k)


def write_bitfile(stream, path):
    """16-byte header (magic, version, kind, k, length) followed by the packed words."""
    with Path(path).open('wb') as handle:
        handle.write(_HEADER.pack(BITFILE_MAGIC, BITFILE_VERSION, int(stream.kind), stream.k, stream.length))
        handle.write(stream.words.astype('<u8').tobytes())


def read_bitfile(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise BitFileError(f"{path}: shorter than the bit-file header")
    magic, version, kind, k, length = _HEADER.unpack_from(data)
    if magic != BITFILE_MAGIC:
        raise BitFileError(f"{path}: not a bit file (magic {magic!r})")
    if version != BITFILE_VERSION:
        raise BitFileError(f"{path}: unsupported bit-file version {version}")
    try:
        kind = BitKind(kind)
    except ValueError as exc:
        raise BitFileError(f"{path}: unknown stream kind {kind}") from exc
    payload = data[_HEADER.size:]
    expected = words_for(length) * 8
    if len(payload) != expected:
        raise BitFileError(f"{path}: payload has {len(payload)} bytes, header promises {expected}")
    words = np.frombuffer(payload, dtype='<u8').astype(np.uint64)
    try:
        return BitStream(words, length, kind, k)
    except ConfigurationError as exc:
        raise BitFileError(f"{path}: {exc}") from exc
