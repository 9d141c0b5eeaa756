"""
Bit-packed binary vectors and popcount kernels.

A ``BitVector`` stores ±1 values as bits (+1 -> 1, -1 -> 0), packed LSB-first
into little-endian uint64 words. Bits at positions >= ``length_bits`` in the
last word are always zero, so complements must be masked before counting.

The four match frequencies between two vectors x and y are

    a = popcount(x & y)        both set
    b = popcount(~x & y)       only y set
    c = popcount(x & ~y)       only x set
    d = popcount(~x & ~y)      neither set

and the ±1 dot product is (a + d) - (b + c).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

WORD_BITS = 64

_S55 = np.uint64(0x5555555555555555)
_S33 = np.uint64(0x3333333333333333)
_S0F = np.uint64(0x0F0F0F0F0F0F0F0F)
_S01 = np.uint64(0x0101010101010101)
_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


class DimensionError(ValueError):
    """Raised when two operands do not have matching lengths or shapes."""
    pass


class InvalidMomentsError(ValueError):
    """Raised when (s, p, q, n) cannot come from any pair of bit vectors."""
    pass


def popcount_words(words: np.ndarray) -> np.ndarray:
    """Per-word SWAR popcount of a uint64 array (any shape)."""
    arr = np.asarray(words, dtype=np.uint64)
    arr = arr - ((arr >> np.uint64(1)) & _S55)
    arr = (arr & _S33) + ((arr >> np.uint64(2)) & _S33)
    arr = (arr + (arr >> np.uint64(4))) & _S0F
    return (arr * _S01) >> np.uint64(56)


def popcount(words: np.ndarray) -> int:
    """Total number of set bits across a uint64 array."""
    if np.size(words) == 0:
        return 0
    return int(popcount_words(words).sum(dtype=np.uint64))


def word_count(length_bits: int) -> int:
    return (length_bits + WORD_BITS - 1) // WORD_BITS


def tail_mask(length_bits: int) -> np.uint64:
    """Mask of the valid bits in the last word of a vector of ``length_bits``."""
    rem = length_bits % WORD_BITS
    if rem == 0:
        return _ALL_ONES
    return np.uint64((1 << rem) - 1)


def _pack_bit_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, n) array of {0,1} into (rows, words) uint64, LSB-first."""
    rows, n = bits.shape
    n_words = word_count(n)
    if n_words == 0:
        return np.zeros((rows, 0), dtype=np.uint64)
    padded = np.zeros((rows, n_words * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def _unpack_bit_rows(words: np.ndarray, length_bits: int) -> np.ndarray:
    rows = words.shape[0]
    as_bytes = np.ascontiguousarray(words.astype("<u8")).view(np.uint8).reshape(rows, -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :length_bits]


@dataclass(frozen=True, eq=False)
class BitVector:
    """Immutable packed binary vector with canonical (zero) padding."""
    words: np.ndarray
    length_bits: int

    def __post_init__(self):
        if self.length_bits < 0:
            raise ValueError(f"length_bits must be >= 0, got {self.length_bits}")
        words = np.array(self.words, dtype=np.uint64).reshape(-1)
        expected = word_count(self.length_bits)
        if words.size != expected:
            raise DimensionError(
                f"BitVector of {self.length_bits} bits needs {expected} words, got {words.size}"
            )
        if words.size and (words[-1] & ~tail_mask(self.length_bits)) != 0:
            raise ValueError("BitVector padding bits must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitVector":
        arr = np.asarray(bits, dtype=np.uint8).reshape(1, -1)
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must contain only 0 and 1")
        return cls(_pack_bit_rows(arr)[0], arr.shape[1])

    def to_bits(self) -> np.ndarray:
        if self.length_bits == 0:
            return np.zeros(0, dtype=np.uint8)
        return _unpack_bit_rows(self.words.reshape(1, -1), self.length_bits)[0]

    def invert(self) -> "BitVector":
        return BitVector(_masked_not(self), self.length_bits)

    def __len__(self) -> int:
        return self.length_bits

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.length_bits == other.length_bits and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.length_bits, self.words.tobytes()))

    def __repr__(self) -> str:
        bits = "".join(str(b) for b in self.to_bits()[:32])
        suffix = "..." if self.length_bits > 32 else ""
        return f"BitVector({bits}{suffix}, n={self.length_bits})"


@dataclass(frozen=True)
class QuadCounts:
    """Match frequencies a (1/1), b (0/1), c (1/0), d (0/0) of two vectors."""
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            if getattr(self, name) < 0:
                raise ValueError(f"QuadCounts.{name} must be >= 0, got {getattr(self, name)}")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def dot(self) -> int:
        return (self.a + self.d) - (self.b + self.c)

    def swapped(self) -> "QuadCounts":
        """Counts of the argument-swapped pair (b and c trade places)."""
        return QuadCounts(self.a, self.c, self.b, self.d)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=np.float64)


def _masked_not(v: BitVector) -> np.ndarray:
    inverted = ~v.words
    if inverted.size:
        inverted[-1] &= tail_mask(v.length_bits)
    return inverted


def _check_lengths(x: BitVector, y: BitVector):
    if x.length_bits != y.length_bits:
        raise DimensionError(f"length mismatch: {x.length_bits} vs {y.length_bits} bits")


def pack_signs(values: Sequence[float], threshold: float = 0.0) -> BitVector:
    """Binarize ``values`` (>= threshold -> 1, else 0) and pack them."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    return BitVector.from_bits((arr >= threshold).astype(np.uint8))


def unpack_signs(v: BitVector) -> np.ndarray:
    """±1 int8 values of a packed vector."""
    return np.where(v.to_bits() == 1, 1, -1).astype(np.int8)


def pack_sign_rows(values: np.ndarray, threshold: float = 0.0) -> Tuple[np.ndarray, int]:
    """Pack each row of a 2D array; returns ((rows, words) uint64, length_bits)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2D array, got shape {arr.shape}")
    return _pack_bit_rows((arr >= threshold).astype(np.uint8)), arr.shape[1]


def match_counts(x: BitVector, y: BitVector) -> QuadCounts:
    _check_lengths(x, y)
    not_x = _masked_not(x)
    not_y = _masked_not(y)
    return QuadCounts(
        a=popcount(x.words & y.words),
        b=popcount(not_x & y.words),
        c=popcount(x.words & not_y),
        d=popcount(not_x & not_y),
    )


def xnor_dot(x: BitVector, y: BitVector) -> int:
    """±1 dot product via 2 * popcount(XNOR(x, y)) - n."""
    _check_lengths(x, y)
    xnor = ~(x.words ^ y.words)
    if xnor.size:
        xnor[-1] &= tail_mask(x.length_bits)
    return 2 * popcount(xnor) - x.length_bits


def sign_sum(x: BitVector) -> int:
    """Sum of the ±1 values of ``x`` (2 * popcount - n)."""
    return 2 * popcount(x.words) - x.length_bits


def counts_from_moments(s: int, p: int, q: int, n: int) -> QuadCounts:
    """Recover (a, b, c, d) from the ±1 dot s, the ±1 sums p (of x) and q (of y), and n."""
    numerators = {
        "a": n + s + p + q,
        "b": n - s - p + q,
        "c": n - s + p - q,
        "d": n + s - p - q,
    }
    for name, value in numerators.items():
        if value % 4 != 0 or value < 0:
            raise InvalidMomentsError(
                f"moments (s={s}, p={p}, q={q}, n={n}) give {name} = {value}/4"
            )
    return QuadCounts(**{name: value // 4 for name, value in numerators.items()})


def match_counts_matrix(
    x_words: np.ndarray, w_words: np.ndarray, length_bits: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Counts of every packed row of ``x_words`` against every row of ``w_words``.

    Returns four int64 arrays of shape (rows_x, rows_w).
    """
    x_words = np.asarray(x_words, dtype=np.uint64)
    w_words = np.asarray(w_words, dtype=np.uint64)
    if x_words.shape[-1] != w_words.shape[-1] or x_words.shape[-1] != word_count(length_bits):
        raise DimensionError(
            f"packed widths {x_words.shape[-1]} / {w_words.shape[-1]} "
            f"do not match {length_bits} bits"
        )
    mask = np.full(x_words.shape[-1], _ALL_ONES, dtype=np.uint64)
    if mask.size:
        mask[-1] = tail_mask(length_bits)
    not_x = (~x_words) & mask
    not_w = (~w_words) & mask
    xs, ws = x_words[:, None, :], w_words[None, :, :]
    nxs, nws = not_x[:, None, :], not_w[None, :, :]

    def _count(block: np.ndarray) -> np.ndarray:
        return popcount_words(block).sum(axis=-1, dtype=np.uint64).astype(np.int64)

    return _count(xs & ws), _count(nxs & ws), _count(xs & nws), _count(nxs & nws)


def oracle_match_counts(x_bits: Sequence[int], y_bits: Sequence[int]) -> QuadCounts:
    """Bit-by-bit loop; the reference the packed kernels are checked against."""
    if len(x_bits) != len(y_bits):
        raise DimensionError(f"length mismatch: {len(x_bits)} vs {len(y_bits)} bits")
    a = b = c = d = 0
    for xi, yi in zip(x_bits, y_bits):
        if xi and yi:
            a += 1
        elif yi:
            b += 1
        elif xi:
            c += 1
        else:
            d += 1
    return QuadCounts(a, b, c, d)


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den != 0 else float("nan")


# Classical coefficients expressed through the counts. Used to cross-check the
# kernels against set-based formulas; not part of the training path.
REFERENCE_COEFFICIENTS: Dict[str, Callable[[QuadCounts], float]] = {
    "sokal_michener": lambda q: _ratio(q.a + q.d, q.a + q.d + (q.b + q.c)),
    "rogers_tanimoto": lambda q: _ratio(q.a + q.d, q.a + q.d + 2 * (q.b + q.c)),
    "gower_legendre": lambda q: _ratio(q.a + q.d, q.a + q.d + 0.5 * (q.b + q.c)),
    "jaccard": lambda q: _ratio(q.a, q.a + (q.b + q.c)),
    "sokal_sneath": lambda q: _ratio(q.a, q.a + 2 * (q.b + q.c)),
    "dice": lambda q: _ratio(q.a, q.a + 0.5 * (q.b + q.c)),
    "yule_q": lambda q: _ratio(q.a * q.d - q.b * q.c, q.a * q.d + q.b * q.c),
    "tarantula": lambda q: _ratio(q.a * (q.c + q.d), q.c * (q.a + q.b)),
    "michael": lambda q: _ratio(4 * (q.a * q.d - q.b * q.c), (q.a + q.d) ** 2 + (q.b + q.c) ** 2),
    "simpson": lambda q: _ratio(q.a, min(q.a + q.b, q.a + q.c)),
    "braun_banquet": lambda q: _ratio(q.a, max(q.a + q.b, q.a + q.c)),
}


def reference_coefficient(name: str, counts: QuadCounts) -> float:
    try:
        return REFERENCE_COEFFICIENTS[name](counts)
    except KeyError:
        raise KeyError(f"unknown reference coefficient '{name}'") from None
