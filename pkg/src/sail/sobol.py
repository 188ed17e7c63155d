"""Sobol low-discrepancy sequence generator.

Direction numbers follow the Joe and Kuo construction; the table shipped in
``data/joe-kuo-d6.txt`` covers dimensions up to 64. Points are emitted in
gray-code order and the all-zeros point at index 0 is skipped, so the first
point of every stream is 0.5 in each coordinate.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .errors import ConfigError

_BITS = 32
_SCALE = float(2**_BITS)

_table_cache: dict[str, list[tuple[int, int, list[int]]]] = {}


def load_direction_table(path=None):
    """Parse a direction-number file into per-dimension (s, a, m) rows.

    The format is the published one: whitespace-separated integer columns
    ``dimension  degree  polynomial-coefficient  m_1 .. m_s``, one dimension
    per line, starting at dimension 2 (dimension 1 needs no table entry).
    """
    key = "<builtin>" if path is None else str(path)
    if key in _table_cache:
        return _table_cache[key]
    if path is None:
        text = resources.files("sail.data").joinpath("joe-kuo-d6.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    expected_dim = 2
    for line in text.splitlines():
        parts = line.split()
        if not parts or not parts[0].isdigit():
            continue  # header or comment line
        dim, s, a = int(parts[0]), int(parts[1]), int(parts[2])
        m = [int(x) for x in parts[3:]]
        if dim != expected_dim or len(m) != s:
            raise ConfigError(f"malformed direction-number row for dimension {dim}")
        rows.append((s, a, m))
        expected_dim += 1
    _table_cache[key] = rows
    return rows


def _direction_numbers(dimension, table):
    """Build the (dimension, _BITS) matrix of direction integers v_k."""
    if dimension < 1:
        raise ConfigError("Sobol dimension must be >= 1")
    if dimension - 1 > len(table):
        raise ConfigError(
            f"Sobol dimension {dimension} exceeds the shipped direction-number "
            f"table (max {len(table) + 1})"
        )
    v = np.zeros((dimension, _BITS), dtype=np.uint64)
    # dimension 1 is the van der Corput sequence: m_k = 1 for every k
    v[0] = [1 << (_BITS - k) for k in range(1, _BITS + 1)]
    for j in range(1, dimension):
        s, a, m = table[j - 1]
        for k in range(min(s, _BITS)):
            v[j, k] = np.uint64(m[k] << (_BITS - k - 1))
        for k in range(s, _BITS):
            vk = v[j, k - s] ^ (v[j, k - s] >> np.uint64(s))
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    vk ^= v[j, k - i]
            v[j, k] = vk
    return v


class SobolSequence:
    """Deterministic Sobol stream over [0,1)^d.

    The emitted stream is a pure function of (dimension, index): any state
    recreated at the same index produces the same points. ``index`` starts at
    1 because the degenerate all-zeros point is skipped.
    """

    def __init__(self, dimension, index=1, table_path=None):
        table = load_direction_table(table_path)
        self.dimension = dimension
        self.index = index
        self._v = _direction_numbers(dimension, table)

    def _point(self, i):
        gray = i ^ (i >> 1)
        state = np.zeros(self.dimension, dtype=np.uint64)
        k = 0
        while gray:
            if gray & 1:
                state ^= self._v[:, k]
            gray >>= 1
            k += 1
        return state.astype(np.float64) / _SCALE

    def next_point(self):
        """Return the next point and advance the stream by one."""
        p = self._point(self.index)
        self.index += 1
        return p

    def skip(self, n):
        """Advance the stream by n points without emitting them."""
        if n < 0:
            raise ValueError("cannot skip a negative number of points")
        self.index += n
        return self

    def take(self, n):
        """Return the next n points as an (n, dimension) array."""
        out = np.empty((n, self.dimension))
        for i in range(n):
            out[i] = self.next_point()
        return out

    def clone(self):
        """Independent copy at the current index (clone-and-skip for parallel streams)."""
        dup = SobolSequence.__new__(SobolSequence)
        dup.dimension = self.dimension
        dup.index = self.index
        dup._v = self._v
        return dup
