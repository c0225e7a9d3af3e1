"""Reproducible, splittable random streams.

Every stream is a Philox4x64-10 counter-based generator (numpy's
``np.random.Philox``) whose 128-bit key is the first 16 bytes of
``SHA-256(f"{seed}\\x00{label}")`` read as two little-endian uint64 words.
The first block encrypts counter value 1 (numpy increments before each
block), then 2, 3, and so on.  Raw 64-bit words are therefore identical on
every platform; uniforms are ``(word >> 11) * 2**-53`` and integer draws use
rejection sampling, so both are bit-exact as well.  Continuous transforms
(Gumbel, exponential, normal) are inverse-CDF / Box-Muller formulas on top of
those uniforms and evaluated with numpy's elementary functions.

Substreams are derived by label: ``RngStream(7).split("objective")`` is the
stream keyed by ``"7\\x00/objective"``, independent of the parent and of
any sibling with a different label.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10/sha256-key/v1"

_TWO_POW_64 = 1 << 64
_INV_2_53 = 2.0**-53
_BLOCK = 4096


def _derive_key(seed: int, label: str) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x00{label}".encode()).digest()
    return np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)


class RngStream:
    """Deterministic stream of random words keyed by ``(seed, label)``."""

    def __init__(self, seed: int, label: str = ""):
        seed = int(seed)
        if not 0 <= seed < _TWO_POW_64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.label = label
        self._bitgen = np.random.Philox(key=_derive_key(seed, label))
        self._buf: list[int] = []
        self._pos = 0
        self._words_used = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r}, used={self._words_used})"

    @property
    def words_used(self) -> int:
        """Number of raw 64-bit words consumed so far."""
        return self._words_used

    def split(self, label: str) -> "RngStream":
        """Independent child stream identified by ``label``."""
        return RngStream(self.seed, f"{self.label}/{label}")

    # raw words -------------------------------------------------------------

    def _refill(self, need: int) -> None:
        # the buffer is a list of Python ints: scalar draws avoid numpy overhead
        rest = self._buf[self._pos:]
        self._buf = rest + self._bitgen.random_raw(max(_BLOCK, need - len(rest))).tolist()
        self._pos = 0

    def raw(self, size: int) -> np.ndarray:
        """Next ``size`` raw uint64 words, in stream order."""
        if len(self._buf) - self._pos < size:
            self._refill(size)
        out = np.array(self._buf[self._pos:self._pos + size], dtype=np.uint64)
        self._pos += size
        self._words_used += size
        return out

    def _word(self) -> int:
        if self._pos >= len(self._buf):
            self._refill(1)
        w = self._buf[self._pos]
        self._pos += 1
        self._words_used += 1
        return w

    # uniforms ----------------------------------------------------------------

    def uniform(self, size=None):
        """Uniform draws on ``[0, 1)`` with 53 random bits each."""
        if size is None:
            return (self._word() >> 11) * _INV_2_53
        n = int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(size)

    def _open_uniform(self, size):
        # midpoint of each 2**-53 cell: strictly inside (0, 1)
        n = int(np.prod(size))
        u = ((self.raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
        return u.reshape(size)

    # integers ------------------------------------------------------------------

    def index(self, n: int) -> int:
        """Uniform integer in ``range(n)`` (unbiased, by rejection)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _TWO_POW_64 - _TWO_POW_64 % n
        w = self._word()
        while w >= limit:
            w = self._word()
        return w % n

    def indices(self, n: int, size: int) -> np.ndarray:
        """``size`` independent uniform integers in ``range(n)``."""
        return np.array([self.index(n) for _ in range(size)], dtype=np.int64)

    def categorical(self, p) -> int:
        """Index ``i`` drawn with probability ``p[i] / sum(p)``."""
        cdf = np.cumsum(p)
        u = self.uniform() * cdf[-1]
        i = int(np.searchsorted(cdf, u, side="right"))
        # u < cdf[-1] always, but guard against trailing zero-probability entries
        return min(i, len(cdf) - 1)

    # continuous distributions ----------------------------------------------------

    def exponential(self, size, scale: float = 1.0) -> np.ndarray:
        """Exponential draws via ``-scale * log(1 - U)``."""
        return -scale * np.log1p(-self.uniform(size))

    def gumbel(self, size, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """Gumbel (max) draws via ``loc - scale * log(-log U)``."""
        return loc - scale * np.log(-np.log(self._open_uniform(size)))

    def normal(self, size) -> np.ndarray:
        """Standard normal draws by the Box-Muller transform."""
        n = int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = self._open_uniform(pairs)
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(size)
