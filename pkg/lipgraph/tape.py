"""Random tapes: explicit streams of uniform [0, 1) draws.

A tape is the only source of randomness for the rounding schemes. Two runs
that read the same tape in the same order are coupled by shared randomness;
every rounding function documents the order in which it reads its draws.
"""

import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .enforce_types import enforce_types
from .exceptions import ParameterError, TapeExhaustedError

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256


@enforce_types
class RandomTape:
    """Uniform draws from a seeded PCG64 stream, or from an explicit list.

    Draws are handed out once each; ``counter`` is the number consumed so far.
    """

    def __init__(self, seed: Optional[int] = None, draws: Optional[Sequence[float]] = None,
                 spawn_key: tuple = ()):
        if (seed is None) == (draws is None):
            raise ParameterError("RandomTape needs exactly one of seed or draws")
        self.seed = seed
        self.spawn_key = tuple(spawn_key)
        self.counter = 0
        self._buffer: np.ndarray
        self._finite = draws is not None
        if draws is not None:
            values = np.asarray(list(draws), dtype=float)
            if values.size and (values.min() < 0.0 or values.max() >= 1.0):
                raise ParameterError("explicit tape draws must lie in [0, 1)")
            self._buffer = values
            self._rng = None
        else:
            sequence = np.random.SeedSequence(entropy=seed, spawn_key=self.spawn_key)
            self._rng = np.random.Generator(np.random.PCG64(sequence))
            self._buffer = np.empty(0)
        self._position = 0

    @staticmethod
    def from_draws(draws: Iterable[float]) -> "RandomTape":
        return RandomTape(draws=list(draws))

    def spawn(self, *key: int) -> "RandomTape":
        """Independent child tape addressed by ``key`` (e.g. the trial index)."""
        if self._finite:
            raise ParameterError("explicit tapes cannot spawn children")
        return RandomTape(seed=self.seed, spawn_key=self.spawn_key + tuple(int(k) for k in key))

    def twin(self) -> "RandomTape":
        """Fresh tape replaying this tape's stream from the beginning."""
        if self._finite:
            return RandomTape(draws=self._buffer.tolist())
        return RandomTape(seed=self.seed, spawn_key=self.spawn_key)

    def _refill(self):
        if self._finite:
            raise TapeExhaustedError(f"explicit tape exhausted after {self.counter} draws")
        self._buffer = self._rng.random(BLOCK_SIZE)
        self._position = 0

    def uniform(self) -> float:
        if self._position >= self._buffer.size:
            self._refill()
        value = float(self._buffer[self._position])
        self._position += 1
        self.counter += 1
        return value

    def uniforms(self, count: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(count)], dtype=float)

    def index(self, size: int) -> int:
        """Uniform integer in [0, size) from a single draw."""
        if size < 1:
            raise ParameterError("index() needs size >= 1")
        return min(int(self.uniform() * size), size - 1)

    def choice(self, probabilities: Iterable[float]) -> Optional[int]:
        """Inverse-CDF choice over a fixed index order from a single draw.

        Probabilities may sum to less than one; the leftover mass returns None.
        """
        u = self.uniform()
        return inverse_cdf(probabilities, u)

    def __repr__(self):
        origin = "explicit" if self._finite else f"seed={self.seed}, key={self.spawn_key}"
        return f"RandomTape({origin}, counter={self.counter})"


def inverse_cdf(probabilities: Iterable[float], u: float) -> Optional[int]:
    cumulative = 0.0
    for i, p in enumerate(probabilities):
        cumulative += float(p)
        if u < cumulative:
            return i
    return None


def trial_tapes(seed: int, trials: int) -> List[RandomTape]:
    master = RandomTape(seed=seed)
    return [master.spawn(t) for t in range(trials)]
