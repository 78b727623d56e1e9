"""Synthetic phasor measurement noise with one random stream per bus."""

from __future__ import annotations

import numpy as np

from ..grid import PhasorSnapshot
from .scenario import NoiseModel


class NoiseStreams:
    """Independent Gaussian streams keyed by bus id.

    Each bus draws from ``default_rng([seed, bus_id])``, so adding or
    removing a bus leaves every other bus's sequence unchanged.  Draws are
    buffered in chunks; the per-bus sequence does not depend on chunk size.
    """

    def __init__(self, bus_ids, seed: int, chunk: int = 4096):
        self.bus_ids = tuple(bus_ids)
        self._rngs = [np.random.default_rng([seed, b]) for b in self.bus_ids]
        self._chunk = chunk
        self._buf = np.empty((len(self.bus_ids), 0, 2))
        self._pos = 0

    def next(self) -> np.ndarray:
        """One standard-normal ``(v, theta)`` pair per bus, shape ``(n_bus, 2)``."""
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([r.standard_normal((self._chunk, 2)) for r in self._rngs])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


def sample_measurement(snapshot: PhasorSnapshot, noise: NoiseModel,
                       streams: NoiseStreams) -> PhasorSnapshot:
    """Add zero-mean Gaussian noise to every magnitude and angle.

    The streams must be ordered like the snapshot.  With zero sigmas the
    snapshot is returned unchanged and no draws are consumed.
    """
    if not noise.enabled:
        return snapshot
    e = streams.next()
    return PhasorSnapshot(snapshot.theta + noise.sigma_theta * e[:, 1],
                          snapshot.v_mag + noise.sigma_vmag * e[:, 0], snapshot.timestamp)
