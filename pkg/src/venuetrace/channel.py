"""BLE proximity channel: log-distance path loss with optional noise.

Received power is tx_dbm - (reference_loss_db + 10 * exponent * log10(d)),
strictly decreasing in distance, with zero reception beyond ``max_range_m``.
The risk-scoring signal threshold is the noiseless received power at the
exposure distance, so with zero noise "within d meters" and "at or above
the threshold" coincide by construction.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

MIN_DISTANCE_M = 0.1


@dataclass(frozen=True)
class ChannelModel:
    max_range_m: float = 15.0
    tx_dbm: float = 0.0
    path_loss_exponent: float = 2.0
    reference_loss_db: float = 40.0  # loss at 1 m
    noise_sigma_db: float = 0.0
    reception_prob: float = 1.0

    def path_loss_db(self, distance_m: float) -> float:
        d = max(distance_m, MIN_DISTANCE_M)
        return self.reference_loss_db + 10.0 * self.path_loss_exponent * math.log10(d)

    def rx_dbm(
        self,
        distance_m: float,
        rng: random.Random | None = None,
        tx_dbm: float | None = None,
    ) -> float | None:
        """Received power, or None when out of range or the reception draw fails."""
        if distance_m > self.max_range_m:
            return None
        if self.reception_prob < 1.0:
            if rng is None or rng.random() >= self.reception_prob:
                return None
        tx = self.tx_dbm if tx_dbm is None else tx_dbm
        power = tx - self.path_loss_db(distance_m)
        if self.noise_sigma_db > 0.0 and rng is not None:
            power += rng.gauss(0.0, self.noise_sigma_db)
        return power

    def threshold_dbm(self, distance_m: float) -> float:
        """Noiseless received power at exactly ``distance_m`` (honest tx)."""
        return self.tx_dbm - self.path_loss_db(distance_m)
