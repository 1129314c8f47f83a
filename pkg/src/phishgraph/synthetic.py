"""Synthetic labeled corpora with planted phishing behavior.

The generator mirrors the drain pattern described for real campaigns: a
phishing address accumulates transfers from ordinary senders, sits dormant,
then fires a tight burst of outgoing transactions during early-morning hours.
Benign addresses transact uniformly over the observation window, which gives
them long inter-transaction gaps and flat hour-of-day profiles.

Every numeric choice funnels through one seeded generator, so a fixed seed
reproduces the corpus byte for byte. Signal strength is configurable: the
per-class value distributions and burst shape can be pushed together to make
hard corpora or apart to make separable ones.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .txmodel import Address, Label, LabeledDataset, LabelProvenance, Transaction

# Fixed end of the observation window (2023-11-14 22:13:20 UTC). Pinned so
# generated corpora depend only on the config, never on the wall clock.
WINDOW_END = 1_700_000_000
_BLOCK_SECONDS = 12
_GENESIS = 1_438_000_000  # anchor for mapping timestamps to block numbers


@dataclass(frozen=True)
class SyntheticConfig:
    n_benign_addresses: int = 400
    n_phishing_addresses: int = 100
    # sent transactions per benign address
    tx_per_address_range: tuple[int, int] = (4, 12)
    # regular counterparties per benign address; ordinary traffic stays inside
    # this peer set, which keeps the graph clustered instead of fully mixed
    benign_peer_count_range: tuple[int, int] = (2, 4)
    # incoming transfers a phishing address accumulates before draining
    phishing_victim_tx_range: tuple[int, int] = (4, 10)
    # outgoing burst size of a phishing address
    phishing_burst_tx_range: tuple[int, int] = (15, 30)
    # distinct drain destinations per phishing address; bursts reuse them, so
    # the address fires many transactions without becoming a graph hub
    phishing_mule_count_range: tuple[int, int] = (2, 4)
    # campaigns share consolidation addresses: all drains land inside one
    # small pool of benign addresses instead of spraying the whole population
    phishing_mule_pool_size: int = 10
    # fraction of phishing addresses that drain conspicuously large values;
    # the rest keep benign-looking per-transaction values and are only
    # separable through behavioral (timing/count) features
    phishing_high_value_fraction: float = 0.4
    # UTC hours [lo, hi) in which burst transactions fire
    phishing_burst_hour_range: tuple[int, int] = (2, 4)
    # minimum days between window start and a phishing burst
    phishing_dormancy_days: int = 30
    window_days: int = 180
    # log-space wei value distributions per class (lognormal mu / sigma)
    benign_value_log_mu: float = 38.4
    benign_value_log_sigma: float = 1.0
    phishing_value_log_mu: float = 40.5
    phishing_value_log_sigma: float = 1.0
    # gas price levels per class (equal by default; raise the phishing level
    # to plant an explicit gas signal)
    benign_gas_price_log_mu: float = 23.7
    phishing_gas_price_log_mu: float = 23.7
    gas_price_log_sigma: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        if self.n_benign_addresses < 1:
            raise InvalidConfig("need at least one benign address")
        if self.n_phishing_addresses < 0:
            raise InvalidConfig("phishing address count cannot be negative")
        for name in (
            "tx_per_address_range",
            "benign_peer_count_range",
            "phishing_victim_tx_range",
            "phishing_burst_tx_range",
            "phishing_mule_count_range",
        ):
            lo, hi = getattr(self, name)
            if lo < 1 or lo > hi:
                raise InvalidConfig(f"{name} must satisfy 1 <= min <= max")
        h_lo, h_hi = self.phishing_burst_hour_range
        if not (0 <= h_lo <= h_hi <= 23):
            raise InvalidConfig("burst hours must lie within [0, 23] with min <= max")
        if self.window_days < 3:
            raise InvalidConfig("window must span at least three days")
        if not 0 <= self.phishing_dormancy_days <= self.window_days - 2:
            raise InvalidConfig("dormancy must leave room for a burst day")
        if self.benign_value_log_sigma <= 0 or self.phishing_value_log_sigma <= 0:
            raise InvalidConfig("value sigmas must be positive")
        if self.gas_price_log_sigma <= 0:
            raise InvalidConfig("gas price sigma must be positive")
        if self.phishing_mule_pool_size < 1:
            raise InvalidConfig("mule pool must contain at least one address")
        if not 0.0 <= self.phishing_high_value_fraction <= 1.0:
            raise InvalidConfig("high-value fraction must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "n_benign_addresses": self.n_benign_addresses,
            "n_phishing_addresses": self.n_phishing_addresses,
            "tx_per_address_range": list(self.tx_per_address_range),
            "benign_peer_count_range": list(self.benign_peer_count_range),
            "phishing_victim_tx_range": list(self.phishing_victim_tx_range),
            "phishing_burst_tx_range": list(self.phishing_burst_tx_range),
            "phishing_mule_count_range": list(self.phishing_mule_count_range),
            "phishing_mule_pool_size": self.phishing_mule_pool_size,
            "phishing_high_value_fraction": self.phishing_high_value_fraction,
            "phishing_burst_hour_range": list(self.phishing_burst_hour_range),
            "phishing_dormancy_days": self.phishing_dormancy_days,
            "window_days": self.window_days,
            "benign_value_log_mu": self.benign_value_log_mu,
            "benign_value_log_sigma": self.benign_value_log_sigma,
            "phishing_value_log_mu": self.phishing_value_log_mu,
            "phishing_value_log_sigma": self.phishing_value_log_sigma,
            "benign_gas_price_log_mu": self.benign_gas_price_log_mu,
            "phishing_gas_price_log_mu": self.phishing_gas_price_log_mu,
            "gas_price_log_sigma": self.gas_price_log_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "SyntheticConfig":
        kwargs = dict(payload)
        for name in (
            "tx_per_address_range",
            "benign_peer_count_range",
            "phishing_victim_tx_range",
            "phishing_burst_tx_range",
            "phishing_mule_count_range",
            "phishing_burst_hour_range",
        ):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise InvalidConfig(f"bad synthetic config: {exc}") from None
        cfg.validate()
        return cfg


def _tx_hash(counter: int) -> str:
    return "0x" + hashlib.sha256(f"synthetic-tx-{counter}".encode()).hexdigest()


def _fresh_address(rng: np.random.Generator, taken: set[str]) -> Address:
    while True:
        addr = Address("0x" + bytes(rng.integers(0, 256, 20, dtype=np.uint8)).hex())
        if addr not in taken:
            taken.add(addr)
            return addr


class _TxBuilder:
    """Accumulates transactions with deterministic hashes and block numbers."""

    def __init__(self, rng: np.random.Generator, gas_price_sigma: float):
        self.rng = rng
        self.gas_price_sigma = gas_price_sigma
        self.txs: list[Transaction] = []
        self._counter = 0

    def add(
        self, ts: int, sender: Address, receiver: Address, value: int,
        gas_price_mu: float,
    ) -> None:
        rng = self.rng
        gas_used = int(rng.integers(21_000, 80_001))
        gas = gas_used + int(rng.integers(0, 20_001))
        gas_price = int(rng.lognormal(gas_price_mu, self.gas_price_sigma))
        self.txs.append(
            Transaction(
                block_number=(ts - _GENESIS) // _BLOCK_SECONDS,
                timestamp=ts,
                tx_hash=_tx_hash(self._counter),
                sender=sender,
                receiver=receiver,
                value=value,
                gas=gas,
                gas_price=gas_price,
                gas_used=gas_used,
            )
        )
        self._counter += 1


def _value(rng: np.random.Generator, mu: float, sigma: float) -> int:
    return max(1, int(rng.lognormal(mu, sigma)))


def generate_synthetic(cfg: SyntheticConfig) -> LabeledDataset:
    """Generate a labeled corpus; deterministic for a fixed config."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    window_start = WINDOW_END - cfg.window_days * 86_400

    taken: set[str] = set()
    benign = [_fresh_address(rng, taken) for _ in range(cfg.n_benign_addresses)]
    phishing = [_fresh_address(rng, taken) for _ in range(cfg.n_phishing_addresses)]
    builder = _TxBuilder(rng, cfg.gas_price_log_sigma)

    # Background traffic: benign addresses send to other benign addresses at
    # uniformly random times, so their hour histograms are flat and their
    # inter-transaction gaps are on the order of days to weeks.
    p_lo, p_hi = cfg.benign_peer_count_range
    for addr in benign:
        peer_ids = rng.integers(
            0, len(benign), size=int(rng.integers(p_lo, p_hi + 1))
        )
        lo, hi = cfg.tx_per_address_range
        n = int(rng.integers(lo, hi + 1))
        for _ in range(n):
            ts = int(rng.integers(window_start, WINDOW_END))
            receiver = benign[int(peer_ids[int(rng.integers(0, len(peer_ids)))])]
            builder.add(
                ts,
                addr,
                receiver,
                _value(rng, cfg.benign_value_log_mu, cfg.benign_value_log_sigma),
                cfg.benign_gas_price_log_mu,
            )

    # Phishing lifecycle: accumulate victim transfers, stay dormant on the
    # sending side, then drain in a tight early-morning burst. Drains cycle
    # over a few mules drawn from one shared consolidation pool, and only a
    # fraction of campaigns move conspicuously large values.
    h_lo, h_hi = cfg.phishing_burst_hour_range
    first_day = -(-window_start // 86_400)  # first full UTC day in the window
    last_day = WINDOW_END // 86_400         # exclusive
    pool_size = min(cfg.phishing_mule_pool_size, len(benign))
    mule_pool = rng.integers(0, len(benign), size=pool_size)
    for addr in phishing:
        burst_day = 86_400 * int(
            rng.integers(first_day + cfg.phishing_dormancy_days, last_day)
        )
        high_value = rng.random() < cfg.phishing_high_value_fraction
        drain_mu = cfg.phishing_value_log_mu if high_value else cfg.benign_value_log_mu
        drain_sigma = (
            cfg.phishing_value_log_sigma if high_value else cfg.benign_value_log_sigma
        )

        lo, hi = cfg.phishing_victim_tx_range
        for _ in range(int(rng.integers(lo, hi + 1))):
            ts = int(rng.integers(window_start, max(burst_day, window_start + 1)))
            victim = benign[int(rng.integers(0, len(benign)))]
            builder.add(
                ts,
                victim,
                addr,
                _value(rng, cfg.benign_value_log_mu, cfg.benign_value_log_sigma),
                cfg.benign_gas_price_log_mu,
            )

        m_lo, m_hi = cfg.phishing_mule_count_range
        n_mules = min(int(rng.integers(m_lo, m_hi + 1)), pool_size)
        mule_ids = mule_pool[rng.integers(0, pool_size, size=n_mules)]
        lo, hi = cfg.phishing_burst_tx_range
        second_lo = h_lo * 3_600
        second_hi = max(second_lo + 1, (h_hi if h_hi > h_lo else h_lo + 1) * 3_600)
        for k in range(int(rng.integers(lo, hi + 1))):
            ts = burst_day + int(rng.integers(second_lo, second_hi))
            mule = benign[int(mule_ids[k % len(mule_ids)])]
            builder.add(
                ts,
                addr,
                mule,
                _value(rng, drain_mu, drain_sigma),
                cfg.phishing_gas_price_log_mu,
            )

    transactions = sorted(builder.txs, key=lambda tx: (tx.timestamp, tx.tx_hash))
    labels: dict[Address, Label] = {}
    provenance: dict[Address, LabelProvenance] = {}
    for addr in benign:
        labels[addr] = Label.BENIGN
        provenance[addr] = LabelProvenance.SYNTHETIC
    for addr in phishing:
        labels[addr] = Label.PHISHING
        provenance[addr] = LabelProvenance.SYNTHETIC
    return LabeledDataset(tuple(transactions), labels, provenance)
