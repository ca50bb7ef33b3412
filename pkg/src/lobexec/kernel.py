"""Discrete-event market session: clock, event queue, exchange state.

Events are processed in (timestamp, sequence) order; the sequence number
is a global counter so identical (config, seed) pairs replay identically.
Order delivery is instantaneous (zero latency); ties are broken by
submission order.
"""

from __future__ import annotations

import bisect
import csv
import heapq
import io
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    Agent,
    MarketMakerAgent,
    MarketMakerParams,
    MomentumAgent,
    MomentumAgentParams,
    NoiseAgent,
    NoiseAgentParams,
    ValueAgent,
    ValueAgentParams,
)
from .fundamental import FundamentalParams, FundamentalPath, Oracle, OracleParams
from .lob import Fill, MarketOrderResult, Order, OrderBook, Side

NS_PER_SEC = 1_000_000_000


@dataclass
class MarketConfig:
    n_noise: int = 1000
    n_value: int = 102
    n_momentum: int = 12
    n_market_maker: int = 1
    session_seconds: float = 1800.0
    snapshot_interval_s: float = 1.0
    depth: int = 10
    history: int = 500  # snapshot ring buffer length for agent queries
    fundamental: FundamentalParams = field(default_factory=FundamentalParams)
    oracle: OracleParams = field(default_factory=OracleParams)
    noise: NoiseAgentParams = field(default_factory=NoiseAgentParams)
    value: ValueAgentParams = field(default_factory=ValueAgentParams)
    momentum: MomentumAgentParams = field(default_factory=MomentumAgentParams)
    market_maker: MarketMakerParams = field(default_factory=MarketMakerParams)

    def validate(self) -> None:
        for name in ("n_noise", "n_value", "n_momentum", "n_market_maker"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.session_seconds <= 0:
            raise ValueError("session_seconds must be positive")
        if self.depth < 1 or self.history < 1:
            raise ValueError("depth and history must be >= 1")
        self.fundamental.validate()
        self.oracle.validate()


@dataclass
class SessionLog:
    snapshots: list = field(default_factory=list)  # (ts, BookSnapshot, fundamental)
    fills: list = field(default_factory=list)      # Fill records

    def snapshots_csv(self, depth: int = 10) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["ts", "fundamental", "best_bid", "best_ask"]
        for i in range(1, depth + 1):
            header += [f"bid_px_{i}", f"bid_qty_{i}", f"ask_px_{i}", f"ask_qty_{i}"]
        w.writerow(header)
        for ts, snap, fund in self.snapshots:
            row = [ts, repr(fund), snap.best_bid, snap.best_ask]
            for i in range(depth):
                bid = snap.bids[i] if i < len(snap.bids) else ("", "")
                ask = snap.asks[i] if i < len(snap.asks) else ("", "")
                row += [bid[0], bid[1], ask[0], ask[1]]
            w.writerow(row)
        return buf.getvalue()

    def fills_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ts", "side", "price", "qty", "taker_agent", "maker_agent"])
        for f in self.fills:
            w.writerow([f.ts, f.side.value, f.price, f.qty,
                        f.taker_agent_id, f.maker_agent_id])
        return buf.getvalue()

    def fundamental_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ts", "fundamental"])
        for ts, _, fund in self.snapshots:
            w.writerow([ts, repr(fund)])
        return buf.getvalue()


class MarketSession:
    """One seeded market run. Single-threaded; one instance per episode."""

    def __init__(self, config: MarketConfig, seed: int, hooks: dict | None = None):
        config.validate()
        self.config = config
        self.seed = seed
        self.hooks = hooks or {}
        self.now = 0
        self.session_end = int(config.session_seconds * NS_PER_SEC)

        seed_seq = np.random.SeedSequence(seed)
        self._fundamental = FundamentalPath(
            config.fundamental,
            np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,))))
        self._oracle = Oracle(self._fundamental, seed_seq)

        self.book = OrderBook()
        self.log = SessionLog()
        self._next_order_id = 1
        self._event_seq = 0
        self._queue: list[tuple[int, int, object]] = []
        self._mid_history: deque = deque(maxlen=config.history)
        self._fill_ts: list[int] = []
        self._fill_qty_cum: list[int] = [0]
        self._last_trade: int | None = None
        self._last_event_key = (-1, -1)

        self.agents: list[Agent] = []
        aid = 1
        for _ in range(config.n_market_maker):
            self.agents.append(MarketMakerAgent(aid, self._agent_rng(seed, aid),
                                                config.market_maker))
            aid += 1
        for _ in range(config.n_value):
            self.agents.append(ValueAgent(aid, self._agent_rng(seed, aid), config.value))
            aid += 1
        for _ in range(config.n_momentum):
            self.agents.append(MomentumAgent(aid, self._agent_rng(seed, aid),
                                             config.momentum))
            aid += 1
        for _ in range(config.n_noise):
            self.agents.append(NoiseAgent(aid, self._agent_rng(seed, aid), config.noise))
            aid += 1

        for agent in self.agents:
            self._schedule(agent.first_wakeup(), agent)
        self._schedule(0, "snapshot")

    @staticmethod
    def _agent_rng(seed: int, agent_id: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(2, agent_id)))

    # -- exchange interface used by agents --------------------------------

    def oracle_observe(self, agent_id: int, ts: int, noise_std: float = 0.0) -> float:
        return self._oracle.observe(agent_id, ts, noise_std)

    def fundamental_value(self, ts: int) -> float:
        return self._fundamental.value(ts)

    def mid_history(self) -> list[float]:
        return list(self._mid_history)

    def last_trade_price(self) -> int | None:
        return self._last_trade

    def transacted_volume(self, now: int, window_ns: int) -> int:
        start = bisect.bisect_left(self._fill_ts, now - window_ns)
        return self._fill_qty_cum[-1] - self._fill_qty_cum[start]

    def _record_fills(self, fills) -> None:
        for f in fills:
            self.log.fills.append(f)
            self._fill_ts.append(f.ts)
            self._fill_qty_cum.append(self._fill_qty_cum[-1] + f.qty)
            self._last_trade = f.price

    def submit_limit(self, agent_id: int, side: Side, price: int, qty: int,
                     ts: int) -> int:
        oid = self._next_order_id
        self._next_order_id += 1
        fills, _ = self.book.submit_limit(
            Order(id=oid, agent_id=agent_id, side=side, qty=qty, price=price, ts=ts))
        self._record_fills(fills)
        return oid

    def submit_market(self, agent_id: int, side: Side, qty: int,
                      ts: int) -> MarketOrderResult:
        oid = self._next_order_id
        self._next_order_id += 1
        result = self.book.submit_market(side, qty, agent_id, ts, order_id=oid)
        self._record_fills(result.fills)
        return result

    def cancel(self, order_id: int) -> bool:
        return self.book.cancel(order_id)

    # -- event loop --------------------------------------------------------

    def _schedule(self, delay_or_ts: int, payload, absolute: bool = False) -> None:
        ts = delay_or_ts if absolute else self.now + delay_or_ts
        if ts > self.session_end:
            return
        self._event_seq += 1
        heapq.heappush(self._queue, (ts, self._event_seq, payload))

    def _take_snapshot(self, ts: int) -> None:
        snap = self.book.snapshot(self.config.depth, ts)
        fund = self._fundamental.value(ts)
        self.log.snapshots.append((ts, snap, fund))
        mid = snap.mid
        if mid is not None:
            self._mid_history.append(float(mid))

    def run_until(self, t: int) -> None:
        """Process every event with ts <= t, then set the clock to t."""
        t = min(t, self.session_end)
        on_event = self.hooks.get("on_event")
        while self._queue and self._queue[0][0] <= t:
            ts, seq, payload = heapq.heappop(self._queue)
            assert (ts, seq) > self._last_event_key, "event order violated"
            self._last_event_key = (ts, seq)
            self.now = ts
            if on_event is not None:
                on_event(ts, seq)
            if payload == "snapshot":
                self._take_snapshot(ts)
                self._schedule(int(self.config.snapshot_interval_s * NS_PER_SEC),
                               "snapshot")
            else:
                delay = payload.wakeup(ts, self)
                if delay is not None:
                    self._schedule(max(1, delay), payload)
        self.now = max(self.now, t)

    def run(self) -> SessionLog:
        self.run_until(self.session_end)
        return self.log


def kernel_run(config: MarketConfig, seed: int, hooks: dict | None = None) -> SessionLog:
    """Run a full background-only session and return its log."""
    return MarketSession(config, seed, hooks).run()
