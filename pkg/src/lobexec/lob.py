"""Limit order book with price-time (FIFO) priority matching.

Prices live in integer ticks (1 tick = 1 cent) so matching never touches
floating point. Fractional quantities (mid price, average fill price,
volume imbalance) are returned as exact ``fractions.Fraction`` values.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional


class Side(Enum):
    BID = "bid"
    ASK = "ask"

    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class DuplicateOrderError(ValueError):
    """Raised when an order id is submitted twice."""


@dataclass
class Order:
    id: int
    agent_id: int
    side: Side
    qty: int
    price: Optional[int] = None  # None for market orders
    ts: int = 0
    seq: int = 0


@dataclass(frozen=True)
class Fill:
    taker_order_id: int
    maker_order_id: int
    taker_agent_id: int
    maker_agent_id: int
    side: Side  # taker side
    price: int
    qty: int
    ts: int


@dataclass(frozen=True)
class MarketOrderResult:
    fills: tuple[Fill, ...]
    avg_price: Optional[Fraction]  # None when nothing filled
    depth_consumed: int  # distinct price levels touched minus one, 0 if no fill
    unfilled: int

    @property
    def filled(self) -> int:
        return sum(f.qty for f in self.fills)


@dataclass(frozen=True)
class BookSnapshot:
    ts: int
    bids: tuple[tuple[int, int], ...]  # (price, qty) best-first
    asks: tuple[tuple[int, int], ...]

    @property
    def best_bid(self) -> Optional[int]:
        return self.bids[0][0] if self.bids else None

    @property
    def best_ask(self) -> Optional[int]:
        return self.asks[0][0] if self.asks else None

    @property
    def mid(self) -> Optional[Fraction]:
        if self.bids and self.asks:
            return Fraction(self.bids[0][0] + self.asks[0][0], 2)
        return None


class _Level:
    __slots__ = ("price", "queue", "total_qty")

    def __init__(self, price: int):
        self.price = price
        self.queue: deque[Order] = deque()
        self.total_qty = 0


class OrderBook:
    """Two price ladders with FIFO queues per level.

    Single-threaded mutable structure. ``event_log`` receives one CSV line
    per submit/cancel/fill when set.
    """

    def __init__(self, event_log: Optional[Callable[[str], None]] = None):
        self._bid_prices: list[int] = []  # ascending; best bid = last
        self._ask_prices: list[int] = []  # ascending; best ask = first
        self._bids: dict[int, _Level] = {}
        self._asks: dict[int, _Level] = {}
        self._orders: dict[int, Order] = {}  # resting only
        self._seq = 0
        self.event_log = event_log

    # -- queries ---------------------------------------------------------

    def best_bid(self) -> Optional[int]:
        return self._bid_prices[-1] if self._bid_prices else None

    def best_ask(self) -> Optional[int]:
        return self._ask_prices[0] if self._ask_prices else None

    def mid_price(self) -> Optional[Fraction]:
        bb, ba = self.best_bid(), self.best_ask()
        if bb is None or ba is None:
            return None
        return Fraction(bb + ba, 2)

    def spread(self) -> Optional[int]:
        bb, ba = self.best_bid(), self.best_ask()
        if bb is None or ba is None:
            return None
        return ba - bb

    def _levels_best_first(self, side: Side):
        if side is Side.BID:
            for price in reversed(self._bid_prices):
                yield self._bids[price]
        else:
            for price in self._ask_prices:
                yield self._asks[price]

    def total_depth(self, side: Side, k: int) -> int:
        """Cumulative resting volume over the top-k levels of one side."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        total = 0
        for i, level in enumerate(self._levels_best_first(side)):
            if i >= k:
                break
            total += level.total_qty
        return total

    def volume_imbalance(self, side: Side, k: int) -> Fraction:
        """Top-k depth share of one side; 1/2 when both sides are empty."""
        own = self.total_depth(side, k)
        other = self.total_depth(side.opposite(), k)
        if own + other == 0:
            return Fraction(1, 2)
        return Fraction(own, own + other)

    def snapshot(self, d: int = 10, ts: int = 0) -> BookSnapshot:
        if d < 1:
            raise ValueError(f"snapshot depth must be >= 1, got {d}")
        bids = tuple(
            (lv.price, lv.total_qty)
            for i, lv in enumerate(self._levels_best_first(Side.BID))
            if i < d
        )
        asks = tuple(
            (lv.price, lv.total_qty)
            for i, lv in enumerate(self._levels_best_first(Side.ASK))
            if i < d
        )
        return BookSnapshot(ts=ts, bids=bids, asks=asks)

    def order_ids(self, agent_id: Optional[int] = None) -> list[int]:
        if agent_id is None:
            return list(self._orders)
        return [oid for oid, o in self._orders.items() if o.agent_id == agent_id]

    # -- mutation --------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _get_level(self, side: Side, price: int) -> _Level:
        ladder = self._bids if side is Side.BID else self._asks
        if price not in ladder:
            ladder[price] = _Level(price)
            prices = self._bid_prices if side is Side.BID else self._ask_prices
            bisect.insort(prices, price)
        return ladder[price]

    def _drop_level(self, side: Side, price: int) -> None:
        ladder = self._bids if side is Side.BID else self._asks
        del ladder[price]
        prices = self._bid_prices if side is Side.BID else self._ask_prices
        prices.remove(price)

    def _log(self, kind: str, side: Side, price, qty: int, oid: int, aid: int, ts: int):
        if self.event_log is not None:
            p = "" if price is None else price
            self.event_log(f"{ts},{kind},{side.value},{p},{qty},{oid},{aid}")

    def _match(self, taker: Order, limit_price: Optional[int]) -> list[Fill]:
        """Walk the opposite ladder best-first, FIFO within each level."""
        fills: list[Fill] = []
        opp = taker.side.opposite()
        while taker.qty > 0:
            levels = self._levels_best_first(opp)
            level = next(levels, None)
            if level is None:
                break
            if limit_price is not None:
                if taker.side is Side.BID and level.price > limit_price:
                    break
                if taker.side is Side.ASK and level.price < limit_price:
                    break
            while taker.qty > 0 and level.queue:
                maker = level.queue[0]
                traded = min(taker.qty, maker.qty)
                fill = Fill(
                    taker_order_id=taker.id,
                    maker_order_id=maker.id,
                    taker_agent_id=taker.agent_id,
                    maker_agent_id=maker.agent_id,
                    side=taker.side,
                    price=level.price,
                    qty=traded,
                    ts=taker.ts,
                )
                fills.append(fill)
                self._log("fill", taker.side, level.price, traded, taker.id, taker.agent_id, taker.ts)
                taker.qty -= traded
                maker.qty -= traded
                level.total_qty -= traded
                if maker.qty == 0:
                    level.queue.popleft()
                    del self._orders[maker.id]
            if not level.queue:
                self._drop_level(opp, level.price)
        return fills

    def submit_limit(self, order: Order) -> tuple[list[Fill], int]:
        """Match a limit order against the book; rest any residual.

        Returns (fills, resting_qty). The book is never crossed afterward.
        """
        if order.qty <= 0:
            raise ValueError("limit order qty must be positive")
        if order.price is None or order.price <= 0:
            raise ValueError("limit order needs a positive price")
        if order.id in self._orders:
            raise DuplicateOrderError(f"order id {order.id} already resting")
        order.seq = self._next_seq()
        self._log("submit", order.side, order.price, order.qty, order.id, order.agent_id, order.ts)
        fills = self._match(order, order.price)
        resting = order.qty
        if resting > 0:
            level = self._get_level(order.side, order.price)
            level.queue.append(order)
            level.total_qty += resting
            self._orders[order.id] = order
        return fills, resting

    def submit_market(self, side: Side, qty: int, agent_id: int, ts: int = 0,
                      order_id: Optional[int] = None) -> MarketOrderResult:
        """Execute immediately against the opposite ladder; never rests."""
        if qty <= 0:
            raise ValueError("market order qty must be positive")
        seq = self._next_seq()
        oid = order_id if order_id is not None else -seq
        taker = Order(id=oid, agent_id=agent_id, side=side, qty=qty, ts=ts, seq=seq)
        self._log("submit", side, None, qty, oid, agent_id, ts)
        fills = self._match(taker, limit_price=None)
        filled = sum(f.qty for f in fills)
        if filled:
            avg = Fraction(sum(f.price * f.qty for f in fills), filled)
            depth = len({f.price for f in fills}) - 1
        else:
            avg, depth = None, 0
        return MarketOrderResult(
            fills=tuple(fills), avg_price=avg, depth_consumed=depth, unfilled=qty - filled
        )

    def cancel(self, order_id: int) -> bool:
        """Remove a resting order; False if unknown or already gone."""
        order = self._orders.pop(order_id, None)
        if order is None:
            return False
        ladder = self._bids if order.side is Side.BID else self._asks
        level = ladder[order.price]
        level.queue.remove(order)
        level.total_qty -= order.qty
        if not level.queue:
            self._drop_level(order.side, order.price)
        self._log("cancel", order.side, order.price, order.qty, order.id, order.agent_id, order.ts)
        return True
