"""Named block rules for piecewise-constant sequences.

A rule produces blocks ``(n_k, eps_k)`` for k = 1, 2, ...; the sequence takes
the value ``eps_k`` on ``(n_{k-1}, n_k]`` with ``n_0 = 0``.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple


@dataclass
class BlockRule:
    name: str
    breakpoint: Callable[[int, int], int]  # (k, n_{k-1}) -> n_k
    value: Callable[[int, int], Fraction]  # (k, n_k) -> eps_k
    mass_after: Callable[[int], Fraction]  # upper bound on sum_{k>K} eps_k (n_k - n_{k-1})
    weighted_tail: Optional[Callable[[int], Fraction]] = None  # sum_{j>k} eps_j n_j
    log_summable: Callable[[int], str] = lambda m: "yes"
    description: str = ""

    def __post_init__(self):
        self._blocks: List[Tuple[int, Fraction]] = []
        self._lock = threading.Lock()

    def blocks_until(self, n: int) -> List[Tuple[int, Fraction]]:
        """Generate blocks until the last breakpoint reaches index n."""
        bl = self._blocks
        if bl and bl[-1][0] >= n:
            return bl
        with self._lock:
            while not bl or bl[-1][0] < n:
                self._extend()
        return bl

    def blocks(self, K: int) -> List[Tuple[int, Fraction]]:
        bl = self._blocks
        if len(bl) < K:
            with self._lock:
                while len(bl) < K:
                    self._extend()
        return bl[:K]

    def _extend(self) -> None:
        bl = self._blocks
        k = len(bl) + 1
        prev = bl[-1][0] if bl else 0
        nk = int(self.breakpoint(k, prev))
        bl.append((nk, Fraction(self.value(k, nk))))

    def log_weighted_summable(self, m: int) -> str:
        return self.log_summable(m)


def _superfactorial_rule() -> BlockRule:
    # n_k = k! n_{k-1}, eps_k = 4^-k / n_k, so eps_k n_k = 4^-k
    return BlockRule(
        name="ex45iii",
        breakpoint=lambda k, prev: 1 if k == 1 else math.factorial(k) * prev,
        value=lambda k, nk: Fraction(1, 4 ** k * nk),
        mass_after=lambda K: Fraction(1, 3 * 4 ** K),
        weighted_tail=lambda k: Fraction(1, 3 * 4 ** k),
        # ln n_k <= k^2 ln k, and sum 4^-k k^{2m} ln^m k converges for every m
        log_summable=lambda m: "yes",
        description="n_k = k! n_{k-1}, eps_k = 4^-k / n_k",
    )


def _factorial_rule() -> BlockRule:
    # n_k = k!, eps_k = 2^-k / k!, so eps_k n_k = 2^-k
    return BlockRule(
        name="ex45iii-fact",
        breakpoint=lambda k, prev: math.factorial(k),
        value=lambda k, nk: Fraction(1, 2 ** k * nk),
        mass_after=lambda K: Fraction(1, 2 ** K),
        weighted_tail=lambda k: Fraction(1, 2 ** k),
        log_summable=lambda m: "yes",
        description="n_k = k!, eps_k = 2^-k / k!",
    )


def _squared_factorial_rule() -> BlockRule:
    # m_k = (k!)^2, eta = 1/m_k^2 on (m_{k-1}, m_k]
    return BlockRule(
        name="ex422",
        breakpoint=lambda k, prev: math.factorial(k) ** 2,
        value=lambda k, nk: Fraction(1, nk * nk),
        # block mass <= 1/m_k and sum_{k>K} 1/(k!)^2 <= 2/((K+1)!)^2
        mass_after=lambda K: Fraction(2, math.factorial(K + 1) ** 2),
        log_summable=lambda m: "yes",
        description="m_k = (k!)^2, eta = 1/m_k^2",
    )


_FACTORIES = {
    "ex45iii": _superfactorial_rule,
    "ex45iii-fact": _factorial_rule,
    "ex422": _squared_factorial_rule,
}
_REGISTRY: Dict[str, BlockRule] = {}


def get(name: str) -> BlockRule:
    if name not in _REGISTRY:
        if name not in _FACTORIES:
            raise KeyError(f"unknown piecewise rule {name!r}; known: {sorted(_FACTORIES)}")
        _REGISTRY[name] = _FACTORIES[name]()
    return _REGISTRY[name]


def register(rule: BlockRule) -> None:
    _FACTORIES[rule.name] = lambda: rule
    _REGISTRY[rule.name] = rule


def names() -> List[str]:
    return sorted(_FACTORIES)
