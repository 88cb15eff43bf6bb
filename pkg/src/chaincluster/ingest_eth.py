"""User x token attention matrix from holding snapshots and ETH prices.

Holdings CSV header: ``user,token,amount``; prices CSV header:
``token,eth_price``. Amounts are balance snapshots in token units.
"""
import csv
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Dict, Iterable, List

import numpy as np

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class HoldingRecord:
    user_addr: str
    token_addr: str
    amount: Decimal


@dataclass
class AttentionMatrix:
    users: List[str]
    tokens: List[str]
    A: np.ndarray

    @property
    def shape(self):
        return self.A.shape

    def transpose(self) -> "AttentionMatrix":
        return AttentionMatrix(list(self.tokens), list(self.users), self.A.T.copy())


def _decimal(text, no, what):
    try:
        value = Decimal(text.strip())
    except (InvalidOperation, AttributeError):
        raise ParseError(f"bad {what} {text!r}", no) from None
    if not value.is_finite():
        raise ParseError(f"bad {what} {text!r}", no)
    return value


def _rows(lines, header):
    reader = csv.reader(lines)
    first = next(reader, None)
    if first is None:
        return
    if [c.strip() for c in first] != header:
        raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
    for no, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", no)
        yield no, row


def read_holdings(lines: Iterable[str]) -> List[HoldingRecord]:
    out = []
    for no, (user, token, amount) in _rows(lines, ["user", "token", "amount"]):
        value = _decimal(amount, no, "amount")
        if value < 0:
            raise ValidationError(f"line {no}: negative amount {amount}")
        out.append(HoldingRecord(user.strip(), token.strip(), value))
    return out


def read_prices(lines: Iterable[str]) -> Dict[str, Decimal]:
    prices = {}
    for no, (token, price) in _rows(lines, ["token", "eth_price"]):
        value = _decimal(price, no, "eth_price")
        if value < 0:
            raise ValidationError(f"line {no}: negative price {price}")
        prices[token.strip()] = value
    return prices


def build_attention_matrix(holdings: Iterable[HoldingRecord],
                           prices: Dict[str, Decimal]) -> AttentionMatrix:
    """A[i, j] = (total amount of token j held by user i) * price(j)."""
    totals = defaultdict(Decimal)
    for h in holdings:
        if h.amount < 0:
            raise ValidationError(f"negative amount for ({h.user_addr}, {h.token_addr})")
        if h.token_addr not in prices:
            raise ValidationError(f"no price for token {h.token_addr}")
        totals[h.user_addr, h.token_addr] += h.amount
    users = sorted({u for u, _ in totals})
    tokens = sorted({t for _, t in totals})
    ui = {u: i for i, u in enumerate(users)}
    ti = {t: j for j, t in enumerate(tokens)}
    A = np.zeros((len(users), len(tokens)))
    for (u, t), amount in totals.items():
        # exact Decimal product, rounded once
        A[ui[u], ti[t]] = float(amount * Decimal(prices[t]))
    return AttentionMatrix(users, tokens, A)


def _select(att, rows, cols):
    return AttentionMatrix([att.users[i] for i in rows], [att.tokens[j] for j in cols],
                           att.A[np.ix_(rows, cols)])


def filter_bipartite(att: AttentionMatrix, min_tokens_per_user: int,
                     min_users_per_token: int, until_stable: bool = False) -> AttentionMatrix:
    """Drop light users, then unpopular tokens.

    One row pass followed by one column pass. Rows or columns left
    all-zero by the column pass are dropped as well. ``until_stable``
    repeats both passes until nothing changes.
    """
    if min_tokens_per_user < 0 or min_users_per_token < 0:
        raise ValidationError("thresholds must be >= 0")
    cur = att
    while True:
        nz = cur.A != 0
        rows = np.flatnonzero(nz.sum(axis=1) >= min_tokens_per_user)
        step = _select(cur, rows, np.arange(len(cur.tokens)))
        nz = step.A != 0
        cols = np.flatnonzero(nz.sum(axis=0) >= min_users_per_token)
        step = _select(step, np.arange(len(step.users)), cols)
        nz = step.A != 0
        step = _select(step, np.flatnonzero(nz.any(axis=1)), np.flatnonzero(nz.any(axis=0)))
        if step.A.size == 0:
            raise ValidationError("filter removed all nodes")
        if not until_stable or step.shape == cur.shape:
            return step
        cur = step


def normalize_rows_cols(att: AttentionMatrix) -> AttentionMatrix:
    """Scale rows, then columns, to unit Euclidean norm."""
    A = np.asarray(att.A, dtype=float)
    rn = np.linalg.norm(A, axis=1)
    if (rn == 0).any():
        raise ValidationError("zero row in attention matrix; filter first")
    A = A / rn[:, None]
    cn = np.linalg.norm(A, axis=0)
    if (cn == 0).any():
        raise ValidationError("zero column in attention matrix; filter first")
    return AttentionMatrix(list(att.users), list(att.tokens), A / cn[None, :])
