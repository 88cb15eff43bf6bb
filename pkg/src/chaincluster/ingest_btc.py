"""Bitcoin dump ingestion: transaction records, address association, filtering.

Canonical line formats (whitespace-separated integers, one record per line):

    txin / txout    tx_id addr_id amount_satoshi
    contraction     addr_id user_id

Raw dumps with other column layouts are read through a ``ColumnMap``.
"""
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .errors import ParseError, ValidationError


@dataclass
class TxRecord:
    tx_id: int
    inputs: List[Tuple[int, int]] = field(default_factory=list)
    outputs: List[Tuple[int, int]] = field(default_factory=list)

    def addresses(self) -> Set[int]:
        return {a for a, _ in self.inputs} | {a for a, _ in self.outputs}


@dataclass(frozen=True)
class ColumnMap:
    """Zero-based source columns for (tx_id, addr_id, amount)."""
    tx_id: int = 0
    addr_id: int = 1
    amount: int = 2
    exact: bool = True  # canonical files must have exactly three fields

    @property
    def width(self):
        return max(self.tx_id, self.addr_id, self.amount) + 1


CANONICAL = ColumnMap()


def load_column_map(lines: Iterable[str]) -> ColumnMap:
    """Read a ``key = value`` column map (keys: tx_id, addr_id, amount)."""
    values = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw.rstrip()!r}", no)
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in ("tx_id", "addr_id", "amount"):
            raise ParseError(f"unknown column key {key!r}", no)
        try:
            values[key] = int(val)
        except ValueError:
            raise ParseError(f"column index must be an integer, got {val!r}", no) from None
        if values[key] < 0:
            raise ParseError("column index must be >= 0", no)
    return ColumnMap(exact=False, **values)


def _iter_rows(source, columns, tx_id_range=None):
    for no, raw in enumerate(source, 1):
        parts = raw.split()
        if not parts:
            continue
        if (columns.exact and len(parts) != 3) or len(parts) < columns.width:
            raise ParseError(f"expected {'3' if columns.exact else f'>= {columns.width}'} fields, "
                             f"got {len(parts)}", no)
        try:
            tx_id = int(parts[columns.tx_id])
            addr = int(parts[columns.addr_id])
            amount = int(parts[columns.amount])
        except ValueError:
            raise ParseError(f"non-integer field in {raw.rstrip()!r}", no) from None
        if amount < 0:
            raise ValidationError(f"line {no}: negative amount {amount}")
        if tx_id_range is not None and not (tx_id_range[0] <= tx_id <= tx_id_range[1]):
            continue
        yield tx_id, addr, amount


def parse_tx_files(txin_source: Iterable[str], txout_source: Iterable[str],
                   columns: ColumnMap = CANONICAL,
                   out_columns: Optional[ColumnMap] = None,
                   tx_id_range: Optional[Tuple[int, int]] = None) -> List[TxRecord]:
    """Join input and output lines into one ``TxRecord`` per tx_id.

    Records come back in order of first appearance (inputs file first);
    within a record, inputs and outputs keep file order.
    """
    records: Dict[int, TxRecord] = {}
    for tx_id, addr, amount in _iter_rows(txin_source, columns, tx_id_range):
        records.setdefault(tx_id, TxRecord(tx_id)).inputs.append((addr, amount))
    for tx_id, addr, amount in _iter_rows(txout_source, out_columns or columns, tx_id_range):
        records.setdefault(tx_id, TxRecord(tx_id)).outputs.append((addr, amount))
    return list(records.values())


def format_tx_files(txs: Iterable[TxRecord]) -> Tuple[str, str]:
    """Inverse of ``parse_tx_files`` for canonical text."""
    txin, txout = [], []
    for tx in txs:
        txin.extend(f"{tx.tx_id} {a} {v}\n" for a, v in tx.inputs)
        txout.extend(f"{tx.tx_id} {a} {v}\n" for a, v in tx.outputs)
    return "".join(txin), "".join(txout)


class AddressPartition:
    """Union-find over address ids.

    Addresses never seen are singletons. ``label`` returns the smallest
    member of a group, which is stable no matter the order of unions.
    """

    def __init__(self):
        self.parent: Dict[int, int] = {}
        self.size: Dict[int, int] = {}
        self._min: Dict[int, int] = {}

    def copy(self) -> "AddressPartition":
        other = AddressPartition()
        other.parent = dict(self.parent)
        other.size = dict(self.size)
        other._min = dict(self._min)
        return other

    def find(self, x: int) -> int:
        parent = self.parent
        if x not in parent:
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def _add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1
            self._min[x] = x

    def union(self, a: int, b: int) -> int:
        self._add(a)
        self._add(b)
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb] or (self.size[ra] == self.size[rb] and rb < ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size.pop(rb)
        self._min[ra] = min(self._min[ra], self._min.pop(rb))
        return ra

    def union_all(self, addrs: Iterable[int]):
        it = iter(addrs)
        first = next(it, None)
        for other in it:
            self.union(first, other)

    def label(self, x: int) -> int:
        root = self.find(x)
        return self._min.get(root, root)

    def groups(self) -> List[Set[int]]:
        """Non-singleton groups plus any explicitly added singletons."""
        out = defaultdict(set)
        for x in self.parent:
            out[self.find(x)].add(x)
        return sorted(out.values(), key=min)


def parse_contraction(source: Iterable[str]) -> AddressPartition:
    part = AddressPartition()
    first_of_user: Dict[int, int] = {}
    for no, raw in enumerate(source, 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ParseError(f"expected 'addr_id user_id', got {len(parts)} fields", no)
        try:
            addr, user = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer field in {raw.rstrip()!r}", no) from None
        if user in first_of_user:
            part.union(first_of_user[user], addr)
        else:
            first_of_user[user] = addr
            part._add(addr)
    return part


def associate_common_spend(txs: Iterable[TxRecord],
                           base: Optional[AddressPartition] = None) -> AddressPartition:
    """Union all input addresses of every transaction."""
    part = base.copy() if base is not None else AddressPartition()
    for tx in txs:
        if tx.inputs:
            part.union_all(a for a, _ in tx.inputs)
    return part


def associate_change_address(txs: List[TxRecord], partition: AddressPartition) -> AddressPartition:
    """One-time change rule.

    A transaction with at least one input and exactly two outputs whose
    addresses include exactly one "fresh" address (one occurrence in the
    whole dataset, never an input) has that address merged into its
    input group. The occurrence index is computed once up front, so the
    result does not depend on transaction order.
    """
    occurrences: Counter = Counter()
    spenders: Set[int] = set()
    for tx in txs:
        for a, _ in tx.inputs:
            occurrences[a] += 1
            spenders.add(a)
        for a, _ in tx.outputs:
            occurrences[a] += 1

    part = partition.copy()
    for tx in txs:
        if not tx.inputs or len(tx.outputs) != 2:
            continue
        fresh = [a for a, _ in tx.outputs if occurrences[a] == 1 and a not in spenders]
        if len(fresh) == 1:
            part.union(tx.inputs[0][0], fresh[0])
    return part


def occurrence_index(txs: Iterable[TxRecord], partition: AddressPartition) -> Counter:
    """Distinct-transaction count per super-address."""
    counts: Counter = Counter()
    for tx in txs:
        counts.update({partition.label(a) for a in tx.addresses()})
    return counts


def filter_by_occurrence(txs: List[TxRecord], partition: AddressPartition,
                         min_occ: int) -> Tuple[List[TxRecord], Set[int]]:
    if min_occ < 1:
        raise ValidationError("min_occ must be >= 1")
    counts = occurrence_index(txs, partition)
    surviving = {u for u, c in counts.items() if c >= min_occ}
    kept = []
    for tx in txs:
        users = {partition.label(a) for a in tx.addresses()} & surviving
        if len(users) >= 2:
            kept.append(tx)
    # a user that only appeared in dropped transactions has no edges left
    surviving = {u for tx in kept for u in
                 ({partition.label(a) for a in tx.addresses()} & surviving)}
    return kept, surviving
