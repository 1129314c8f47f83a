"""Parse block-explorer exports, clean them, and label addresses.

Two input shapes are supported: CSV exports with a mandatory header row, and
the JSON envelope returned by the explorer's ``account txlist`` endpoint
(``{"status", "message", "result": [...]}`` with string-typed numerics).
Malformed rows are never fatal; they are collected into a rejects report.

Labeling is a two-stage procedure: an address is first matched against the
flagged list (R1) and, when ``require_verified`` is set, only addresses that
also appear in the verified set keep the phishing label (R2). A transaction
is phishing exactly when one of its endpoints is labeled phishing; unlisted
counterparties of such transactions keep a benign address label but their
provenance records the one-hop contact.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

from .errors import (
    ApiError,
    InvalidAddress,
    InvalidConfig,
    InvalidNumeral,
    InvalidTransaction,
    MalformedDocument,
    MalformedHeader,
)
from .txmodel import (
    Address,
    Label,
    LabeledDataset,
    LabelProvenance,
    Transaction,
    canonicalize_tx_hash,
    parse_wei,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = (
    "blocknumber",
    "timestamp",
    "hash",
    "from",
    "to",
    "value",
    "gas",
    "gasprice",
    "gasused",
)

ByteSource = Union[bytes, IO[bytes], str, Path]


@dataclass(frozen=True)
class RejectedRow:
    row: int        # 1-based data row number (header not counted)
    reason: str     # short machine-readable code, e.g. "GasExceeded"
    detail: str


@dataclass
class ParseResult:
    transactions: list[Transaction]
    rejects: list[RejectedRow] = field(default_factory=list)

    def rejects_json(self) -> dict:
        return {
            "parsed": len(self.transactions),
            "rejected": len(self.rejects),
            "rows": [
                {"row": r.row, "reason": r.reason, "detail": r.detail}
                for r in self.rejects
            ],
        }


@dataclass
class CleanReport:
    kept: int = 0
    dup_dropped: int = 0
    invalid_dropped: int = 0
    dropped_rows: list[tuple[int, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kept": self.kept,
            "dup_dropped": self.dup_dropped,
            "invalid_dropped": self.invalid_dropped,
            "dropped": [
                {"index": i, "reason": reason} for i, reason in self.dropped_rows
            ],
        }


class _RowError(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _field_to_int(fields: dict, key: str) -> int:
    raw = fields.get(key)
    if raw is None or str(raw).strip() == "":
        raise _RowError("MissingField", f"missing {key}")
    try:
        return parse_wei(str(raw).strip())
    except InvalidNumeral:
        raise _RowError("BadNumeral", f"{key}={raw!r}") from None


def _row_to_transaction(fields: dict) -> Transaction:
    """Build a Transaction from lowercase-keyed string fields.

    Raises _RowError with a machine-readable reason on any violation; the
    callers turn those into reject entries rather than failing the parse.
    """
    try:
        sender = Address(str(fields.get("from", "")))
        receiver = Address(str(fields.get("to", "")))
    except InvalidAddress as exc:
        raise _RowError("BadAddress", str(exc)) from None
    try:
        tx_hash = canonicalize_tx_hash(str(fields.get("hash", "")))
    except InvalidTransaction as exc:
        raise _RowError("BadHash", str(exc)) from None

    block = _field_to_int(fields, "blocknumber")
    timestamp = _field_to_int(fields, "timestamp")
    value = _field_to_int(fields, "value")
    gas = _field_to_int(fields, "gas")
    gas_price = _field_to_int(fields, "gasprice")
    gas_used = _field_to_int(fields, "gasused")

    if timestamp <= 0:
        raise _RowError("BadTimestamp", f"timestamp={timestamp}")
    if gas_used > gas:
        raise _RowError("GasExceeded", f"gasUsed {gas_used} > gas {gas}")
    return Transaction(
        block_number=block,
        timestamp=timestamp,
        tx_hash=tx_hash,
        sender=sender,
        receiver=receiver,
        value=value,
        gas=gas,
        gas_price=gas_price,
        gas_used=gas_used,
    )


def parse_etherscan_csv(source: ByteSource) -> ParseResult:
    """Parse a CSV export. Header is mandatory; extra columns are ignored."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as stream:
            return _parse_csv_stream(stream)
    if isinstance(source, bytes):
        return _parse_csv_stream(io.StringIO(source.decode("utf-8")))
    return _parse_csv_stream(io.TextIOWrapper(source, encoding="utf-8", newline=""))


def _parse_csv_stream(stream: IO[str]) -> ParseResult:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeader("empty CSV file") from None
    columns = {name.strip().strip('"').lower(): i for i, name in enumerate(header)}
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise MalformedHeader(f"missing required columns: {', '.join(missing)}")

    result = ParseResult(transactions=[])
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        fields = {
            name: (row[i] if i < len(row) else "") for name, i in columns.items()
        }
        try:
            result.transactions.append(_row_to_transaction(fields))
        except _RowError as exc:
            result.rejects.append(RejectedRow(row_no, exc.reason, exc.detail))
    return result


def parse_etherscan_json(source: ByteSource) -> ParseResult:
    """Parse an ``account txlist`` JSON envelope; same semantics as the CSV parser."""
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    elif isinstance(source, bytes):
        raw = source
    else:
        raw = source.read()
    try:
        document = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from None
    if not isinstance(document, dict) or "result" not in document:
        raise MalformedDocument("expected an object with a 'result' field")

    payload = document.get("result")
    status = str(document.get("status", ""))
    if not isinstance(payload, list):
        if status != "1":
            message = str(document.get("message", "error"))
            raise ApiError(message, payload=str(payload))
        raise MalformedDocument("'result' is not an array")

    result = ParseResult(transactions=[])
    for row_no, entry in enumerate(payload, start=1):
        if not isinstance(entry, dict):
            result.rejects.append(
                RejectedRow(row_no, "BadEntry", "result entry is not an object")
            )
            continue
        fields = {str(k).lower(): v for k, v in entry.items()}
        try:
            result.transactions.append(_row_to_transaction(fields))
        except _RowError as exc:
            result.rejects.append(RejectedRow(row_no, exc.reason, exc.detail))
    return result


def clean(txs: Iterable[Transaction]) -> tuple[list[Transaction], CleanReport]:
    """Drop duplicate hashes (first occurrence wins) and invalid records."""
    report = CleanReport()
    seen: set[str] = set()
    kept: list[Transaction] = []
    for i, tx in enumerate(txs):
        problems = tx.violations()
        if problems:
            report.invalid_dropped += 1
            report.dropped_rows.append((i, problems[0]))
            continue
        if tx.tx_hash in seen:
            report.dup_dropped += 1
            report.dropped_rows.append((i, "duplicate hash"))
            continue
        seen.add(tx.tx_hash)
        kept.append(tx)
    report.kept = len(kept)
    return kept, report


@dataclass(frozen=True)
class PhishingList:
    """Flagged addresses plus the subset confirmed by manual review.

    The verified set stands in for the by-hand explorer check; it arrives as
    data (a second file), never as logic.
    """

    addresses: frozenset[Address]
    verified: frozenset[Address] = frozenset()

    def __post_init__(self):
        if not self.verified <= self.addresses:
            raise InvalidConfig("verified set must be a subset of the flagged list")

    @classmethod
    def from_files(
        cls, addresses_path: str | Path, verified_path: str | Path | None = None
    ) -> "PhishingList":
        """Load one address per line; a verified address is implicitly flagged."""
        addresses = _read_address_file(addresses_path)
        verified = _read_address_file(verified_path) if verified_path else frozenset()
        return cls(addresses=addresses | verified, verified=verified)


def _read_address_file(path: str | Path) -> frozenset[Address]:
    out = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(Address(line))
    return frozenset(out)


def label_dataset(
    txs: Iterable[Transaction],
    phishing_list: PhishingList,
    require_verified: bool = False,
) -> LabeledDataset:
    """Apply the two-stage labeling to cleaned transactions.

    Output labels and provenance are independent of input transaction order.
    """
    transactions = tuple(txs)
    if not phishing_list.addresses:
        logger.warning("phishing list is empty; every address will be labeled benign")

    effective = (
        phishing_list.verified if require_verified else phishing_list.addresses
    )
    endpoints: set[Address] = set()
    for tx in transactions:
        endpoints.add(tx.sender)
        endpoints.add(tx.receiver)

    labels: dict[Address, Label] = {}
    provenance: dict[Address, LabelProvenance] = {}
    for addr in sorted(endpoints):
        if addr in effective:
            labels[addr] = Label.PHISHING
            provenance[addr] = (
                LabelProvenance.VERIFIED_PHISHING
                if addr in phishing_list.verified
                else LabelProvenance.LISTED_PHISHING
            )
        elif addr in phishing_list.addresses:
            # Flagged but gated out by R2: benign label, listing remembered.
            labels[addr] = Label.BENIGN
            provenance[addr] = LabelProvenance.LISTED_PHISHING
        else:
            labels[addr] = Label.BENIGN
            provenance[addr] = LabelProvenance.ASSUMED_BENIGN

    # One-hop pass: counterparties of phishing transactions stay benign at the
    # address level but their provenance records the direct contact.
    for tx in transactions:
        if labels[tx.sender] is Label.PHISHING or labels[tx.receiver] is Label.PHISHING:
            for addr in (tx.sender, tx.receiver):
                if (
                    labels[addr] is Label.BENIGN
                    and provenance[addr] is LabelProvenance.ASSUMED_BENIGN
                ):
                    provenance[addr] = LabelProvenance.ONE_HOP_PHISHING

    return LabeledDataset(transactions, labels, provenance)
