"""Advertisement payloads for the transaction InputData field.

Only message bytes and unsigned transaction sketches are produced; signing
and submission are left to an external wallet.
"""
import re
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import ValidationError

DIRECT_COIN = "direct-coin"
AIRDROP_CONTRACT = "airdrop-contract"
STRATEGIES = (DIRECT_COIN, AIRDROP_CONTRACT)

MAX_MESSAGE_BYTES = 10 * 1024
ZERO_ADDRESS = "0x" + "0" * 40
_ADDRESS = re.compile(r"^0x[0-9a-fA-F]{40}$")


def encode_message(message: str) -> str:
    if not isinstance(message, str) or not message:
        raise ValidationError("message must be a non-empty string")
    raw = message.encode("utf-8")
    if len(raw) > MAX_MESSAGE_BYTES:
        raise ValidationError(f"message is {len(raw)} bytes; limit is {MAX_MESSAGE_BYTES}")
    return "0x" + raw.hex()


def decode_message(data: str) -> str:
    if not data.startswith("0x"):
        raise ValidationError("input data must start with 0x")
    try:
        return bytes.fromhex(data[2:]).decode("utf-8")
    except ValueError as exc:
        raise ValidationError(f"input data is not hex-encoded UTF-8: {exc}") from None


@dataclass
class UnsignedTxSketch:
    to: str
    value_wei: int
    input_data: str
    strategy: str
    recipients: Optional[List[str]] = field(default=None)

    def to_json(self):
        out = {"strategy": self.strategy, "to": self.to,
               "value_wei": self.value_wei, "input_data": self.input_data}
        if self.recipients is not None:
            out["recipients"] = list(self.recipients)
        return out


def check_address(addr: str) -> str:
    if not isinstance(addr, str) or not _ADDRESS.match(addr):
        raise ValidationError(f"bad address {addr!r}: expected 0x followed by 40 hex digits")
    return addr


def build_tx_sketch(recipients: List[str], message: str, strategy: str,
                    value_wei: int = 0, contract: Optional[str] = None) -> List[UnsignedTxSketch]:
    """One sketch per recipient (direct-coin) or one group sketch (airdrop-contract).

    The airdrop sketch is addressed to ``contract``; without one it carries
    the zero address as a placeholder for the signer to replace.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if not recipients:
        raise ValidationError("no recipients")
    for addr in recipients:
        check_address(addr)
    if value_wei < 0:
        raise ValidationError("value_wei must be >= 0")
    data = encode_message(message)
    if strategy == DIRECT_COIN:
        return [UnsignedTxSketch(addr, value_wei, data, strategy) for addr in recipients]
    to = check_address(contract) if contract is not None else ZERO_ADDRESS
    return [UnsignedTxSketch(to, value_wei, data, strategy, list(recipients))]
