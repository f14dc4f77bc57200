"""Uplink datagram codec and Contact-ID digit-string handling.

Frame layout, big-endian throughout:

    offset  size  field
    0       2     magic 0xA5 0x5A
    2       1     version (0x01)
    3       1     msg_type
    4       2     seq
    6       2     src_node
    8       2     payload_len (<= 1024)
    10      n     payload
    10+n    4     CRC-32 (IEEE polynomial) over bytes 0 .. 10+n-1

Minimum frame is 14 bytes. ALARM_CID payloads are the 16 ASCII digits of a
Contact-ID message; COMMAND payloads are one target-node byte (low 8 bits)
plus one opcode byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

from .errors import HomemeshError, InvalidInput

MAGIC = b"\xa5\x5a"
VERSION = 1
MAX_PAYLOAD = 1024
HEADER = struct.Struct(">2sBBHHH")
MIN_FRAME = HEADER.size + 4


class MsgType(IntEnum):
    SENSOR_DATA = 0x01
    COMMAND = 0x02
    ACK = 0x03
    ALARM_CID = 0x04
    HEARTBEAT = 0x05
    DISCOVERY_REPORT = 0x06
    NACK = 0x07


class SwitchOpcode(IntEnum):
    SWITCH_ON = 0x01
    SWITCH_OFF = 0x02
    QUERY_SWITCH = 0x03


@dataclass(frozen=True)
class Datagram:
    """One framed uplink message between coordinator and monitoring center."""

    msg_type: MsgType
    seq: int
    src_node: int
    payload: bytes = b""


class PayloadTooLarge(HomemeshError):
    pass


class ProtocolError(HomemeshError):
    """Malformed frame; `offset` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    pass


class BadCrc(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


def encode_datagram(d: Datagram) -> bytes:
    """Serialize a datagram; output length is always 14 + len(payload)."""
    if len(d.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(d.payload)} bytes exceeds {MAX_PAYLOAD}")
    if not 0 <= d.seq <= 0xFFFF:
        raise InvalidInput(f"seq {d.seq} outside 16-bit range")
    if not 0 <= d.src_node <= 0xFFFF:
        raise InvalidInput(f"src_node {d.src_node} outside 16-bit range")
    msg_type = MsgType(d.msg_type)
    head = HEADER.pack(MAGIC, VERSION, msg_type, d.seq, d.src_node, len(d.payload))
    body = head + d.payload
    return body + struct.pack(">I", zlib.crc32(body))


def _check_header(data: bytes) -> int:
    """Validate the 10 header bytes; returns the declared payload length."""
    magic, version, msg_type, _seq, _src, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic.hex()}", offset=0)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version:#04x}", offset=2)
    if msg_type not in MsgType._value2member_map_:
        raise UnknownType(f"unknown msg_type {msg_type:#04x}", offset=3)
    if payload_len > MAX_PAYLOAD:
        raise LengthMismatch(f"declared payload length {payload_len} exceeds {MAX_PAYLOAD}", offset=8)
    return payload_len


def decode_datagram(data: bytes) -> Datagram:
    """Parse exactly one frame, validating magic, version, type, length, CRC."""
    if len(data) < MIN_FRAME:
        raise Truncated(f"frame of {len(data)} bytes is below the {MIN_FRAME}-byte minimum",
                        offset=len(data))
    payload_len = _check_header(data)
    total = MIN_FRAME + payload_len
    if len(data) < total:
        raise Truncated(f"frame needs {total} bytes, got {len(data)}", offset=len(data))
    if len(data) > total:
        raise LengthMismatch(f"{len(data) - total} trailing bytes after a {total}-byte frame",
                             offset=total)
    body = data[: HEADER.size + payload_len]
    (crc,) = struct.unpack_from(">I", data, HEADER.size + payload_len)
    if crc != zlib.crc32(body):
        raise BadCrc(f"crc {crc:#010x} != computed {zlib.crc32(body):#010x}",
                     offset=HEADER.size + payload_len)
    _, _, msg_type, seq, src_node, _ = HEADER.unpack_from(data)
    return Datagram(MsgType(msg_type), seq, src_node, bytes(data[HEADER.size:HEADER.size + payload_len]))


class StreamDecoder:
    """Incremental frame splitter for a byte stream; confine to one thread.

    feed() returns every complete datagram buffered so far and raises the
    usual decode errors as soon as a malformed header or body is visible.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Datagram]:
        self._buf.extend(data)
        out = []
        while len(self._buf) >= HEADER.size:
            payload_len = _check_header(bytes(self._buf[:HEADER.size]))
            total = MIN_FRAME + payload_len
            if len(self._buf) < total:
                break
            frame = bytes(self._buf[:total])
            del self._buf[:total]
            out.append(decode_datagram(frame))
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def encode_command_payload(target_node: int, opcode: SwitchOpcode) -> bytes:
    if not 0 <= target_node <= 0xFF:
        raise InvalidInput(f"target node {target_node} does not fit the one-byte field")
    return bytes([target_node, SwitchOpcode(opcode)])


def decode_command_payload(payload: bytes) -> tuple[int, SwitchOpcode]:
    if len(payload) != 2:
        raise InvalidInput(f"command payload must be 2 bytes, got {len(payload)}")
    target, opcode = payload[0], payload[1]
    if opcode not in SwitchOpcode._value2member_map_:
        raise InvalidInput(f"unknown switch opcode {opcode:#04x}")
    return target, SwitchOpcode(opcode)


# --- Contact-ID digit strings ---------------------------------------------
#
# 16 digits: account(4) message_type(2) qualifier(1) event_code(3)
# partition(2) zone(3) checksum(1). The checksum makes the digit-value sum a
# multiple of 15, where '0' is worth 10 and '1'..'9' their face value.

CID_LENGTH = 16
CID_MESSAGE_TYPES = ("18", "98")
CID_QUALIFIERS = (1, 3, 6)  # new event, restore, status report


class CidError(HomemeshError):
    pass


class BadLength(CidError):
    pass


class BadDigit(CidError):
    pass


class BadMessageType(CidError):
    pass


class BadQualifier(CidError):
    pass


class BadChecksum(CidError):
    pass


class NoValidChecksum(CidError):
    """No single digit can complete the message: the required value is
    0 mod 15 (only reachable as 15) or lies in 11..14, none of which a
    decimal digit can carry."""


@dataclass(frozen=True)
class CidEvent:
    """A decoded Contact-ID alarm event."""

    account: str
    message_type: str
    qualifier: int
    event_code: str
    partition: str
    zone: str
    checksum: str


def cid_digit_value(ch: str) -> int:
    """Checksum value of one digit: '0' counts as 10, the rest face value."""
    if ch == "0":
        return 10
    if "1" <= ch <= "9":
        return int(ch)
    raise BadDigit(f"not a decimal digit: {ch!r}")


def decode_cid(digits: str) -> CidEvent:
    """Split and validate a 16-digit Contact-ID message."""
    if len(digits) != CID_LENGTH:
        raise BadLength(f"expected {CID_LENGTH} digits, got {len(digits)}")
    values = [cid_digit_value(ch) for ch in digits]
    message_type = digits[4:6]
    if message_type not in CID_MESSAGE_TYPES:
        raise BadMessageType(f"message type {message_type!r} not in {CID_MESSAGE_TYPES}")
    qualifier = int(digits[6])
    if qualifier not in CID_QUALIFIERS:
        raise BadQualifier(f"qualifier {qualifier} not in {CID_QUALIFIERS}")
    if sum(values) % 15 != 0:
        raise BadChecksum(f"digit values sum to {sum(values)}, not a multiple of 15")
    return CidEvent(
        account=digits[0:4],
        message_type=message_type,
        qualifier=qualifier,
        event_code=digits[7:10],
        partition=digits[10:12],
        zone=digits[12:15],
        checksum=digits[15],
    )


def cid_checksum(digits: str) -> str:
    """The unique digit completing a 15-digit message so decode_cid accepts it.

    Raises NoValidChecksum when the required value cannot be carried by any
    decimal digit (required 15, or in 11..14).
    """
    if len(digits) != CID_LENGTH - 1:
        raise BadLength(f"expected {CID_LENGTH - 1} digits, got {len(digits)}")
    total = sum(cid_digit_value(ch) for ch in digits)
    required = (-total) % 15
    if required == 0 or required > 10:
        raise NoValidChecksum(
            f"digit values sum to {total}; no single digit supplies {required or 15} (mod 15)"
        )
    return "0" if required == 10 else str(required)
