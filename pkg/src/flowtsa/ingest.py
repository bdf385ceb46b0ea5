"""Packet capture reading (classic pcap and pcapng).

Headers are decoded by hand with :mod:`struct`; nothing beyond the
link, IP and transport headers is looked at.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

# Link-layer types (LINKTYPE_* values from the tcpdump registry).
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229
LINKTYPE_LINUX_SLL = 113
LINKTYPE_LINUX_SLL2 = 276
# DLT_RAW as written by some BSD/OpenBSD tools.
_DLT_RAW_ALIASES = (12, 14)

SUPPORTED_LINKTYPES = frozenset(
    {LINKTYPE_ETHERNET, LINKTYPE_RAW, LINKTYPE_IPV4, LINKTYPE_IPV6,
     LINKTYPE_LINUX_SLL, LINKTYPE_LINUX_SLL2, *_DLT_RAW_ALIASES}
)

PROTO_TCP = 6
PROTO_UDP = 17

LENGTH_MODES = ("transport_payload", "ip_total")

_PCAP_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", 1_000_000),
    b"\xa1\xb2\xc3\xd4": (">", 1_000_000),
    b"\x4d\x3c\xb2\xa1": ("<", 1_000_000_000),
    b"\xa1\xb2\x3c\x4d": (">", 1_000_000_000),
}
_PCAPNG_SHB = 0x0A0D0D0A

_ETH_VLAN_TYPES = (0x8100, 0x88A8, 0x9100)
_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_IPV6 = 0x86DD

# IPv6 extension headers walked before the transport header.
_IPV6_EXT = frozenset({0, 43, 60, 135, 139, 140})
_IPV6_FRAG = 44
_IPV6_AH = 51

_U16 = struct.Struct("!H")
_IPV4_HDR = struct.Struct("!BxHxxHxB")  # ver/ihl, total len, frag field, proto
_PORTS = struct.Struct("!HH")


class CaptureError(Exception):
    """Raised when a capture file cannot be opened or understood."""


class PacketRecord(NamedTuple):
    """One decoded IP packet.

    Addresses are kept packed (4 or 16 bytes); use :func:`format_addr`
    to render them.
    """

    timestamp: float
    payload_len: int
    src_addr: bytes
    dst_addr: bytes
    protocol: int
    src_port: int
    dst_port: int


def format_addr(addr: bytes) -> str:
    import socket

    family = socket.AF_INET if len(addr) == 4 else socket.AF_INET6
    return socket.inet_ntop(family, addr)


@dataclass
class CaptureStats:
    total: int = 0
    emitted: int = 0
    non_ip: int = 0
    malformed: int = 0


class _Malformed(Exception):
    pass


_READ_CHUNK = 1 << 20


class CaptureHandle:
    """Sequential reader over one capture file.

    Iterating yields :class:`PacketRecord` values in file order. Non-IP
    frames are skipped and counted in ``stats.non_ip``; frames whose
    headers are truncated are skipped and counted in ``stats.malformed``.
    """

    def __init__(self, path: str | os.PathLike, length_mode: str = "transport_payload"):
        if length_mode not in LENGTH_MODES:
            raise ValueError(f"unknown length mode {length_mode!r}")
        self.path = os.fspath(path)
        self.length_mode = length_mode
        self.stats = CaptureStats()
        try:
            self._fh: BinaryIO = open(self.path, "rb")
        except FileNotFoundError:
            raise CaptureError(f"{self.path}: no such file") from None
        except OSError as exc:
            raise CaptureError(f"{self.path}: {exc.strerror}") from None
        try:
            self._frames = self._open_frames()
        except Exception:
            self._fh.close()
            raise
        self._iter: Iterator[PacketRecord] | None = None

    # -- format detection -------------------------------------------------

    def _open_frames(self) -> Iterator[tuple[float, int, bytes, int]]:
        head = self._fh.read(4)
        if head in _PCAP_MAGICS:
            endian, divisor = _PCAP_MAGICS[head]
            rest = self._fh.read(20)
            if len(rest) < 20:
                raise CaptureError(f"{self.path}: truncated pcap header")
            _vmaj, _vmin, _zone, _sigfigs, _snap, network = struct.unpack(endian + "HHiIII", rest)
            linktype = network & 0x0FFFFFFF
            self._check_linktype(linktype)
            self.linktype = linktype
            return self._pcap_frames(endian, divisor, linktype)
        if len(head) == 4 and struct.unpack("<I", head)[0] == _PCAPNG_SHB:
            self.linktype = None
            return self._pcapng_frames(head)
        raise CaptureError(f"{self.path}: unrecognized capture format")

    def _check_linktype(self, linktype: int) -> None:
        if linktype not in SUPPORTED_LINKTYPES:
            raise CaptureError(f"{self.path}: unsupported link-layer type {linktype}")

    def _pcap_frames(self, endian: str, divisor: int, linktype: int):
        rec = struct.Struct(endian + "IIII")
        unpack = rec.unpack_from
        read = self._fh.read
        stats = self.stats
        buf = b""
        pos = 0
        while True:
            if len(buf) - pos < 16:
                buf = buf[pos:] + read(_READ_CHUNK)
                pos = 0
                if not buf:
                    return
                if len(buf) < 16:
                    self._truncated()
                    return
            sec, frac, caplen, origlen = unpack(buf, pos)
            end = pos + 16 + caplen
            if end > len(buf):
                buf = buf[pos:] + read(max(_READ_CHUNK, end - pos))
                pos = 0
                end = 16 + caplen
                if end > len(buf):
                    self._truncated()
                    return
            stats.total += 1
            yield sec + frac / divisor, linktype, buf[pos + 16:end], origlen
            pos = end

    def _pcapng_frames(self, magic: bytes):
        fh = self._fh
        endian = "<"
        interfaces: list[tuple[int, int]] = []
        last_ts = 0.0
        head = magic + fh.read(4)
        while head:
            if len(head) < 8:
                self._truncated()
                return
            if struct.unpack("<I", head[:4])[0] == _PCAPNG_SHB:
                bom = fh.read(4)
                if len(bom) < 4:
                    raise CaptureError(f"{self.path}: truncated pcapng section header")
                if bom == b"\x4d\x3c\x2b\x1a":
                    endian = "<"
                elif bom == b"\x1a\x2b\x3c\x4d":
                    endian = ">"
                else:
                    raise CaptureError(f"{self.path}: bad pcapng byte-order magic")
                (blen,) = struct.unpack(endian + "I", head[4:])
                if blen < 28 or blen % 4:
                    raise CaptureError(f"{self.path}: bad pcapng section length")
                fh.read(blen - 12)
                interfaces = []
                head = fh.read(8)
                continue
            btype, blen = struct.unpack(endian + "II", head)
            if blen < 12:
                self._truncated()
                return
            body = fh.read(blen - 8)
            if len(body) < blen - 8:
                self._truncated()
                return
            body = body[:-4]  # trailing copy of the block length
            if btype == 1:  # interface description
                linktype = struct.unpack_from(endian + "H", body, 0)[0]
                self._check_linktype(linktype)
                interfaces.append((linktype, _if_tsresol(body[8:], endian)))
            elif btype in (6, 2):  # enhanced / obsolete packet block
                self.stats.total += 1
                if len(body) < 20:
                    self.stats.malformed += 1
                elif btype == 6:
                    iface, hi, lo, caplen, origlen = struct.unpack_from(endian + "IIIII", body, 0)
                else:
                    iface, _drops, hi, lo, caplen, origlen = struct.unpack_from(endian + "HHIIII", body, 0)
                if len(body) >= 20:
                    if iface >= len(interfaces) or 20 + caplen > len(body):
                        self.stats.malformed += 1
                    else:
                        linktype, divisor = interfaces[iface]
                        last_ts = ((hi << 32) | lo) / divisor
                        yield last_ts, linktype, body[20:20 + caplen], origlen
            elif btype == 3:  # simple packet block, carries no timestamp
                self.stats.total += 1
                if len(body) < 4 or not interfaces:
                    self.stats.malformed += 1
                else:
                    (origlen,) = struct.unpack_from(endian + "I", body, 0)
                    yield last_ts, interfaces[0][0], body[4:4 + origlen], origlen
            head = fh.read(8)

    def _truncated(self) -> None:
        # A partial trailing record still counts as one (malformed) packet.
        self.stats.total += 1
        self.stats.malformed += 1

    # -- decoding -----------------------------------------------------------

    def __iter__(self) -> Iterator[PacketRecord]:
        stats = self.stats
        decode = _decode
        ip_total = self.length_mode == "ip_total"
        for ts, linktype, data, origlen in self._frames:
            try:
                rec = decode(ts, linktype, data, origlen, ip_total)
            except (_Malformed, struct.error, IndexError):
                stats.malformed += 1
                continue
            if rec is None:
                stats.non_ip += 1
                continue
            stats.emitted += 1
            yield rec

    def batches(self, size: int = 1 << 15) -> Iterator[PacketBatch]:
        """Decode the capture in columnar batches of up to ``size`` frames.

        Same records and counters as plain iteration; plain Ethernet/IPv4
        TCP and UDP frames are decoded with array operations and anything
        else goes through the per-packet decoder.
        """
        ip_total = self.length_mode == "ip_total"
        frames = []
        for frame in self._frames:
            frames.append(frame)
            if len(frames) >= size:
                yield _decode_batch(frames, ip_total, self.stats)
                frames = []
        if frames:
            yield _decode_batch(frames, ip_total, self.stats)

    def next_packet(self) -> PacketRecord | None:
        if self._iter is None:
            self._iter = iter(self)
        return next(self._iter, None)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> CaptureHandle:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _if_tsresol(options: bytes, endian: str) -> int:
    """Ticks per second from an interface block's options."""
    pos = 0
    while pos + 4 <= len(options):
        code, length = struct.unpack_from(endian + "HH", options, pos)
        if code == 0:
            break
        if code == 9 and length >= 1:
            res = options[pos + 4]
            if res & 0x80:
                return 2 ** (res & 0x7F)
            return 10 ** res
        pos += 4 + ((length + 3) & ~3)
    return 1_000_000


def _decode(ts: float, linktype: int, data: bytes, origlen: int, ip_total: bool) -> PacketRecord | None:
    if linktype == LINKTYPE_ETHERNET:
        if len(data) < 14:
            raise _Malformed
        off = 12
        etype = (data[off] << 8) | data[off + 1]
        off = 14
        while etype in _ETH_VLAN_TYPES:
            if len(data) < off + 4:
                raise _Malformed
            etype = (data[off + 2] << 8) | data[off + 3]
            off += 4
    elif linktype == LINKTYPE_LINUX_SLL:
        if len(data) < 16:
            raise _Malformed
        etype = (data[14] << 8) | data[15]
        off = 16
    elif linktype == LINKTYPE_LINUX_SLL2:
        if len(data) < 20:
            raise _Malformed
        etype = (data[0] << 8) | data[1]
        off = 20
    else:  # raw IP, version from the first nibble
        if not data:
            raise _Malformed
        version = data[0] >> 4
        etype = _ETHERTYPE_IPV4 if version == 4 else _ETHERTYPE_IPV6 if version == 6 else 0
        off = 0

    if etype == _ETHERTYPE_IPV4:
        return _decode_ipv4(ts, data, off, origlen, ip_total)
    if etype == _ETHERTYPE_IPV6:
        return _decode_ipv6(ts, data, off, origlen, ip_total)
    return None


def _decode_ipv4(ts, data, off, origlen, ip_total):
    if len(data) < off + 20:
        raise _Malformed
    vihl, total_len, frag, proto = _IPV4_HDR.unpack_from(data, off)
    if vihl >> 4 != 4:
        raise _Malformed
    ihl = (vihl & 0x0F) * 4
    if ihl < 20 or len(data) < off + ihl:
        raise _Malformed
    if total_len == 0:
        # Segmentation offload leaves the field zeroed; use the wire length.
        total_len = max(origlen - off, ihl)
    src = data[off + 12:off + 16]
    dst = data[off + 16:off + 20]
    if ip_total:
        length = total_len
    else:
        length = total_len - ihl
    if frag & 0x1FFF:
        return PacketRecord(ts, max(length, 0), src, dst, proto, 0, 0)
    return _transport(ts, data, off + ihl, total_len - ihl, length, ip_total, src, dst, proto)


def _decode_ipv6(ts, data, off, origlen, ip_total):
    if len(data) < off + 40:
        raise _Malformed
    if data[off] >> 4 != 6:
        raise _Malformed
    (plen,) = _U16.unpack_from(data, off + 4)
    nxt = data[off + 6]
    src = data[off + 8:off + 24]
    dst = data[off + 24:off + 40]
    if plen == 0:
        plen = max(origlen - off - 40, 0)
    total_len = plen + 40
    pos = off + 40
    remaining = plen
    first_fragment = True
    while nxt in _IPV6_EXT or nxt == _IPV6_FRAG or nxt == _IPV6_AH:
        if len(data) < pos + 8:
            raise _Malformed
        if nxt == _IPV6_FRAG:
            (frag,) = _U16.unpack_from(data, pos + 2)
            first_fragment = (frag & 0xFFF8) == 0
            hlen = 8
        elif nxt == _IPV6_AH:
            hlen = (data[pos + 1] + 2) * 4
        else:
            hlen = (data[pos + 1] + 1) * 8
        nxt = data[pos]
        pos += hlen
        remaining -= hlen
        if not first_fragment:
            break
    length = total_len if ip_total else remaining
    if not first_fragment:
        return PacketRecord(ts, max(length, 0), src, dst, nxt, 0, 0)
    return _transport(ts, data, pos, remaining, length, ip_total, src, dst, nxt)


def _transport(ts, data, pos, ip_payload, length, ip_total, src, dst, proto):
    if proto == PROTO_TCP:
        if len(data) < pos + 13:
            raise _Malformed
        sport, dport = _PORTS.unpack_from(data, pos)
        thl = (data[pos + 12] >> 4) * 4
        if thl < 20:
            raise _Malformed
    elif proto == PROTO_UDP:
        if len(data) < pos + 4:
            raise _Malformed
        sport, dport = _PORTS.unpack_from(data, pos)
        thl = 8
    else:
        return PacketRecord(ts, max(length, 0), src, dst, proto, 0, 0)
    if not ip_total:
        length = ip_payload - thl
    return PacketRecord(ts, length if length > 0 else 0, src, dst, proto, sport, dport)


def open_capture(path: str | os.PathLike, length_mode: str = "transport_payload") -> CaptureHandle:
    """Open a pcap or pcapng file for sequential reading.

    Raises:
        CaptureError: the file is missing, not a capture, or uses an
            unsupported link layer.
    """
    return CaptureHandle(path, length_mode=length_mode)


def next_packet(handle: CaptureHandle) -> PacketRecord | None:
    """Next decoded packet, or ``None`` at end of stream."""
    return handle.next_packet()


@dataclass(eq=False)
class PacketBatch:
    """Columnar packet records.

    Addresses are split into two 64-bit halves (IPv4 uses ``lo`` only);
    ``family`` is 4 or 6.
    """

    timestamp: np.ndarray
    payload_len: np.ndarray
    protocol: np.ndarray
    src_port: np.ndarray
    dst_port: np.ndarray
    family: np.ndarray
    src_hi: np.ndarray
    src_lo: np.ndarray
    dst_hi: np.ndarray
    dst_lo: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamp)

    @classmethod
    def from_records(cls, records) -> PacketBatch:
        records = list(records)
        cols = [[] for _ in range(10)]
        for r in records:
            fam, shi, slo = _addr_ints(r.src_addr)
            _, dhi, dlo = _addr_ints(r.dst_addr)
            for col, v in zip(cols, (r.timestamp, r.payload_len, r.protocol, r.src_port, r.dst_port,
                                     fam, shi, slo, dhi, dlo)):
                col.append(v)
        dtypes = (np.float64, np.int64, np.int64, np.int64, np.int64, np.int8,
                  np.uint64, np.uint64, np.uint64, np.uint64)
        return cls(*(np.array(c, dtype=t) for c, t in zip(cols, dtypes)))

    def src_addr(self, i: int) -> bytes:
        return _addr_bytes(int(self.family[i]), int(self.src_hi[i]), int(self.src_lo[i]))

    def dst_addr(self, i: int) -> bytes:
        return _addr_bytes(int(self.family[i]), int(self.dst_hi[i]), int(self.dst_lo[i]))

    def record(self, i: int) -> PacketRecord:
        return PacketRecord(
            float(self.timestamp[i]), int(self.payload_len[i]), self.src_addr(i), self.dst_addr(i),
            int(self.protocol[i]), int(self.src_port[i]), int(self.dst_port[i]),
        )

    def records(self) -> Iterator[PacketRecord]:
        for i in range(len(self)):
            yield self.record(i)


def _addr_bytes(family: int, hi: int, lo: int) -> bytes:
    if family == 4:
        return lo.to_bytes(4, "big")
    return hi.to_bytes(8, "big") + lo.to_bytes(8, "big")


def _addr_ints(addr: bytes) -> tuple[int, int, int]:
    if len(addr) == 4:
        return 4, 0, int.from_bytes(addr, "big")
    return 6, int.from_bytes(addr[:8], "big"), int.from_bytes(addr[8:], "big")


def _u16(b: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return (b[idx].astype(np.int64) << 8) | b[idx + 1]


def _u32(b: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return (_u16(b, idx).astype(np.uint64) << np.uint64(16)) | _u16(b, idx + 2).astype(np.uint64)


def _decode_batch(frames, ip_total: bool, stats: CaptureStats) -> PacketBatch:
    n = len(frames)
    ts = np.fromiter((f[0] for f in frames), dtype=np.float64, count=n)
    link = np.fromiter((f[1] for f in frames), dtype=np.int64, count=n)
    caplen = np.fromiter((len(f[2]) for f in frames), dtype=np.int64, count=n)
    # Pad so every fixed-offset gather below stays in bounds.
    b = np.frombuffer(b"".join(f[2] for f in frames) + bytes(80), dtype=np.uint8)
    start = np.cumsum(caplen) - caplen

    eth = link == LINKTYPE_ETHERNET
    sll = link == LINKTYPE_LINUX_SLL
    sll2 = link == LINKTYPE_LINUX_SLL2
    raw = ~(eth | sll | sll2)
    l2 = np.select([eth, sll, sll2], [14, 16, 20], 0)
    ipo = start + l2
    et = np.select([eth, sll, sll2], [_u16(b, start + 12), _u16(b, start + 14), _u16(b, start)],
                   np.where(b[start] >> 4 == 4, _ETHERTYPE_IPV4, -1))
    et = np.where(raw & (caplen < 1), -1, et)

    vihl = b[ipo].astype(np.int64)
    ihl = (vihl & 0x0F) * 4
    total = _u16(b, ipo + 2)
    frag = _u16(b, ipo + 6) & 0x1FFF
    proto = b[ipo + 9].astype(np.int64)
    tpo = ipo + ihl
    tcp = proto == PROTO_TCP
    udp = proto == PROTO_UDP
    thl = np.where(tcp, (b[np.minimum(tpo + 12, len(b) - 1)] >> 4).astype(np.int64) * 4, 8)
    need = l2 + ihl + np.where(tcp, 13, 4)
    fast = (
        (et == _ETHERTYPE_IPV4) & (caplen >= l2 + 20) & (vihl >> 4 == 4) & (ihl >= 20)
        & (frag == 0) & (total != 0) & (tcp | udp) & (caplen >= need) & (~tcp | (thl >= 20))
    )

    tpo_f = np.where(fast, tpo, 0)
    sport = np.where(fast, _u16(b, tpo_f), 0)
    dport = np.where(fast, _u16(b, tpo_f + 2), 0)
    if ip_total:
        plen = total
    else:
        plen = np.maximum(total - ihl - thl, 0)
    ipo_f = np.where(fast, ipo, 0)
    src = np.where(fast, _u32(b, ipo_f + 12), np.uint64(0))
    dst = np.where(fast, _u32(b, ipo_f + 16), np.uint64(0))

    keep = fast.copy()
    family = np.full(n, 4, dtype=np.int8)
    src_hi = np.zeros(n, dtype=np.uint64)
    dst_hi = np.zeros(n, dtype=np.uint64)
    plen = np.where(fast, plen, 0)
    for i in np.nonzero(~fast)[0].tolist():
        f = frames[i]
        try:
            rec = _decode(f[0], f[1], f[2], f[3], ip_total)
        except (_Malformed, struct.error, IndexError):
            stats.malformed += 1
            continue
        if rec is None:
            stats.non_ip += 1
            continue
        keep[i] = True
        fam, shi, slo = _addr_ints(rec.src_addr)
        _, dhi, dlo = _addr_ints(rec.dst_addr)
        family[i] = fam
        src_hi[i], src[i], dst_hi[i], dst[i] = shi, slo, dhi, dlo
        plen[i] = rec.payload_len
        proto[i] = rec.protocol
        sport[i] = rec.src_port
        dport[i] = rec.dst_port
    stats.emitted += int(keep.sum())
    return PacketBatch(
        timestamp=ts[keep], payload_len=plen[keep], protocol=proto[keep],
        src_port=sport[keep], dst_port=dport[keep], family=family[keep],
        src_hi=src_hi[keep], src_lo=src[keep], dst_hi=dst_hi[keep], dst_lo=dst[keep],
    )
