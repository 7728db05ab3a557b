"""Binary wire format: frame header and message payload codecs.

Frame layout (little-endian throughout):

    offset  size  field
    0       2     magic 0x46 0x58 ("FX")
    2       1     protocol version (1)
    3       1     message type
    4       4     payload length, unsigned 32-bit LE
    8       n     payload

Floats travel as binary64 bit patterns, so decode(encode(m)) reproduces
every numeric value exactly; that is what lets training results be compared
bitwise across transports. Every malformed input raises FrameError; the
decoder never crashes or over-allocates on hostile lengths.

Sketch payloads carry a leading format byte: 1 is the bucket sketch
(rho as binary64, then negative / zero / positive weight maps, each a
count followed by signed 64-bit key + binary64 weight pairs), 2 is the
exact quantiler (count, then value/weight binary64 pairs in insertion
order). Atom blocks are (round, d, K, count) then per atom: big-endian
key bytes, count as unsigned 64-bit, K gradient and K Hessian binary64s.
"""

from __future__ import annotations

import struct

import numpy as np

from .binning import AtomMap, EdgeSet
from .errors import FrameError
from .protocol import (
    PROTOCOL_VERSION,
    AtomReq,
    AtomResp,
    FinalAck,
    Message,
    ModelFinal,
    SketchReq,
    SketchResp,
)
from .sketch import ExactWeightedQuantiler, WeightedQuantileSketch
from .trees import Ensemble, RoundTrees, TreeNode

MAGIC = b"FX"
HEADER = struct.Struct("<2sBBI")

MSG_SKETCH_REQ = 1
MSG_SKETCH_RESP = 2
MSG_ATOM_REQ = 3
MSG_ATOM_RESP = 4
MSG_MODEL_FINAL = 5
MSG_FINAL_ACK = 6

SKETCH_FORMAT_BUCKETS = 1
SKETCH_FORMAT_EXACT = 2


class _Cursor:
    """Bounds-checked reader over a payload."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise FrameError("truncated payload")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FrameError("trailing bytes after payload")


_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_KV = struct.Struct("<qd")


def _read_u8(c: _Cursor) -> int:
    return c.unpack(_U8)[0]


def _read_u32(c: _Cursor) -> int:
    return c.unpack(_U32)[0]


def _read_i32(c: _Cursor) -> int:
    return c.unpack(_I32)[0]


def _read_u64(c: _Cursor) -> int:
    return c.unpack(_U64)[0]


def _read_f64(c: _Cursor) -> float:
    return c.unpack(_F64)[0]


# -- sketches ---------------------------------------------------------------


def _encode_weight_map(m: dict[int, float]) -> bytes:
    parts = [_U64.pack(len(m))]
    for key in sorted(m):
        parts.append(_KV.pack(key, m[key]))
    return b"".join(parts)


def _decode_weight_map(c: _Cursor) -> dict[int, float]:
    count = _read_u64(c)
    if count * _KV.size > len(c.buf) - c.pos:
        raise FrameError("weight map count exceeds payload")
    out: dict[int, float] = {}
    for _ in range(count):
        key, w = c.unpack(_KV)
        out[key] = w
    return out


def encode_sketch(sketch) -> bytes:
    if isinstance(sketch, WeightedQuantileSketch):
        zero_map = {0: sketch.zero_weight} if sketch.zero_weight > 0.0 else {}
        return b"".join(
            [
                _U8.pack(SKETCH_FORMAT_BUCKETS),
                _F64.pack(sketch.rho),
                _encode_weight_map(sketch.neg),
                _encode_weight_map(zero_map),
                _encode_weight_map(sketch.pos),
            ]
        )
    if isinstance(sketch, ExactWeightedQuantiler):
        values = np.concatenate(sketch._values) if sketch._values else np.empty(0)
        weights = np.concatenate(sketch._weights) if sketch._weights else np.empty(0)
        pairs = np.empty((values.size, 2))
        pairs[:, 0] = values
        pairs[:, 1] = weights
        return _U8.pack(SKETCH_FORMAT_EXACT) + _U64.pack(values.size) + pairs.astype("<f8").tobytes()
    raise FrameError(f"cannot encode sketch of type {type(sketch).__name__}")


def decode_sketch(c: _Cursor):
    kind = _read_u8(c)
    if kind == SKETCH_FORMAT_BUCKETS:
        rho = _read_f64(c)
        if not (0.0 < rho < 1.0):
            raise FrameError("sketch rho out of range")
        sketch = WeightedQuantileSketch(rho)
        neg = _decode_weight_map(c)
        zero = _decode_weight_map(c)
        pos = _decode_weight_map(c)
        for m in (neg, zero, pos):
            for w in m.values():
                if not np.isfinite(w) or w < 0:
                    raise FrameError("sketch bucket weight out of range")
        sketch.neg = neg
        sketch.pos = pos
        sketch.zero_weight = sum(zero.values())
        sketch.total_weight = sum(neg.values()) + sketch.zero_weight + sum(pos.values())
        return sketch
    if kind == SKETCH_FORMAT_EXACT:
        count = _read_u64(c)
        nbytes = count * 16
        raw = c.take(nbytes)
        pairs = np.frombuffer(raw, dtype="<f8").reshape(count, 2)
        q = ExactWeightedQuantiler()
        if count:
            q.insert_many(pairs[:, 0], pairs[:, 1])
        return q
    raise FrameError(f"unknown sketch format {kind}")


# -- edges and trees ---------------------------------------------------------


def _encode_edge_set(e: EdgeSet) -> bytes:
    parts = [_U32.pack(e.round_t), _U32.pack(e.n_features)]
    for arr in e.edges:
        parts.append(_U32.pack(arr.size))
        parts.append(arr.astype("<f8").tobytes())
    return b"".join(parts)


def _decode_edge_set(c: _Cursor) -> EdgeSet:
    round_t = _read_u32(c)
    d = _read_u32(c)
    if d > 1_000_000:
        raise FrameError("implausible feature count")
    edges = []
    for _ in range(d):
        count = _read_u32(c)
        raw = c.take(count * 8)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if arr.size < 1:
            raise FrameError("feature with no edges")
        with np.errstate(invalid="ignore"):  # fuzz inputs may decode to NaN
            if arr.size > 1 and not (np.diff(arr) > 0).all():
                raise FrameError("edges not strictly increasing")
        edges.append(arr)
    return EdgeSet(round_t=round_t, edges=tuple(edges))


def _encode_round_trees(rt: RoundTrees) -> bytes:
    parts = [_U32.pack(rt.n_classes), _U32.pack(rt.n_nodes)]
    for node in rt.nodes:
        parts.append(_U8.pack(1 if node.is_leaf else 0))
        if node.is_leaf:
            parts.append(np.asarray(node.weights, dtype="<f8").tobytes())
        else:
            parts.append(_I32.pack(node.feature))
            parts.append(_I32.pack(node.bin_q))
            parts.append(_F64.pack(node.threshold))
            parts.append(_I32.pack(node.left))
            parts.append(_I32.pack(node.right))
    return b"".join(parts)


def _decode_round_trees(c: _Cursor) -> RoundTrees:
    n_classes = _read_u32(c)
    n_nodes = _read_u32(c)
    if n_classes > 100_000 or n_nodes > 10_000_000:
        raise FrameError("implausible tree dimensions")
    nodes: list[TreeNode] = []
    for _ in range(n_nodes):
        is_leaf = _read_u8(c)
        if is_leaf not in (0, 1):
            raise FrameError("bad leaf flag")
        if is_leaf:
            raw = c.take(8 * n_classes)
            weights = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            nodes.append(TreeNode(is_leaf=True, weights=weights))
        else:
            feature = _read_i32(c)
            bin_q = _read_i32(c)
            threshold = _read_f64(c)
            left = _read_i32(c)
            right = _read_i32(c)
            if left < 0 or right < 0 or left >= n_nodes or right >= n_nodes:
                raise FrameError("tree child index out of range")
            nodes.append(
                TreeNode(is_leaf=False, feature=feature, bin_q=bin_q, threshold=threshold, left=left, right=right)
            )
    return RoundTrees(nodes=nodes, n_classes=n_classes)


def _atom_dtype(d: int, k: int, width: int) -> np.dtype:
    return np.dtype(
        [("key", np.void, d * width), ("w", "<u8"), ("g", "<f8", (k,)), ("h", "<f8", (k,))]
    )


def _encode_atoms(atoms: AtomMap) -> bytes:
    d = atoms.n_features
    k = atoms.n_classes
    width = atoms.key_width()
    header = b"".join(
        [
            _U32.pack(atoms.round_t),
            _U32.pack(d),
            _U32.pack(k),
            _U64.pack(atoms.n_atoms),
            _U8.pack(width),
            np.asarray(atoms.bins_per_feature, dtype="<u2").tobytes(),
        ]
    )
    dtype = _atom_dtype(d, k, width)
    rec = np.empty(atoms.n_atoms, dtype=dtype)
    key_dtype = ">u2" if width == 2 else "u1"
    keys_be = np.ascontiguousarray(atoms.keys.astype(key_dtype))
    rec["key"] = keys_be.view(np.dtype((np.void, d * width))).reshape(-1)
    rec["w"] = atoms.w
    rec["g"] = atoms.g
    rec["h"] = atoms.h
    return header + rec.tobytes()


def _decode_atoms(c: _Cursor) -> AtomMap:
    round_t = _read_u32(c)
    d = _read_u32(c)
    k = _read_u32(c)
    count = _read_u64(c)
    width = _read_u8(c)
    if d == 0 or d > 1_000_000 or k == 0 or k > 100_000 or width not in (1, 2):
        raise FrameError("implausible atom dimensions")
    raw_bins = c.take(d * 2)
    bins_per_feature = tuple(int(v) for v in np.frombuffer(raw_bins, dtype="<u2"))
    dtype = _atom_dtype(d, k, width)
    nbytes = count * dtype.itemsize
    raw = c.take(nbytes)
    rec = np.frombuffer(raw, dtype=dtype)
    key_dtype = ">u2" if width == 2 else "u1"
    keys = (
        np.frombuffer(rec["key"].tobytes(), dtype=key_dtype)
        .reshape(count, d)
        .astype(np.uint16)
    )
    if any(b < 1 for b in bins_per_feature):
        raise FrameError("bad bin counts")
    if count:
        kmax = keys.max(axis=0)
        if any(int(kmax[f]) >= bins_per_feature[f] for f in range(d)):
            raise FrameError("atom key exceeds bin count")
    return AtomMap(
        round_t=round_t,
        keys=keys,
        w=rec["w"].astype(np.int64),
        g=rec["g"].astype(np.float64).reshape(count, k),
        h=rec["h"].astype(np.float64).reshape(count, k),
        bins_per_feature=bins_per_feature,
    )


def _encode_ensemble(e: Ensemble) -> bytes:
    parts = [
        _U32.pack(e.n_rounds),
        _U32.pack(e.n_classes),
        _U32.pack(e.n_features),
        _F64.pack(e.eta),
        _F64.pack(e.base_margin),
    ]
    for rt in e.rounds:
        blob = _encode_round_trees(rt)
        parts.append(_U32.pack(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def _decode_ensemble(c: _Cursor) -> Ensemble:
    n_rounds = _read_u32(c)
    n_classes = _read_u32(c)
    n_features = _read_u32(c)
    eta = _read_f64(c)
    base = _read_f64(c)
    if n_rounds > 1_000_000:
        raise FrameError("implausible round count")
    rounds = []
    for _ in range(n_rounds):
        blob_len = _read_u32(c)
        sub = _Cursor(c.take(blob_len))
        rt = _decode_round_trees(sub)
        sub.done()
        rounds.append(rt)
    return Ensemble(n_classes=n_classes, eta=eta, rounds=rounds, base_margin=base, n_features=n_features)


# -- message payloads ---------------------------------------------------------

_SKETCH_REQ = struct.Struct("<IId")
_FINAL_ACK = struct.Struct("<IIdQ")


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, SketchReq):
        return MSG_SKETCH_REQ, _SKETCH_REQ.pack(msg.t, msg.bins, msg.rho)
    if isinstance(msg, SketchResp):
        parts = [_U32.pack(msg.t), _U32.pack(msg.client_id), _U32.pack(len(msg.sketches))]
        for s in msg.sketches:
            blob = encode_sketch(s)
            parts.append(_U32.pack(len(blob)))
            parts.append(blob)
        return MSG_SKETCH_RESP, b"".join(parts)
    if isinstance(msg, AtomReq):
        parts = [_U32.pack(msg.t), _U8.pack(1 if msg.delta is not None else 0)]
        if msg.delta is not None:
            blob = _encode_round_trees(msg.delta)
            parts.append(_U32.pack(len(blob)))
            parts.append(blob)
        parts.append(_encode_edge_set(msg.edge_set))
        return MSG_ATOM_REQ, b"".join(parts)
    if isinstance(msg, AtomResp):
        head = struct.pack("<IIdQ", msg.t, msg.client_id, msg.loss_sum, msg.n_samples)
        return MSG_ATOM_RESP, head + _encode_atoms(msg.atoms)
    if isinstance(msg, ModelFinal):
        return MSG_MODEL_FINAL, _encode_ensemble(msg.ensemble)
    if isinstance(msg, FinalAck):
        return MSG_FINAL_ACK, _FINAL_ACK.pack(msg.t, msg.client_id, msg.loss_sum, msg.n_samples)
    raise FrameError(f"cannot encode message type {type(msg).__name__}")


def _decode_payload(msg_type: int, payload: bytes) -> Message:
    c = _Cursor(payload)
    if msg_type == MSG_SKETCH_REQ:
        t, bins, rho = c.unpack(_SKETCH_REQ)
        c.done()
        return SketchReq(t=t, bins=bins, rho=rho)
    if msg_type == MSG_SKETCH_RESP:
        t = _read_u32(c)
        client_id = _read_u32(c)
        d = _read_u32(c)
        if d > 1_000_000:
            raise FrameError("implausible feature count")
        sketches = []
        for _ in range(d):
            blob_len = _read_u32(c)
            sub = _Cursor(c.take(blob_len))
            sketches.append(decode_sketch(sub))
            sub.done()
        c.done()
        return SketchResp(t=t, client_id=client_id, sketches=sketches)
    if msg_type == MSG_ATOM_REQ:
        t = _read_u32(c)
        has_delta = _read_u8(c)
        if has_delta not in (0, 1):
            raise FrameError("bad delta flag")
        delta = None
        if has_delta:
            blob_len = _read_u32(c)
            sub = _Cursor(c.take(blob_len))
            delta = _decode_round_trees(sub)
            sub.done()
        edge_set = _decode_edge_set(c)
        c.done()
        return AtomReq(t=t, delta=delta, edge_set=edge_set)
    if msg_type == MSG_ATOM_RESP:
        t, client_id, loss_sum, n_samples = c.unpack(_FINAL_ACK)
        atoms = _decode_atoms(c)
        c.done()
        return AtomResp(t=t, client_id=client_id, atoms=atoms, loss_sum=loss_sum, n_samples=n_samples)
    if msg_type == MSG_MODEL_FINAL:
        ens = _decode_ensemble(c)
        c.done()
        return ModelFinal(ensemble=ens)
    if msg_type == MSG_FINAL_ACK:
        t, client_id, loss_sum, n_samples = c.unpack(_FINAL_ACK)
        c.done()
        return FinalAck(t=t, client_id=client_id, loss_sum=loss_sum, n_samples=n_samples)
    raise FrameError(f"unknown message type {msg_type}")


# -- public API ---------------------------------------------------------------


def encode(msg: Message) -> bytes:
    """Encode a message into one frame."""
    msg_type, payload = _encode_payload(msg)
    return HEADER.pack(MAGIC, PROTOCOL_VERSION, msg_type, len(payload)) + payload


def decode(frame: bytes) -> Message:
    """Decode exactly one frame; any malformation raises FrameError."""
    if len(frame) < HEADER.size:
        raise FrameError("frame shorter than header")
    try:
        magic, version, msg_type, payload_len = HEADER.unpack(frame[: HEADER.size])
    except struct.error as exc:  # pragma: no cover - length checked above
        raise FrameError("unreadable header") from exc
    if magic != MAGIC:
        raise FrameError("bad magic")
    if version != PROTOCOL_VERSION:
        raise FrameError(f"unsupported protocol version {version}")
    payload = frame[HEADER.size :]
    if len(payload) != payload_len:
        raise FrameError("payload length mismatch")
    try:
        return _decode_payload(msg_type, payload)
    except FrameError:
        raise
    except Exception as exc:
        # Decoders may only raise FrameError; anything else is a bug, but
        # hostile inputs must still never escape as crashes.
        raise FrameError(f"malformed payload: {exc}") from exc


def frame_size_from_header(header: bytes) -> int:
    """Total frame size implied by a header prefix (for stream readers)."""
    if len(header) < HEADER.size:
        raise FrameError("short header")
    magic, version, _, payload_len = HEADER.unpack(header[: HEADER.size])
    if magic != MAGIC or version != PROTOCOL_VERSION:
        raise FrameError("bad magic or version")
    return HEADER.size + payload_len
