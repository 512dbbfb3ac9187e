"""Pairwise-mask secure aggregation over the ring Z/2^64.

Each client fixed-point encodes its flattened model and adds, for every
peer, a pseudorandom stream derived from the seed it shares with that peer:
added when the peer has a larger id, subtracted otherwise. Summed over all
clients the streams cancel, so the aggregator recovers the ring sum of the
encodings (hence the mean model) without seeing any single encoding.

Honest-but-curious aggregator, no dropouts: a missing client aborts the
round. Pairwise seeds are dealt by the simulator instead of a key agreement.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EncodingRangeError, ProtocolError, ShapeError
from .nn import Model, flatten, init_model, unflatten

DEFAULT_FRAC_BITS = 24
RING_BITS = 64

PRG_ID = "shake256-xof/v1"
_PRG_DOMAIN = b"fedsim/pairwise-mask"
SEED_BYTES = 16

WIRE_MAGIC = b"FSMU"
WIRE_VERSION = 1
# magic, version, round, client_id, length, frac_bits, len(prg_id)
_HEADER = struct.Struct("<4sHQIQBH")


@dataclass(frozen=True)
class FixedPointVector:
    values: np.ndarray  # uint64 ring elements
    frac_bits: int = DEFAULT_FRAC_BITS
    layer_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype != np.uint64 or values.ndim != 1:
            raise ShapeError("ring vector must be a 1-D uint64 array")
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.values.shape[0]


def encode_vector(values, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    """``round(w * 2**frac_bits) mod 2**64`` for every entry."""
    values = np.asarray(values, dtype=np.float64).ravel()
    limit = 2.0 ** (RING_BITS - 1 - frac_bits)
    bad = np.flatnonzero(~(np.abs(values) < limit))
    if bad.size:
        raise EncodingRangeError(int(bad[0]), float(values[bad[0]]), limit)
    return np.rint(values * 2.0 ** frac_bits).astype(np.int64).view(np.uint64)


def encode_fixed(model: Model, frac_bits: int = DEFAULT_FRAC_BITS) -> FixedPointVector:
    return FixedPointVector(encode_vector(flatten(model), frac_bits), frac_bits, tuple(model.layer_sizes))


def decode_vector(ring_sum, n_clients: int, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    """Centred (two's-complement) reading of a ring sum, divided down to the mean."""
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    signed = np.asarray(ring_sum, dtype=np.uint64).view(np.int64)
    return signed.astype(np.float64) / 2.0 ** frac_bits / n_clients


def decode_sum(
    total: FixedPointVector,
    n_clients: int,
    frac_bits: int | None = None,
    like: Model | None = None,
) -> Model:
    """Mean model from the ring sum of ``n_clients`` encodings.

    The architecture comes from ``like`` when given, otherwise from the
    layer sizes carried on ``total``.
    """
    frac_bits = total.frac_bits if frac_bits is None else frac_bits
    if like is None:
        if total.layer_sizes is None:
            raise ShapeError("no architecture to decode into; pass like=")
        like = init_model(total.layer_sizes, 0)
    if total.length != like.n_params:
        raise ShapeError(f"ring vector of length {total.length} vs {like.n_params} parameters")
    return unflatten(decode_vector(total.values, n_clients, frac_bits), like)


@dataclass(frozen=True)
class PairwiseSeeds:
    n_clients: int
    seeds: dict[tuple[int, int], int]
    round_nonce: int = 0

    def seed(self, i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        try:
            return self.seeds[key]
        except KeyError:
            raise ProtocolError(f"no shared seed for clients {i} and {j}") from None

    def next_round(self) -> "PairwiseSeeds":
        return PairwiseSeeds(self.n_clients, self.seeds, self.round_nonce + 1)


def deal_pairwise_seeds(n_clients: int, seed: int | None = None) -> PairwiseSeeds:
    """Out-of-band seed setup: one fresh 128-bit secret per unordered client pair.

    With ``seed`` set, the secrets are reproducible (simulation only).
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if seed is None:
        draw = lambda: secrets.randbits(8 * SEED_BYTES)  # noqa: E731
    else:
        rng = np.random.default_rng(seed)
        draw = lambda: int.from_bytes(rng.bytes(SEED_BYTES), "little")  # noqa: E731
    seeds, used = {}, set()
    for i in range(n_clients):
        for j in range(i + 1, n_clients):
            s = draw()
            while s in used:
                s = draw()
            used.add(s)
            seeds[(i, j)] = s
    return PairwiseSeeds(n_clients, seeds)


def prg_stream(pair_seed: int, round_index: int, length: int) -> np.ndarray:
    """``length`` uniform 64-bit words from SHAKE-256 keyed by (seed, round)."""
    h = hashlib.shake_256(_PRG_DOMAIN)
    h.update(pair_seed.to_bytes(SEED_BYTES, "little"))
    h.update(int(round_index).to_bytes(8, "little"))
    return np.frombuffer(h.digest(8 * length), dtype="<u8").astype(np.uint64)


def gen_masks(client_id: int, seeds: PairwiseSeeds, round_index: int, length: int) -> np.ndarray:
    mask = np.zeros(length, dtype=np.uint64)
    for peer in range(seeds.n_clients):
        if peer == client_id:
            continue
        stream = prg_stream(seeds.seed(client_id, peer), round_index, length)
        if peer > client_id:
            mask += stream
        else:
            mask -= stream
    return mask


@dataclass(frozen=True)
class MaskedUpdate:
    client_id: int
    round: int
    masked: FixedPointVector
    prg_id: str = field(default=PRG_ID)

    def to_bytes(self) -> bytes:
        prg = self.prg_id.encode("utf-8")
        header = _HEADER.pack(
            WIRE_MAGIC, WIRE_VERSION, self.round, self.client_id,
            self.masked.length, self.masked.frac_bits, len(prg),
        )
        return header + prg + self.masked.values.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MaskedUpdate":
        if len(blob) < _HEADER.size:
            raise ProtocolError("truncated masked update header")
        magic, version, rnd, cid, length, frac_bits, n_prg = _HEADER.unpack_from(blob)
        if magic != WIRE_MAGIC or version != WIRE_VERSION:
            raise ProtocolError(f"unsupported masked update (magic={magic!r}, version={version})")
        start = _HEADER.size + n_prg
        if len(blob) != start + 8 * length:
            raise ProtocolError(f"payload holds {len(blob) - start} bytes, header says {8 * length}")
        prg_id = blob[_HEADER.size:start].decode("utf-8")
        values = np.frombuffer(blob, dtype="<u8", count=length, offset=start).astype(np.uint64)
        return cls(cid, rnd, FixedPointVector(values, frac_bits), prg_id)


def mask_update(
    encoded: FixedPointVector, mask, client_id: int = 0, round_index: int = 0
) -> MaskedUpdate:
    mask = np.asarray(mask, dtype=np.uint64)
    if mask.shape != encoded.values.shape:
        raise ShapeError(f"mask length {mask.size} vs encoding length {encoded.length}")
    # layer sizes stay with the client; the update carries ring words only
    return MaskedUpdate(client_id, round_index, FixedPointVector(encoded.values + mask, encoded.frac_bits))


def client_update(
    model: Model,
    client_id: int,
    seeds: PairwiseSeeds,
    round_index: int,
    frac_bits: int = DEFAULT_FRAC_BITS,
) -> MaskedUpdate:
    """Client side of one round: encode, mask, and hand back only the masked words."""
    encoded = encode_fixed(model, frac_bits)
    return mask_update(encoded, gen_masks(client_id, seeds, round_index, encoded.length), client_id, round_index)


def aggregate_masked(updates: Sequence[MaskedUpdate], n_clients: int | None = None) -> FixedPointVector:
    """Ring sum of one masked update per client ``0..n_clients-1``.

    Any missing or duplicated client, or disagreement on round, length or
    fixed-point scale, aborts with :class:`ProtocolError`.
    """
    if not updates:
        raise ProtocolError("no updates to aggregate")
    n_clients = len(updates) if n_clients is None else n_clients
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate client ids in {sorted(ids)}")
    missing = set(range(n_clients)) - set(ids)
    extra = set(ids) - set(range(n_clients))
    if missing or extra:
        raise ProtocolError(f"missing clients {sorted(missing)}, unexpected {sorted(extra)}")
    first = updates[0]
    for u in updates:
        if (u.round, u.masked.length, u.masked.frac_bits, u.prg_id) != (
            first.round, first.masked.length, first.masked.frac_bits, first.prg_id
        ):
            raise ProtocolError(f"client {u.client_id} disagrees on round/length/frac_bits/prg")
    total = np.zeros(first.masked.length, dtype=np.uint64)
    for u in sorted(updates, key=lambda u: u.client_id):
        total += u.masked.values
    return FixedPointVector(total, first.masked.frac_bits)
