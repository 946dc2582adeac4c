"""Federated mask-averaging protocol.

Per round: the server broadcasts p(t) as n float32 values, every client
trains its own scores from p(t) on its shard, samples a mask from the
result and uploads it as n packed bits, and the server sets p(t+1) to the
mean of the K masks. Clients and server only talk through the byte
encodings below, and the ledger counts exactly what crosses that boundary.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis, network
from .data import Dataset
from .errors import ConfigError
from .influence import InfluenceMatrix, generate
from .rng import PARTITION, as_seed
from .trainer import SAMPLED, ScoreVector, evaluate, init_p, run_epoch, sample_mask

log = logging.getLogger(__name__)

FLOAT_BITS = 32
_LEN = struct.Struct("<I")


# -- wire formats -----------------------------------------------------------

def encode_probabilities(p) -> bytes:
    """n little-endian float32 values."""
    return np.asarray(p, dtype="<f4").tobytes()


def decode_probabilities(buf: bytes) -> np.ndarray:
    return np.frombuffer(buf, dtype="<f4").astype(np.float64)


def encode_mask(z) -> bytes:
    """uint32 LE bit count, then ceil(n/8) bytes, LSB-first within a byte."""
    z = np.asarray(z, dtype=np.uint8)
    if z.ndim != 1 or np.any(z > 1):
        raise ValueError("mask must be a 1-D vector of bits")
    return _LEN.pack(z.size) + np.packbits(z, bitorder="little").tobytes()


def decode_mask(buf: bytes) -> np.ndarray:
    (n,) = _LEN.unpack_from(buf, 0)
    payload = np.frombuffer(buf, dtype=np.uint8, offset=_LEN.size)
    if payload.size != (n + 7) // 8:
        raise ValueError(f"mask payload has {payload.size} bytes, expected {(n + 7) // 8}")
    return np.unpackbits(payload, count=n, bitorder="little")


def mask_bits(buf: bytes) -> int:
    return _LEN.unpack_from(buf, 0)[0]


def communication_savings(m: int, n: int, rounds: int = 1) -> tuple[float, float]:
    """Per-round savings against sending all m weights as float32 both ways.

    Client: 32m bits vs n bits. Server: 32m bits vs 32n bits. The number
    of rounds scales both sides equally and cancels.
    """
    if not 1 <= n <= m:
        raise ConfigError(f"need 1 <= n <= m, got n={n}, m={m}")
    return FLOAT_BITS * m / n, m / n


# -- configuration and records ---------------------------------------------

@dataclass
class FederatedConfig:
    clients: int = 10
    rounds: int = 100
    local_epochs: int = 1
    learning_rate: float = 0.1
    compression: int = 1
    d: int = 10
    arch: str = "mnistfc"
    seed: int = 1
    batch_size: int = 128
    eval_samples: int = 100
    tau: float = 0.1
    jobs: int = 1
    n: int | None = None

    def __post_init__(self):
        if self.clients < 1:
            raise ConfigError("need at least one client")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")

    @property
    def m(self) -> int:
        return network.param_count(network.get_arch(self.arch))

    @property
    def n_params(self) -> int:
        n = self.n if self.n is not None else self.m // self.compression
        if n < 1:
            raise ConfigError(f"compression {self.compression} leaves no trainable parameters")
        return n


@dataclass
class RoundMetrics:
    round: int
    bits_downlink: int
    bits_uplink: int
    expected_acc: float = float("nan")
    sampled_mean: float = float("nan")
    sampled_std: float = float("nan")
    dim_of_mean: int = 0
    mean_of_dims: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CommLedger:
    bits_downlink: int = 0
    bits_uplink: int = 0
    messages: int = 0

    def down(self, buf: bytes) -> bytes:
        self.bits_downlink += 8 * len(buf)
        self.messages += 1
        return buf

    def up(self, buf: bytes) -> bytes:
        # the length prefix and byte padding are framing, not payload
        self.bits_uplink += mask_bits(buf)
        self.messages += 1
        return buf


# -- partition --------------------------------------------------------------

def partition_iid(dataset, K: int, seed) -> list[np.ndarray]:
    """Shuffle indices and cut into K shards whose sizes differ by <= 1."""
    size = len(dataset)
    if K < 1 or K > size:
        raise ConfigError(f"cannot split {size} items across {K} clients")
    order = as_seed(seed).stream(PARTITION).permutation(size)
    return [np.sort(part) for part in np.array_split(order, K)]


# -- participants -----------------------------------------------------------

class Client:
    """A client sees only its own shard and whatever the server broadcasts."""

    def __init__(self, k: int, shard: Dataset):
        self.k = k
        self._shard = shard
        self.last_p: np.ndarray | None = None

    def __len__(self):
        return len(self._shard)

    def local_round(self, message: bytes, Q: InfluenceMatrix, arch, config: FederatedConfig,
                    seed, t: int) -> bytes:
        rng = as_seed(seed).client(self.k, t)
        state = ScoreVector.from_p(decode_probabilities(message))
        for _ in range(config.local_epochs):
            run_epoch(state, Q, arch, self._shard, SAMPLED, config.learning_rate,
                      config.batch_size, rng)
        p_new = state.p
        self.last_p = p_new
        return encode_mask(sample_mask(p_new, rng))


class Server:
    def __init__(self, p0):
        self.p = np.asarray(p0, dtype=np.float64)

    def broadcast(self) -> bytes:
        return encode_probabilities(self.p)

    def aggregate(self, uploads: list[bytes]) -> np.ndarray:
        counts = np.zeros(self.p.size, dtype=np.int64)
        for buf in uploads:
            z = decode_mask(buf)
            if z.size != self.p.size:
                raise ValueError(f"client mask has {z.size} bits, expected {self.p.size}")
            counts += z
        self.p = counts / len(uploads)
        return self.p


def run_round(server: Server, Q: InfluenceMatrix, clients: list[Client], config: FederatedConfig,
              t: int, seed=None, ledger: CommLedger | None = None) -> tuple[np.ndarray, RoundMetrics]:
    """One broadcast / local-train / upload / average cycle."""
    seed = as_seed(config.seed if seed is None else seed)
    ledger = ledger if ledger is not None else CommLedger()
    arch = network.get_arch(config.arch)
    down0, up0 = ledger.bits_downlink, ledger.bits_uplink
    message = server.broadcast()
    inboxes = [ledger.down(message) for _ in clients]

    def work(pair):
        client, inbox = pair
        return client.local_round(inbox, Q, arch, config, seed, t)

    if config.jobs > 1 and len(clients) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            uploads = list(pool.map(work, zip(clients, inboxes)))
    else:
        uploads = [work(pair) for pair in zip(clients, inboxes)]
    uploads = [ledger.up(buf) for buf in uploads]
    p_next = server.aggregate(uploads)

    dim_mean, mean_dims = analysis.fed_dimension_report([c.last_p for c in clients], config.tau)
    metrics = RoundMetrics(
        round=t,
        bits_downlink=ledger.bits_downlink - down0,
        bits_uplink=ledger.bits_uplink - up0,
        dim_of_mean=dim_mean,
        mean_of_dims=mean_dims,
    )
    return p_next, metrics


@dataclass
class SimulationResult:
    p: np.ndarray
    Q: InfluenceMatrix
    rounds: list = field(default_factory=list)
    ledger: CommLedger = field(default_factory=CommLedger)


def setup(config: FederatedConfig, train: Dataset):
    arch = network.get_arch(config.arch)
    seed = as_seed(config.seed)
    Q = generate(arch.layout.fan_in, config.n_params, config.d, seed)
    shards = partition_iid(train, config.clients, seed)
    clients = [Client(k, train.subset(idx)) for k, idx in enumerate(shards)]
    return arch, seed, Q, clients


def run_simulation(config: FederatedConfig, train: Dataset, test: Dataset | None = None,
                   on_round=None) -> SimulationResult:
    """Full protocol from a shared seed: Q, uniform p(0), then ``rounds`` rounds.

    After each round the server evaluates the expected network and
    ``eval_samples`` sampled networks on ``test``; ``on_round`` receives
    each RoundMetrics as it is produced.
    """
    arch, seed, Q, clients = setup(config, train)
    server = Server(init_p(Q.cols, "uniform", seed))
    result = SimulationResult(server.p, Q)
    for t in range(config.rounds):
        p_next, metrics = run_round(server, Q, clients, config, t, seed, result.ledger)
        if test is not None:
            metrics.expected_acc = evaluate(p_next, Q, arch, test, "expected").mean
            if config.eval_samples:
                st = evaluate(p_next, Q, arch, test, "sampled", config.eval_samples,
                              rng=seed.evaluation(t))
                metrics.sampled_mean, metrics.sampled_std = st.mean, st.std
        log.info("round %d: expected %.4f sampled %.4f", t, metrics.expected_acc, metrics.sampled_mean)
        result.rounds.append(metrics)
        if on_round is not None:
            on_round(metrics)
    result.p = server.p
    return result
