"""Deterministic federated-learning simulation.

One process plays the server and all clients. Clients train a shared
multinomial logistic model on synthetic heterogeneous data; the server turns
their pre-update losses into bounded responses, updates its mixing
coefficients with the configured strategy, and aggregates the local updates.

Determinism contract: a run is a pure function of (config, seed). Every
source of randomness draws from a named counter-based stream, and client
results are reduced in fixed index order, so the same run executed with any
number of worker threads is bit-identical.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import aggregators, decision, simplex
from .datasets import (
    STREAM_BATCHING,
    STREAM_SAMPLING,
    ClientDataset,
    SyntheticDataSpec,
    generate_federation,
    stream,
)
from .errors import ConfigError, DegenerateSubsetError, DivergenceError
from .transform import CdfSpec, ResponseRange, Setting, default_range, transform_responses

logger = logging.getLogger(__name__)

ADAPTIVE_SILO = "aaggff-s"
ADAPTIVE_DEVICE = "aaggff-d"


@dataclass(frozen=True)
class FederationConfig:
    """Full description of one simulated federation run."""

    k: int
    t_rounds: int
    method: str
    setting: Setting
    c: float = 1.0
    e: int = 1
    b: int = 20
    lr: float = 0.1
    lr_decay: float = 1.0
    lr_decay_step: int = 1
    weight_decay: float = 0.0
    seed: int = 0
    cdf: CdfSpec = field(default_factory=CdfSpec)
    data: SyntheticDataSpec = field(default_factory=SyntheticDataSpec)
    qfedavg_q: float = 1.0
    term_lambda: float = 1.0
    propfair_m: float = 3.0
    afl_q: float = aggregators.DEFAULT_AFL_Q

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        if self.k < 2:
            raise ConfigError("k", "must be >= 2")
        if self.t_rounds < 1:
            raise ConfigError("t_rounds", "must be >= 1")
        if not (0 < self.c <= 1):
            raise ConfigError("c", "must be in (0,1]")
        if self.e < 1:
            raise ConfigError("e", "must be >= 1")
        if self.b < 1:
            raise ConfigError("b", "must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr", "must be > 0")
        if not (0 < self.lr_decay <= 1):
            raise ConfigError("lr_decay", "must be in (0,1]")
        if self.lr_decay_step < 1:
            raise ConfigError("lr_decay_step", "must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be >= 0")
        if self.method not in aggregators.STRATEGIES:
            raise ConfigError("method", f"must be one of {aggregators.STRATEGIES}")
        if self.method == ADAPTIVE_DEVICE and self.setting is not Setting.CROSS_DEVICE:
            raise ConfigError("method", f"{ADAPTIVE_DEVICE!r} requires setting=cross_device")
        if self.method == ADAPTIVE_SILO and self.setting is not Setting.CROSS_SILO:
            raise ConfigError("method", f"{ADAPTIVE_SILO!r} requires setting=cross_silo")
        if self.setting is Setting.CROSS_SILO and self.c != 1.0:
            raise ConfigError("c", "cross_silo runs use full participation; set c = 1")
        if self.qfedavg_q < 0:
            raise ConfigError("qfedavg_q", "must be >= 0")
        if self.propfair_m < 1:
            raise ConfigError("propfair_m", "must be >= 1")

    @property
    def subset_size(self) -> int:
        """Clients sampled per round: max(1, floor(c*k)); k in silo mode."""
        if self.setting is Setting.CROSS_SILO:
            return self.k
        return max(1, int(np.floor(self.c * self.k)))

    @property
    def inclusion_probability(self) -> float:
        """Exact per-client inclusion probability subset_size / k.

        Fixed-size sampling makes this the probability the estimators and
        step sizes must use; it differs from the configured c when floor(c*k)
        truncates.
        """
        return self.subset_size / self.k

    @property
    def response_range(self) -> ResponseRange:
        return default_range(self.setting, self.k, self.inclusion_probability)


@dataclass
class RoundRecord:
    """Everything the server learned and decided in one round.

    ``duration`` is wall-clock seconds and is intentionally left out of the
    serialized round log, which must be byte-identical across reruns.
    """

    round: int
    sampled: np.ndarray
    losses: np.ndarray
    response: np.ndarray
    response_estimated: bool
    decision_prev: np.ndarray
    decision: np.ndarray
    decision_loss: float
    duration: float = 0.0

    def to_dict(self) -> dict:
        return {
            "type": "round",
            "round": self.round,
            "sampled": [int(i) for i in self.sampled],
            "losses": [float(v) for v in self.losses],
            "response": [float(v) for v in self.response],
            "response_estimated": self.response_estimated,
            "decision_prev": [float(v) for v in self.decision_prev],
            "decision": [float(v) for v in self.decision],
            "decision_loss": float(self.decision_loss),
        }


@dataclass
class RunResult:
    config: FederationConfig
    records: list
    theta: np.ndarray
    client_accuracy: np.ndarray
    runtime: float


class LogisticModel:
    """Multinomial logistic regression over a flat parameter vector."""

    def __init__(self, input_dim: int, num_classes: int):
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.dim = num_classes * input_dim + num_classes

    def init_params(self) -> np.ndarray:
        return np.zeros(self.dim)

    def _unpack(self, theta):
        w = theta[: self.num_classes * self.input_dim].reshape(self.num_classes, self.input_dim)
        b = theta[self.num_classes * self.input_dim :]
        return w, b

    def _log_probs(self, theta, x):
        w, b = self._unpack(theta)
        logits = x @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))

    def loss(self, theta, x, y) -> float:
        """Mean cross-entropy over (x, y)."""
        lp = self._log_probs(theta, x)
        return -float(lp[np.arange(y.size), y].mean())

    def grad(self, theta, x, y, weight_decay: float = 0.0) -> np.ndarray:
        probs = np.exp(self._log_probs(theta, x))
        probs[np.arange(y.size), y] -= 1.0
        gw = probs.T @ x / y.size
        gb = probs.mean(axis=0)
        g = np.concatenate([gw.ravel(), gb])
        if weight_decay:
            g += weight_decay * theta
        return g

    def predict(self, theta, x) -> np.ndarray:
        w, b = self._unpack(theta)
        return np.argmax(x @ w.T + b, axis=1)


def client_update(
    model: LogisticModel,
    theta: np.ndarray,
    dataset: ClientDataset,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    weight_decay: float = 0.0,
    round_index: int | None = None,
):
    """Evaluate then locally train the received model.

    Returns (loss_before, delta): the full-dataset mean loss at the received
    parameters, computed before any step, and received-minus-trained
    parameters after ``epochs`` passes of minibatch SGD. Weight decay enters
    the update only; the reported loss is the plain data loss.
    """
    x, y = dataset.x_train, dataset.y_train
    loss_before = model.loss(theta, x, y)
    if not np.isfinite(loss_before):
        raise DivergenceError(
            f"non-finite local loss for client {dataset.client_id}",
            round_index=round_index,
            client_id=dataset.client_id,
        )
    th = theta.copy()
    n = y.size
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            th -= lr * model.grad(th, x[idx], y[idx], weight_decay)
    if not np.all(np.isfinite(th)):
        raise DivergenceError(
            f"local training diverged for client {dataset.client_id}",
            round_index=round_index,
            client_id=dataset.client_id,
        )
    return loss_before, theta - th


def sample_clients(k: int, c: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement of size max(1, floor(c*k)).

    Returned sorted so downstream reductions run in fixed index order.
    """
    if not (0 < c <= 1):
        raise ConfigError("c", "must be in (0,1]")
    m = max(1, int(np.floor(c * k)))
    return np.sort(rng.choice(k, size=m, replace=False))


def _collect(model, theta, clients, subset, cfg: FederationConfig, t: int, lr: float, workers: int):
    """Run client updates for ``subset``, reducing in fixed index order."""

    def one(i):
        rng = stream(cfg.seed, STREAM_BATCHING, t, int(i))
        return client_update(
            model, theta, clients[int(i)], cfg.e, cfg.b, lr, rng, cfg.weight_decay, round_index=t
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, subset))
    else:
        results = [one(i) for i in subset]
    losses = np.array([r[0] for r in results])
    deltas = np.stack([r[1] for r in results])
    return losses, deltas


def evaluate_clients(model: LogisticModel, theta: np.ndarray, clients) -> np.ndarray:
    """Per-client held-out accuracy of the final global model, in [0, 1].

    Clients whose split produced no test samples are scored on their
    training set instead (logged)."""
    acc = np.empty(len(clients))
    for i, ds in enumerate(clients):
        x, y = (ds.x_test, ds.y_test) if ds.y_test.size else (ds.x_train, ds.y_train)
        if ds.y_test.size == 0:
            logger.warning("client %d has no held-out samples; evaluating on training data", i)
        acc[i] = float(np.mean(model.predict(theta, x) == y))
    return acc


def _run(cfg: FederationConfig, workers: int = 1, clients=None) -> RunResult:
    start_time = time.perf_counter()
    silo = cfg.setting is Setting.CROSS_SILO
    if clients is None:
        clients = generate_federation(cfg.data, cfg.k, cfg.seed, min_batch=cfg.b)
    elif len(clients) != cfg.k:
        raise ConfigError("k", f"{len(clients)} client datasets supplied for k={cfg.k}")
    model = LogisticModel(cfg.data.input_dim, cfg.data.num_classes)
    theta = model.init_params()
    sample_sizes = np.array([ds.n_train for ds in clients], dtype=float)

    rng_range = cfg.response_range
    c_incl = cfg.inclusion_probability
    ons_state = ftrl_state = baseline = None
    if cfg.method == ADAPTIVE_SILO:
        ons_state = aggregators.OnsState.init(cfg.k, decision.lipschitz_full(rng_range))
        p_cur = ons_state.decision
    elif cfg.method == ADAPTIVE_DEVICE:
        ftrl_state = aggregators.FtrlState.init(cfg.k, decision.lipschitz_dr(rng_range, c_incl))
        p_cur = simplex.uniform(cfg.k)
    else:
        baseline = aggregators.baseline_params_for(
            cfg.method, sample_sizes, q=cfg.qfedavg_q, tilt=cfg.term_lambda,
            propfair_m=cfg.propfair_m, afl_q=cfg.afl_q,
        )
        p_cur = baseline.prior

    records = []
    lr = cfg.lr
    try:
        for t in range(1, cfg.t_rounds + 1):
            tic = time.perf_counter()
            if silo:
                subset = np.arange(cfg.k)
            else:
                subset = sample_clients(cfg.k, cfg.c, stream(cfg.seed, STREAM_SAMPLING, t))
            losses, deltas = _collect(model, theta, clients, subset, cfg, t, lr, workers)

            observed = transform_responses(losses, rng_range, cfg.cdf)
            if silo:
                response, estimated = observed, False
            else:
                response = decision.dr_estimate(observed, subset, c_incl, cfg.k)
                estimated = True
            dloss = decision.decision_loss(p_cur, response)

            if ons_state is not None:
                g = decision.decision_gradient(p_cur, response)
                ons_state, p_next = aggregators.ons_step(ons_state, g)
            elif ftrl_state is not None:
                reference = np.full(cfg.k, observed.mean())
                g = decision.linearized_gradient(p_cur, response, reference)
                ftrl_state, p_next = aggregators.ftrl_eg_step(ftrl_state, g)
            else:
                prior = baseline.sample_sizes[subset]
                prior = prior / prior.sum()
                sub_weights = aggregators.eg_step(
                    prior, aggregators.baseline_response(baseline, losses), baseline.step_size
                )
                p_next = np.zeros(cfg.k)
                p_next[subset] = sub_weights

            try:
                weights = simplex.normalize_subset(p_next, subset)
            except DegenerateSubsetError:
                logger.warning("round %d: zero decision mass on the sampled set; using uniform", t)
                weights = simplex.uniform(subset.size)
            theta = theta - weights @ deltas

            records.append(
                RoundRecord(
                    round=t,
                    sampled=subset,
                    losses=losses,
                    response=response,
                    response_estimated=estimated,
                    decision_prev=p_cur,
                    decision=p_next,
                    decision_loss=dloss,
                    duration=time.perf_counter() - tic,
                )
            )
            p_cur = p_next if baseline is None else baseline.prior
            if t % cfg.lr_decay_step == 0:
                lr *= cfg.lr_decay
    except DivergenceError as err:
        err.records = records
        raise

    accuracy = evaluate_clients(model, theta, clients)
    return RunResult(cfg, records, theta, accuracy, time.perf_counter() - start_time)


def run_silo(cfg: FederationConfig, workers: int = 1, clients=None) -> RunResult:
    """Full-participation simulation: every client trains every round.

    ``clients`` injects pre-built datasets (length k) in place of the
    generated ones."""
    if cfg.setting is not Setting.CROSS_SILO:
        raise ConfigError("setting", "run_silo requires setting=cross_silo")
    return _run(cfg, workers=workers, clients=clients)


def run_device(cfg: FederationConfig, workers: int = 1, clients=None) -> RunResult:
    """Sampled-participation simulation with estimated responses.

    Each round samples a client subset, fills in the unobserved response
    entries with the doubly robust estimate, updates the full decision from
    the linearized gradient, and aggregates only over the sampled clients
    with subset-renormalized coefficients.
    """
    if cfg.setting is not Setting.CROSS_DEVICE:
        raise ConfigError("setting", "run_device requires setting=cross_device")
    return _run(cfg, workers=workers, clients=clients)


def run_federation(cfg: FederationConfig, workers: int = 1, clients=None) -> RunResult:
    if cfg.setting is Setting.CROSS_SILO:
        return run_silo(cfg, workers, clients)
    return run_device(cfg, workers, clients)
