"""Population dynamics: agent state, pair scheduling, and interactions.

An interaction between two agents applies one local estimator step each
(at the pre-interaction models), then replaces both models with their
average.  Two schedulers are provided: ``uniform_pair`` draws one unordered
pair per fine-grained step, ``random_matching`` pairs all agents via a
uniformly random perfect matching per step (one agent idles when n is odd).

Clock conventions: ``interactions`` counts pairwise interactions
(fine-grained time), parallel time is interactions / n, and a matching step
counts as one simulation step but n // 2 interactions.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .estimators import EstimatorConfig, estimate_gradient
from . import metrics as _metrics

UNIFORM_PAIR = "uniform_pair"
RANDOM_MATCHING = "random_matching"
SCHEDULER_MODES = (UNIFORM_PAIR, RANDOM_MATCHING)

# purpose tags for deriving per-stream seeds from one master seed
TAG_AGENT = 1
TAG_SCHEDULER = 2
TAG_METRICS = 3
TAG_INIT = 4


def derive_rng(seed, *path):
    """Child generator for (master seed, purpose tag, indices...)."""
    entropy = [int(v) for v in (list(np.atleast_1d(seed)) + list(path))]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: constant, or linear warmup into cosine decay."""

    eta_max: float
    mode: str = "constant"
    eta_min: float = 0.0
    warmup_steps: int = 0
    total_steps: int = 0

    def __post_init__(self):
        if self.mode not in ("constant", "warmup_cosine"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.eta_max < 0 or self.eta_min < 0 or self.eta_min > self.eta_max:
            raise ValueError("need 0 <= eta_min <= eta_max")
        if self.mode == "warmup_cosine":
            if self.warmup_steps < 0 or self.total_steps <= self.warmup_steps:
                raise ValueError("warmup_cosine needs 0 <= warmup_steps < total_steps")


def eta_at(schedule: Schedule, step: int) -> float:
    """Learning rate at a scheduler step."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.mode == "constant":
        return schedule.eta_max
    if step < schedule.warmup_steps:
        return schedule.eta_max * step / schedule.warmup_steps
    span = schedule.total_steps - schedule.warmup_steps
    progress = min((step - schedule.warmup_steps) / span, 1.0)
    return schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) * (
        1.0 + math.cos(math.pi * progress)
    )


@dataclass
class AgentState:
    model: np.ndarray
    estimator: EstimatorConfig
    shard: np.ndarray
    rng: np.random.Generator
    momentum_buffer: np.ndarray
    interactions: int = 0


@dataclass
class PopulationConfig:
    n0: int
    n1: int
    schedule: Schedule
    T: int = 1
    scheduler_mode: str = UNIFORM_PAIR
    momentum: float = 0.0
    c: float | None = None  # nu = eta / c; defaults to sqrt(d)
    seed: int = 0
    metric_cadence: int = 10
    zo: EstimatorConfig | None = None
    fo: EstimatorConfig | None = None

    def __post_init__(self):
        if self.n0 < 0 or self.n1 < 0 or self.n0 + self.n1 < 2:
            raise ValueError("need n0, n1 >= 0 with n0 + n1 >= 2")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.scheduler_mode not in SCHEDULER_MODES:
            raise ValueError(f"unknown scheduler mode {self.scheduler_mode!r}")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if self.metric_cadence < 1:
            raise ValueError("metric_cadence must be >= 1")
        if self.n0 > 0 and self.zo is None:
            raise ValueError("n0 > 0 requires a zeroth-order estimator config")
        if self.n1 > 0 and self.fo is None:
            raise ValueError("n1 > 0 requires a first-order estimator config")


@dataclass
class InteractionEvent:
    i: int
    j: int
    eta: float
    update_i: np.ndarray
    update_j: np.ndarray
    function_evals: int


@dataclass
class Population:
    objective: object
    agents: list
    n0: int
    n1: int
    c: float
    momentum: float
    scheduler_mode: str
    scheduler_rng: np.random.Generator
    metrics_rng: np.random.Generator
    interactions: int = 0
    function_evals: int = 0
    sim_steps: int = 0

    @property
    def n(self):
        return len(self.agents)

    @property
    def parallel_time(self):
        return self.interactions / len(self.agents)

    def models(self):
        return np.array([agent.model for agent in self.agents])

    def clone(self, seed=None):
        """Independent copy; ``seed`` reseeds every rng stream in the copy."""
        agents = []
        for i, agent in enumerate(self.agents):
            rng = derive_rng(seed, TAG_AGENT, i) if seed is not None else copy.deepcopy(agent.rng)
            agents.append(AgentState(model=agent.model.copy(), estimator=agent.estimator,
                                     shard=agent.shard, rng=rng,
                                     momentum_buffer=agent.momentum_buffer.copy(),
                                     interactions=agent.interactions))
        sched = derive_rng(seed, TAG_SCHEDULER) if seed is not None \
            else copy.deepcopy(self.scheduler_rng)
        met = derive_rng(seed, TAG_METRICS) if seed is not None \
            else copy.deepcopy(self.metrics_rng)
        return Population(objective=self.objective, agents=agents, n0=self.n0, n1=self.n1,
                          c=self.c, momentum=self.momentum, scheduler_mode=self.scheduler_mode,
                          scheduler_rng=sched, metrics_rng=met,
                          interactions=self.interactions, function_evals=self.function_evals,
                          sim_steps=self.sim_steps)


def init_population(cfg: PopulationConfig, spec, partition, x0) -> Population:
    """All agents start at x0; agents 0..n0-1 are zeroth-order, the rest
    first-order."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.d,):
        raise ValueError("x0 dimension does not match the objective")
    if len(partition.zo_shards) != cfg.n0 or len(partition.fo_shards) != cfg.n1:
        raise ValueError("partition shard counts do not match n0 / n1")
    agents = []
    for i in range(cfg.n0 + cfg.n1):
        est = cfg.zo if i < cfg.n0 else cfg.fo
        shard = partition.zo_shards[i] if i < cfg.n0 else partition.fo_shards[i - cfg.n0]
        agents.append(AgentState(
            model=x0.copy(),
            estimator=est,
            shard=np.asarray(shard),
            rng=derive_rng(cfg.seed, TAG_AGENT, i),
            momentum_buffer=np.zeros(spec.d),
        ))
    c = cfg.c if cfg.c is not None else math.sqrt(spec.d)
    return Population(objective=spec, agents=agents, n0=cfg.n0, n1=cfg.n1, c=c,
                      momentum=cfg.momentum, scheduler_mode=cfg.scheduler_mode,
                      scheduler_rng=derive_rng(cfg.seed, TAG_SCHEDULER),
                      metrics_rng=derive_rng(cfg.seed, TAG_METRICS))


def hdo_interact(spec, a: AgentState, b: AgentState, eta: float, c: float,
                 momentum: float = 0.0, i: int = -1, j: int = -1) -> InteractionEvent:
    """One pairwise interaction: local steps at the pre-step models, then
    both agents adopt the average.

    Momentum filters each estimate through the agent's persistent buffer
    (g <- m g + (1 - m) G); buffers are never exchanged.  eta = 0 degenerates
    to pure gossip averaging and skips the estimator calls.
    """
    xa, xb = a.model, b.model
    if xa.shape != xb.shape:
        raise ValueError("agents must share the model dimension")
    if eta == 0.0:
        upd_a = np.zeros_like(xa)
        upd_b = np.zeros_like(xb)
        evals = 0
        avg = 0.5 * (xa + xb)
    else:
        nu = eta / c
        ga = estimate_gradient(spec, a.shard, xa, a.estimator, a.rng, nu)
        gb = estimate_gradient(spec, b.shard, xb, b.estimator, b.rng, nu)
        if momentum > 0.0:
            buf_a, buf_b = a.momentum_buffer, b.momentum_buffer
            buf_a *= momentum
            buf_a += (1.0 - momentum) * ga.vector
            buf_b *= momentum
            buf_b += (1.0 - momentum) * gb.vector
            upd_a, upd_b = buf_a.copy(), buf_b.copy()
        else:
            upd_a, upd_b = ga.vector, gb.vector
        evals = ga.function_evals + gb.function_evals
        avg = 0.5 * ((xa - eta * upd_a) + (xb - eta * upd_b))
    a.model = avg
    b.model = avg.copy()
    a.interactions += 1
    b.interactions += 1
    return InteractionEvent(i=i, j=j, eta=eta, update_i=upd_a, update_j=upd_b,
                            function_evals=evals)


def draw_pair(rng, n):
    """Unordered pair uniform over the n (n - 1) / 2 choices."""
    i = rng.integers(n)
    j = rng.integers(n - 1)
    if j >= i:
        j += 1
    return int(i), int(j)


def draw_matching(rng, n):
    """Uniformly random perfect matching; odd n leaves one uniform idle agent."""
    perm = rng.permutation(n)
    return [(int(perm[2 * k]), int(perm[2 * k + 1])) for k in range(n // 2)]


def step_uniform_pair(pop: Population, eta: float) -> InteractionEvent:
    """One fine-grained step: a single uniformly chosen pair interacts."""
    if pop.n < 2:
        raise ValueError("need at least two agents")
    i, j = draw_pair(pop.scheduler_rng, pop.n)
    agents = pop.agents
    event = hdo_interact(pop.objective, agents[i], agents[j], eta, pop.c,
                         pop.momentum, i=i, j=j)
    pop.interactions += 1
    pop.sim_steps += 1
    pop.function_evals += event.function_evals
    return event


def step_matching(pop: Population, eta: float) -> list:
    """One simulation step: all pairs of a random perfect matching interact."""
    if pop.n < 2:
        raise ValueError("need at least two agents")
    events = []
    agents = pop.agents
    for i, j in draw_matching(pop.scheduler_rng, pop.n):
        events.append(hdo_interact(pop.objective, agents[i], agents[j], eta,
                                   pop.c, pop.momentum, i=i, j=j))
        pop.interactions += 1
        pop.function_evals += events[-1].function_evals
    pop.sim_steps += 1
    return events


@dataclass
class RunResult:
    records: list
    population: Population
    weighted_average: np.ndarray | None = None


def run(pop: Population, cfg: PopulationConfig, *, val_features=None, val_labels=None,
        sink=None, sample_mtg: bool = False, track_weighted_average: bool = False) -> RunResult:
    """Execute cfg.T scheduler steps, recording metrics every
    cfg.metric_cadence steps (plus the initial and final states).

    ``sink`` is called with each metrics record as it is produced.  With
    ``track_weighted_average`` (strongly convex objectives only) the
    exponentially weighted average of the pre-step means is maintained.
    """
    spec = pop.objective
    schedule = cfg.schedule
    step_fn = step_matching if pop.scheduler_mode == RANDOM_MATCHING else step_uniform_pair
    wavg = None
    if track_weighted_average:
        if spec.ell <= 0:
            raise ValueError("weighted averaging requires a strongly convex objective")
        wavg = _metrics.WeightedAverageState(dim=spec.d)

    records = []

    def record(step, eta):
        rec = _metrics.snapshot(pop, step=step, eta=eta,
                                val_features=val_features, val_labels=val_labels,
                                mtg_rng=pop.metrics_rng if sample_mtg else None)
        records.append(rec)
        if sink is not None:
            sink(rec)

    record(0, eta_at(schedule, 0))
    n = pop.n
    # the running mean follows the update identity mu' = mu - (eta/n)(g_i + g_j)
    # exactly; it is refreshed from the models at every record to pin float drift
    mu = _metrics.compute_mu(pop) if wavg is not None else None
    for t in range(cfg.T):
        eta = eta_at(schedule, t)
        if wavg is not None:
            _metrics.weighted_average_update(wavg, mu, eta, spec.ell, n)
        events = step_fn(pop, eta)
        if mu is not None:
            if eta != 0.0:
                if isinstance(events, InteractionEvent):
                    events = (events,)
                for ev in events:
                    mu = mu - (eta / n) * (ev.update_i + ev.update_j)
        if (t + 1) % cfg.metric_cadence == 0 or t + 1 == cfg.T:
            record(t + 1, eta)
            if mu is not None:
                mu = _metrics.compute_mu(pop)
    return RunResult(records=records, population=pop,
                     weighted_average=None if wavg is None else wavg.value())
