"""Genetic search over network architectures.

Fitness combines the phase-progress error obtained by running the estimator
with the candidate's thigh prediction as reference (error1), the joint-angle
RMSE in degrees (error2), and a deterministic compute-cost term. Elites are
carried unchanged with their cached fitness, so the best total is
non-increasing across generations; per-genome RNG streams derive from
(seed, generation, index) and evaluations are memoized by genome value,
which keeps results independent of evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig
from .gait_data import round_half_up
from .harness import LatencyModel, ReplayConfig, replay_stride
from .phase_estimator import EstimatorConfig
from .predictor import (
    LayerSpec,
    NetworkSpec,
    StrideExample,
    TrainConfig,
    adjust_swing,
    example_arrays,
    forward,
    init_network,
    train,
)

WIDTH_RANGE = (4, 128)
LAYER_RANGE = (1, 5)
DROPOUT_CHOICES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
KIND_CHOICES = ("dense", "attention")
ACTIVATION_CHOICES = ("relu", "tanh", "sigmoid", "identity")


@dataclass(frozen=True)
class LayerGene:
    kind: str
    width: int
    activation: str
    dropout: float

    def __post_init__(self):
        if self.kind not in KIND_CHOICES:
            raise InvalidConfig(f"bad layer kind {self.kind!r}")
        if not WIDTH_RANGE[0] <= self.width <= WIDTH_RANGE[1]:
            raise InvalidConfig(f"width {self.width} outside {WIDTH_RANGE}")
        if self.activation not in ACTIVATION_CHOICES:
            raise InvalidConfig(f"bad activation {self.activation!r}")
        if self.dropout not in DROPOUT_CHOICES:
            raise InvalidConfig(f"dropout {self.dropout} not on the 0.1 grid")


@dataclass(frozen=True)
class Genome:
    layers: tuple[LayerGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not LAYER_RANGE[0] <= len(self.layers) <= LAYER_RANGE[1]:
            raise InvalidConfig(f"layer count {len(self.layers)} outside {LAYER_RANGE}")


@dataclass(frozen=True)
class GAConfig:
    population: int = 20
    elites: int = 3
    generations: int = 20
    crossover_ratio: float = 0.8
    mutation_rate: float = 0.1
    tournament_size: int = 3
    w_angle: float = 1.0
    w_progress: float = 1.0
    w_time: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise InvalidConfig("population must be >= 2")
        if not 0 <= self.elites < self.population:
            raise InvalidConfig("elites must be < population")
        if not (0.0 <= self.crossover_ratio <= 1.0 and 0.0 <= self.mutation_rate <= 1.0):
            raise InvalidConfig("ratios must be in [0, 1]")
        if self.generations < 0:
            raise InvalidConfig("generations must be >= 0")


@dataclass(frozen=True)
class FitnessRecord:
    error1: float  # progress RMSE, percentage points
    error2: float  # joint-angle RMSE, degrees (thigh + knee pooled)
    time_cost: float  # deterministic estimated seconds
    total: float

    def __post_init__(self):
        if min(self.error1, self.error2, self.time_cost, self.total) < 0:
            raise InvalidConfig("fitness components must be nonnegative")


@dataclass(frozen=True)
class EvalConfig:
    """How candidate networks are trained and scored."""

    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=120))
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    holdout_fraction: float = 0.25
    eval_rate_hz: float = 25.0
    eval_latency_ms: float = 40.0
    trajectory_len: int = 100
    penalty: float = 1e3


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_total: float
    mean_total: float
    best_error1: float
    best_error2: float
    best_time: float


def random_genome(rng: np.random.Generator) -> Genome:
    n_layers = int(rng.integers(LAYER_RANGE[0], LAYER_RANGE[1] + 1))
    return Genome(tuple(_random_layer(rng) for _ in range(n_layers)))


def _random_layer(rng: np.random.Generator) -> LayerGene:
    return LayerGene(
        kind=KIND_CHOICES[int(rng.integers(len(KIND_CHOICES)))],
        width=int(rng.integers(WIDTH_RANGE[0], WIDTH_RANGE[1] + 1)),
        activation=ACTIVATION_CHOICES[int(rng.integers(len(ACTIVATION_CHOICES)))],
        dropout=DROPOUT_CHOICES[int(rng.integers(len(DROPOUT_CHOICES)))],
    )


def decode(genome: Genome, input_width: int, trajectory_len: int) -> NetworkSpec:
    """Hidden layers from the genome plus the fixed linear output layer."""
    layers = []
    prev_width = input_width
    for gene in genome.layers:
        if gene.kind == "dense":
            layers.append(
                LayerSpec(
                    kind="dense",
                    width=gene.width,
                    activation=gene.activation,
                    dropout_rate=gene.dropout,
                )
            )
            prev_width = gene.width
        else:
            layers.append(LayerSpec(kind="attention", width=prev_width))
    layers.append(LayerSpec(kind="dense", width=2 * trajectory_len, activation="identity"))
    return NetworkSpec(input_width=input_width, layers=tuple(layers))


def mutate(genome: Genome, rng: np.random.Generator, rate: float) -> Genome:
    """Uniform mutation: each gene field resamples with probability ``rate``;
    the layer count itself is one more gene (insert or drop a layer)."""
    layers = list(genome.layers)
    if rng.random() < rate:
        if len(layers) >= LAYER_RANGE[1] or (len(layers) > LAYER_RANGE[0] and rng.random() < 0.5):
            layers.pop(int(rng.integers(len(layers))))
        else:
            layers.insert(int(rng.integers(len(layers) + 1)), _random_layer(rng))
    mutated = []
    for gene in layers:
        kind, width, act, drop = gene.kind, gene.width, gene.activation, gene.dropout
        if rng.random() < rate:
            kind = KIND_CHOICES[int(rng.integers(len(KIND_CHOICES)))]
        if rng.random() < rate:
            width = int(rng.integers(WIDTH_RANGE[0], WIDTH_RANGE[1] + 1))
        if rng.random() < rate:
            act = ACTIVATION_CHOICES[int(rng.integers(len(ACTIVATION_CHOICES)))]
        if rng.random() < rate:
            drop = DROPOUT_CHOICES[int(rng.integers(len(DROPOUT_CHOICES)))]
        mutated.append(LayerGene(kind=kind, width=width, activation=act, dropout=drop))
    return Genome(tuple(mutated))


def crossover(a: Genome, b: Genome, rng: np.random.Generator) -> Genome:
    """Single-point crossover on the layer lists, repaired to the length bounds."""
    cut_a = int(rng.integers(0, len(a.layers) + 1))
    cut_b = int(rng.integers(0, len(b.layers) + 1))
    child = list(a.layers[:cut_a]) + list(b.layers[cut_b:])
    if len(child) > LAYER_RANGE[1]:
        child = child[: LAYER_RANGE[1]]
    if not child:
        donor = a if rng.random() < 0.5 else b
        child = [donor.layers[int(rng.integers(len(donor.layers)))]]
    return Genome(tuple(child))


def _estimated_seconds(param_count: int, n_train: int, epochs: int, n_eval: int) -> float:
    # Deterministic stand-in for wall time: ~6 flops/parameter/example for a
    # train step, 2 for inference, at a nominal 1 Gflop/s.
    return (6.0 * param_count * n_train * epochs + 2.0 * param_count * n_eval) / 1e9


def evaluate_fitness(
    genome: Genome,
    examples: list[StrideExample],
    ga_cfg: GAConfig,
    eval_cfg: EvalConfig,
    stream: tuple[int, int] = (0, 0),
) -> FitnessRecord:
    """Train the decoded network and score it on the held-out strides.

    A candidate whose training fails or predicts non-finite values gets the
    penalty record instead of raising.
    """
    n_hold = max(1, round_half_up(eval_cfg.holdout_fraction * len(examples)))
    train_ex, hold_ex = examples[:-n_hold], examples[-n_hold:]
    rng = np.random.default_rng([ga_cfg.rng_seed, stream[0], stream[1]])
    seed = int(rng.integers(2**31))
    try:
        spec = decode(genome, len(examples[0].features), eval_cfg.trajectory_len)
        net = init_network(spec, eval_cfg.trajectory_len, seed=seed)
        X, Y = example_arrays(train_ex)
        net, history = train(net, (X, Y), replace(eval_cfg.train, rng_seed=seed))

        angle_sq = []
        progress_sq = []
        for ex in hold_ex:
            pred = adjust_swing(forward(net, ex.features), ex.boundary_knee_deg)
            angle_sq.append((pred.thigh_pred - ex.thigh_true) ** 2)
            angle_sq.append((pred.knee_pred - ex.knee_true) ** 2)
            replay_cfg = ReplayConfig(
                rate_hz=eval_cfg.eval_rate_hz,
                noise_std=0.0,
                rng_seed=seed,
                latency=LatencyModel(kind="fixed", fixed_ms=eval_cfg.eval_latency_ms),
            )
            _, steps = replay_stride(
                ex.thigh_true, ex.knee_true, ex.span_s, pred, replay_cfg, eval_cfg.estimator
            )
            progress_sq.extend((s.progress_pred - s.progress_truth) ** 2 for s in steps)
        error1 = float(np.sqrt(np.mean(progress_sq)))
        error2 = float(np.sqrt(np.mean(np.concatenate(angle_sq))))
        if not (np.isfinite(error1) and np.isfinite(error2)):
            raise FloatingPointError("non-finite evaluation")
        time_cost = _estimated_seconds(
            net.parameter_count(), len(train_ex), len(history), len(hold_ex)
        )
    except Exception:
        error1 = error2 = time_cost = eval_cfg.penalty
    total = ga_cfg.w_progress * error1 + ga_cfg.w_angle * error2 + ga_cfg.w_time * time_cost
    return FitnessRecord(error1=error1, error2=error2, time_cost=time_cost, total=total)


def _tournament(ranked_pool, rng: np.random.Generator, size: int):
    picks = rng.integers(0, len(ranked_pool), size=size)
    best = min(picks, key=lambda idx: ranked_pool[idx][1].total)
    return ranked_pool[best][0]


def evolve(
    cfg: GAConfig,
    examples: list[StrideExample],
    eval_cfg: EvalConfig | None = None,
) -> tuple[Genome, list[GenerationStats]]:
    """Run the GA; returns the best genome and per-generation history
    (generation 0 records the initial random population)."""
    eval_cfg = eval_cfg or EvalConfig()
    init_rng = np.random.default_rng([cfg.rng_seed, 0])
    ops_rng = np.random.default_rng([cfg.rng_seed, 1])
    cache: dict[Genome, FitnessRecord] = {}

    def fitness(genome: Genome, gen: int, idx: int) -> FitnessRecord:
        if genome not in cache:
            cache[genome] = evaluate_fitness(genome, examples, cfg, eval_cfg, stream=(gen, idx))
        return cache[genome]

    population = [random_genome(init_rng) for _ in range(cfg.population)]
    history: list[GenerationStats] = []

    def ranked(gen: int) -> list[tuple[Genome, FitnessRecord]]:
        scored = [(g, fitness(g, gen, i)) for i, g in enumerate(population)]
        scored.sort(key=lambda pair: pair[1].total)
        return scored

    scored = ranked(0)
    history.append(_stats(0, scored))
    for gen in range(1, cfg.generations + 1):
        elites = [g for g, _ in scored[: cfg.elites]]
        n_offspring = cfg.population - cfg.elites
        n_cross = round_half_up(cfg.crossover_ratio * n_offspring)
        pool = scored[cfg.elites :] if len(scored) > cfg.elites else scored
        offspring = []
        for j in range(n_offspring):
            if j < n_cross:
                child = crossover(
                    _tournament(pool, ops_rng, cfg.tournament_size),
                    _tournament(pool, ops_rng, cfg.tournament_size),
                    ops_rng,
                )
            else:
                child = _tournament(pool, ops_rng, cfg.tournament_size)
            offspring.append(mutate(child, ops_rng, cfg.mutation_rate))
        population = elites + offspring
        scored = ranked(gen)
        history.append(_stats(gen, scored))

    return scored[0][0], history


def _stats(gen: int, scored) -> GenerationStats:
    best = scored[0][1]
    return GenerationStats(
        generation=gen,
        best_total=best.total,
        mean_total=float(np.mean([r.total for _, r in scored])),
        best_error1=best.error1,
        best_error2=best.error2,
        best_time=best.time_cost,
    )
