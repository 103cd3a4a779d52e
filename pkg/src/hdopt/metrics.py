"""Analysis quantities and experiment metrics over population snapshots.

The variance potential reported as ``gamma`` is the mean squared distance of
agent models from the population mean; ``mt_g`` is the mean squared norm of
one fresh gradient estimate per agent.  All functions here are read-only
over the population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import estimate_gradient

CSV_COLUMNS = (
    "step", "parallel_time", "eta", "gamma", "mu_loss_gap", "grad_norm_sq_mu",
    "mean_val_loss", "mean_val_acc", "mt_g", "function_evals_total",
)


@dataclass
class MetricsRecord:
    step: int
    parallel_time: float
    eta: float
    gamma: float
    mu_loss_gap: float | None
    grad_norm_sq_mu: float
    mean_val_loss: float | None
    mean_val_acc: float | None
    mt_g: float | None
    function_evals_total: int

    def as_row(self):
        return [getattr(self, col) for col in CSV_COLUMNS]


def compute_mu(pop) -> np.ndarray:
    """Arithmetic mean of the agent models."""
    return pop.models().mean(axis=0)


def compute_gamma(pop) -> float:
    """Variance potential: (1/n) sum_i ||X_i - mu||^2."""
    models = pop.models()
    centered = models - models.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1)))


def compute_mtg(pop, eta, rng) -> float:
    """Mean squared estimate norm, one fresh estimate per agent.

    Uses a caller-supplied rng stream so diagnostics never perturb the
    optimization trajectory; the smoothing radius is coupled to ``eta``.
    """
    spec = pop.objective
    nu = eta / pop.c if eta > 0 else None
    total = 0.0
    for agent in pop.agents:
        est = estimate_gradient(spec, agent.shard, agent.model, agent.estimator, rng, nu)
        total += float(np.dot(est.vector, est.vector))
    return total / pop.n


@dataclass
class WeightedAverageState:
    """Running exponentially weighted average of pre-step means.

    Weights w_t = prod_s (1 - eta_s ell / 2n)^(-1) grow geometrically, so the
    state tracks the ratio q_t = S_t / w_t and the current convex combination
    instead of the raw weights (no overflow at large T).
    """

    dim: int
    q: float = 0.0
    steps: int = 0

    def __post_init__(self):
        self._y = np.zeros(self.dim)

    def value(self):
        if self.steps == 0:
            return None
        return self._y.copy()


def weighted_average_update(state: WeightedAverageState, mu_prev, eta, ell, n) -> WeightedAverageState:
    """Fold the next mean into the weighted average (convex-only quantity)."""
    if ell <= 0:
        raise ValueError("weighted averaging is defined only for ell > 0")
    shrink = 1.0 - eta * ell / (2.0 * n)
    if not 0.0 < shrink <= 1.0:
        raise ValueError("eta * ell / (2 n) must lie in [0, 1)")
    state.q = state.q * shrink + 1.0
    state._y += (np.asarray(mu_prev, dtype=float) - state._y) / state.q
    state.steps += 1
    return state


def evaluate_validation(pop, features, labels=None):
    """Per-agent validation loss/accuracy, averaged over agents.

    Accepts a Dataset or a (features, labels) pair.  Accuracy is NaN for
    objectives without classification semantics.
    """
    if labels is None:
        features, labels = features.features, features.labels
    features = np.asarray(features, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("validation set must be non-empty")
    losses, accs = [], []
    for agent in pop.agents:
        loss, acc = pop.objective.evaluate(agent.model, features, labels)
        losses.append(loss)
        accs.append(acc)
    return float(np.mean(losses)), float(np.mean(accs))


def snapshot(pop, step, eta, val_features=None, val_labels=None, mtg_rng=None) -> MetricsRecord:
    """One metrics record for the current population state."""
    spec = pop.objective
    mu = compute_mu(pop)
    gap = None if spec.f_star is None else float(spec.loss(mu) - spec.f_star)
    grad_mu = spec.grad(mu)
    val_loss = val_acc = None
    if val_features is not None:
        val_loss, val_acc = evaluate_validation(pop, val_features, val_labels)
        if math.isnan(val_acc):
            val_acc = None
    mt_g = None if mtg_rng is None else compute_mtg(pop, eta, mtg_rng)
    return MetricsRecord(
        step=int(step),
        parallel_time=pop.interactions / pop.n,
        eta=float(eta),
        gamma=compute_gamma(pop),
        mu_loss_gap=gap,
        grad_norm_sq_mu=float(np.dot(grad_mu, grad_mu)),
        mean_val_loss=val_loss,
        mean_val_acc=val_acc,
        mt_g=mt_g,
        function_evals_total=int(pop.function_evals),
    )


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(_fmt(v) for v in rec.as_row()) + "\n")


def read_metrics_csv(path):
    """(column names, float matrix with NaN for empty fields)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        rows.append([float(p) if p else float("nan") for p in line.split(",")])
    return header, np.asarray(rows, dtype=float)


def records_to_matrix(records):
    rows = []
    for rec in records:
        rows.append([float("nan") if v is None else float(v) for v in rec.as_row()])
    return np.asarray(rows, dtype=float)


def aggregate_seeds(series_list):
    """Pointwise mean and standard error across aligned metric series.

    ``series_list`` holds per-seed record lists (or ready matrices).  Returns
    (steps, mean matrix, stderr matrix) over the non-step columns; stderr is
    the sample standard deviation over seeds divided by sqrt(k), zero for a
    single series.
    """
    if not series_list:
        raise ValueError("need at least one series")
    mats = [s if isinstance(s, np.ndarray) else records_to_matrix(s) for s in series_list]
    steps = mats[0][:, 0]
    for m in mats[1:]:
        if m.shape != mats[0].shape or not np.array_equal(m[:, 0], steps):
            raise ValueError("series have misaligned steps")
    stack = np.stack([m[:, 1:] for m in mats])  # (k, T, cols)
    mean = stack.mean(axis=0)
    if stack.shape[0] == 1:
        stderr = np.zeros_like(mean)
    else:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])
    return steps.astype(int), mean, stderr


def write_aggregate_csv(path, steps, mean, stderr) -> None:
    cols = ["step"]
    for name in CSV_COLUMNS[1:]:
        cols += [f"{name}_mean", f"{name}_stderr"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(len(steps)):
            row = [str(int(steps[t]))]
            for c in range(mean.shape[1]):
                row.append(_fmt(float(mean[t, c])))
                row.append(_fmt(float(stderr[t, c])))
            fh.write(",".join(row) + "\n")
