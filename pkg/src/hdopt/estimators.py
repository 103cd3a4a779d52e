"""Gradient-estimator oracles used by agents.

Four kinds are provided:

* ``first_order``          - minibatch stochastic gradient.
* ``zo_biased_one_sided``  - (F(x + nu u) - F(x)) / nu * u, Gaussian u.
* ``zo_biased_central``    - (F(x + nu u) - F(x - nu u)) / (2 nu) * u.
* ``zo_unbiased_forward``  - (u . grad F) u via a directional-derivative pass.

The biased kinds estimate the gradient of the Gaussian-smoothed batch loss;
the forward kind is unbiased for the batch gradient itself.  Estimates that
average ``rv`` Gaussian directions share a single minibatch per call and
divide by ``rv`` (plain mean).  ``function_evals`` counts zeroth-order
function evaluations, with one first-order gradient costed at batch_size
evaluations (a simulator convention for cost-normalized plots).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIRST_ORDER = "first_order"
ZO_ONE_SIDED = "zo_biased_one_sided"
ZO_CENTRAL = "zo_biased_central"
ZO_FORWARD = "zo_unbiased_forward"

ESTIMATOR_KINDS = (FIRST_ORDER, ZO_ONE_SIDED, ZO_CENTRAL, ZO_FORWARD)
BIASED_KINDS = (ZO_ONE_SIDED, ZO_CENTRAL)


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str
    batch_size: int = 1
    rv: int = 1
    nu: float | None = None  # smoothing radius; usually coupled to eta at call time

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.rv < 1:
            raise ValueError("rv must be >= 1")
        if self.nu is not None and self.nu <= 0:
            raise ValueError("nu must be positive when given")


@dataclass
class GradientEstimate:
    vector: np.ndarray
    kind: str
    function_evals: int


def couple_nu(eta: float, c: float) -> float:
    """Smoothing radius coupled to the learning rate: nu = eta / c."""
    if eta <= 0 or c <= 0:
        raise ValueError("eta and c must be positive")
    return eta / c


def draw_batch(shard, batch_size, rng):
    """Uniform minibatch of ids from an ndarray shard.

    A batch covering the whole shard is returned as-is (exact local
    gradient); smaller batches are i.i.d. uniform draws.
    """
    if not isinstance(shard, np.ndarray):
        shard = np.asarray(shard)
    m = shard.shape[0]
    if m == 0:
        raise ValueError("shard must be non-empty")
    if batch_size > m:
        raise ValueError("batch_size exceeds shard size")
    if batch_size == m:
        return shard
    return shard[rng.integers(0, m, size=batch_size)]


def estimate_first_order(spec, shard, x, batch_size, rng) -> GradientEstimate:
    """Minibatch stochastic gradient over a uniformly drawn batch."""
    batch = draw_batch(shard, batch_size, rng)
    return GradientEstimate(vector=spec.grad(x, batch), kind=FIRST_ORDER,
                            function_evals=int(batch.shape[0]))


def _resolve_nu(cfg, nu):
    nu = cfg.nu if nu is None else nu
    if nu is None or nu <= 0:
        raise ValueError("biased zeroth-order estimators need nu > 0")
    return float(nu)


def estimate_zo_one_sided(spec, shard, x, cfg: EstimatorConfig, rng, nu=None) -> GradientEstimate:
    """One-sided smoothed estimate averaged over cfg.rv Gaussian directions."""
    nu = _resolve_nu(cfg, nu)
    batch = draw_batch(shard, cfg.batch_size, rng)
    U = rng.standard_normal((cfg.rv, spec.d))
    # one objective call evaluates the base point and all shifted points
    points = np.empty((cfg.rv + 1, spec.d))
    points[0] = x
    np.multiply(U, nu, out=points[1:])
    points[1:] += x
    vals = spec.loss_many(points, batch)
    vec = ((vals[1:] - vals[0]) / nu) @ U / cfg.rv
    return GradientEstimate(vector=vec, kind=ZO_ONE_SIDED,
                            function_evals=int(batch.shape[0]) * (cfg.rv + 1))


def estimate_zo_central(spec, shard, x, cfg: EstimatorConfig, rng, nu=None) -> GradientEstimate:
    """Central-difference smoothed estimate averaged over cfg.rv directions."""
    nu = _resolve_nu(cfg, nu)
    batch = draw_batch(shard, cfg.batch_size, rng)
    U = rng.standard_normal((cfg.rv, spec.d))
    points = np.empty((2 * cfg.rv, spec.d))
    np.multiply(U, nu, out=points[:cfg.rv])
    np.multiply(U, -nu, out=points[cfg.rv:])
    points += x
    vals = spec.loss_many(points, batch)
    vec = ((vals[:cfg.rv] - vals[cfg.rv:]) / (2.0 * nu)) @ U / cfg.rv
    return GradientEstimate(vector=vec, kind=ZO_CENTRAL,
                            function_evals=int(batch.shape[0]) * 2 * cfg.rv)


def estimate_zo_unbiased_forward(spec, shard, x, cfg: EstimatorConfig, rng, nu=None) -> GradientEstimate:
    """(u . grad F) u averaged over cfg.rv directions; unbiased for grad F.

    The directional derivative is obtained analytically per objective, which
    is how a forward-mode pass is simulated here.
    """
    batch = draw_batch(shard, cfg.batch_size, rng)
    U = rng.standard_normal((cfg.rv, spec.d))
    dd = spec.dir_deriv(x, U, batch)
    vec = dd @ U / cfg.rv
    return GradientEstimate(vector=vec, kind=ZO_FORWARD,
                            function_evals=int(batch.shape[0]) * cfg.rv)


_DISPATCH = {
    ZO_ONE_SIDED: estimate_zo_one_sided,
    ZO_CENTRAL: estimate_zo_central,
    ZO_FORWARD: estimate_zo_unbiased_forward,
}


def estimate_gradient(spec, shard, x, cfg: EstimatorConfig, rng, nu=None) -> GradientEstimate:
    """Dispatch on cfg.kind; ``nu`` overrides cfg.nu for the biased kinds."""
    if cfg.kind == FIRST_ORDER:
        return estimate_first_order(spec, shard, x, cfg.batch_size, rng)
    return _DISPATCH[cfg.kind](spec, shard, x, cfg, rng, nu)
