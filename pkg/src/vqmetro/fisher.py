"""Fisher information, the weighted Cramér-Rao cost, and its gradient.

The classical Fisher information matrix of the outcome distribution lower
bounds the covariance of any unbiased estimator; a positive semidefinite
weighting matrix turns the matrix inequality into the scalar cost
``Tr{W (B^T I B + eps)^-1}`` that the optimizer descends.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalConsistencyError
from .qalg import HermitianOp

SYM_TOL = 1e-10
PSD_TOL = 1e-9
OUTCOME_DROP_TOL = 1e-12
DEFAULT_REGULARIZATION = 1e-10
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric positive semidefinite d x d information matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError("Fisher matrix must be square")
        if np.abs(data - data.T).max() > SYM_TOL:
            raise ValueError("Fisher matrix is not symmetric")
        if data.shape[0] and np.linalg.eigvalsh(data)[0] < -PSD_TOL:
            raise ValueError("Fisher matrix has a significantly negative eigenvalue")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class Reparam:
    """Jacobian B = d(phases)/d(targets) used as I_f = B^T I_phi B."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("reparametrization matrix must be square")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("reparametrization matrix has non-finite entries")
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True, eq=False)
class CostConfig:
    """Weighting matrix, regularization, and the reporting-only sample count."""

    weights: np.ndarray
    regularization: float = DEFAULT_REGULARIZATION
    sample_count: int = 1

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if np.abs(weights - weights.T).max() > SYM_TOL:
            raise ValueError("weighting matrix must be symmetric")
        if weights.shape[0] and np.linalg.eigvalsh(weights)[0] < -PSD_TOL:
            raise ValueError("weighting matrix must be positive semidefinite")
        if self.regularization <= 0:
            raise ValueError("regularization must be positive")
        if self.sample_count < 1:
            raise ValueError("sample count must be a positive integer")
        object.__setattr__(self, "weights", weights)


def cfim(p: np.ndarray, dp: np.ndarray) -> FisherMatrix:
    """Classical Fisher information matrix from probabilities and derivatives.

    ``dp`` has one row per parameter.  Outcomes with probability below
    1e-12 are dropped from the sum; their derivative contribution is treated
    as zero.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    if dp.ndim != 2 or dp.shape[1] != p.shape[0]:
        raise ValueError("derivative matrix must be (n_params, n_outcomes)")
    if p.min() < -OUTCOME_DROP_TOL:
        raise ValueError(f"negative probability {p.min()} beyond tolerance")
    keep = p >= OUTCOME_DROP_TOL
    scaled = dp[:, keep] / p[keep]
    return FisherMatrix(scaled @ dp[:, keep].T)


def reparametrize(fim: FisherMatrix, transform: Reparam) -> FisherMatrix:
    """Fisher matrix for the target quantities: I_f = B^T I_phi B."""
    b = transform.matrix
    if b.shape[0] != fim.dim:
        raise ValueError(f"transform shape {b.shape} does not match dimension {fim.dim}")
    return FisherMatrix(b.T @ fim.data @ b)


def weighted_crb_cost(fim: FisherMatrix, config: CostConfig) -> float:
    """Tr{W (I + eps)^-1}: the regularized scalar Cramér-Rao bound."""
    if config.weights.shape[0] != fim.dim:
        raise ValueError("weighting matrix does not match the Fisher matrix dimension")
    a = fim.data + config.regularization * np.eye(fim.dim)
    if not np.all(np.isfinite(a)):
        raise InternalConsistencyError("non-finite Fisher matrix passed to the cost")
    try:
        inv_w = np.linalg.solve(a, config.weights)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - regularized matrix
        raise InternalConsistencyError(f"cost inversion failed: {exc}") from exc
    return float(np.trace(inv_w))


def scaled_bound(cost: float, config: CostConfig) -> float:
    """The reported bound for n repeated samples: cost / n."""
    return cost / config.sample_count


def crb_cost(model, theta, phi, mu, transform: Reparam, config: CostConfig) -> float:
    """Full-pipeline weighted Cramér-Rao cost at one parameter point."""
    from .gradients import phase_cfim

    fim = phase_cfim(model, theta, phi, mu)
    return weighted_crb_cost(reparametrize(fim, transform), config)


def cost_gradient(model, theta, phi, mu, transform: Reparam, config: CostConfig) -> tuple:
    """Analytic gradient of the weighted Cramér-Rao cost over (theta, mu).

    Assembles d(I_phi)/dv from shift-rule first and nested second derivatives
    of the outcome probabilities and applies the matrix chain rule for the
    regularized inverse.  Returns (grad_theta, grad_mu).
    """
    from .gradients import Evaluator, second_shift_grad, shift_grad_probs

    ev = Evaluator(model, theta, phi, mu)
    p = ev.probs()
    dp_phi = shift_grad_probs(model, theta, phi, mu, "phi", evaluator=ev)
    keep = p >= OUTCOME_DROP_TOL
    b = transform.matrix
    inv_p = 1.0 / p[keep]
    dpk = dp_phi[:, keep]
    fim = FisherMatrix((dpk * inv_p) @ dpk.T)
    a = b.T @ fim.data @ b + config.regularization * np.eye(fim.dim)
    inv_a = np.linalg.solve(a, np.eye(fim.dim))
    core = b @ (inv_a @ config.weights @ inv_a) @ b.T

    grads = []
    for slot in ("theta", "mu"):
        n_slot = model.compiled.n_params[slot]
        grad = np.zeros(n_slot)
        if n_slot == 0:
            grads.append(grad)
            continue
        dp_v = shift_grad_probs(model, theta, phi, mu, slot, evaluator=ev)
        d2p = second_shift_grad(model, theta, phi, mu, slot, evaluator=ev)
        for v in range(n_slot):
            mixed = (d2p[v][:, keep] * inv_p) @ dpk.T
            dfim = mixed + mixed.T - (dpk * (dp_v[v, keep] * inv_p**2)) @ dpk.T
            grad[v] = -np.sum(core * dfim)
        grads.append(grad)
    return grads[0], grads[1]


def crb_objective(model, phi, transform: Reparam, config: CostConfig):
    """Cost and gradient callables over the concatenated (theta, mu) vector."""
    n_theta = model.compiled.n_params["theta"]
    n_mu = model.compiled.n_params["mu"]

    def cost_fn(x):
        return crb_cost(model, x[:n_theta], phi, x[n_theta:], transform, config)

    def grad_fn(x):
        g_theta, g_mu = cost_gradient(model, x[:n_theta], phi, x[n_theta:], transform, config)
        return np.concatenate([g_theta, g_mu])

    return cost_fn, grad_fn, n_theta + n_mu


def qfim_pure(psi: np.ndarray, generators) -> FisherMatrix:
    """Quantum Fisher information of a pure state: 4 x covariance of generators."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("state vector must be normalized")
    mats = [g.data if isinstance(g, HermitianOp) else np.asarray(g) for g in generators]
    applied = [m @ psi for m in mats]
    means = np.array([np.vdot(psi, v).real for v in applied])
    d = len(mats)
    fim = np.empty((d, d))
    for j in range(d):
        for k in range(j, d):
            fim[j, k] = fim[k, j] = 4.0 * (np.vdot(applied[j], applied[k]).real
                                           - means[j] * means[k])
    return FisherMatrix(fim)


def van_trees_expected_cfim(model, theta, mu, prior_sampler, n_samples: int,
                            seed: int) -> FisherMatrix:
    """Monte-Carlo expectation of the phase CFIM over a prior on the phases.

    ``prior_sampler(rng)`` draws one phase vector; the prior's own Fisher
    term is not included.  Deterministic for a fixed seed.
    """
    from .gradients import phase_cfim

    if n_samples < 1:
        raise ValueError("need at least one prior sample")
    rng = np.random.default_rng(seed)
    total = np.zeros((model.d, model.d))
    for _ in range(n_samples):
        phi = np.asarray(prior_sampler(rng), dtype=float)
        total += phase_cfim(model, theta, phi, mu).data
    return FisherMatrix(total / n_samples)
