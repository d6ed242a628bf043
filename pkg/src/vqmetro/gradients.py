"""Analytic derivatives of outcome probabilities.

Every parametrized rotation admits the exact two-point shift rule
``d<.>/da = r [<.>(a + pi/4r) - <.>(a - pi/4r)]`` even when followed by
parameter-independent noise; convex channel mixtures admit an exact
two-evaluation rule in their mixing probability.  A staged evaluator caches
the preparation / encoding / measurement intermediates across the shifted
evaluations of one derivative assembly.
"""

import numpy as np

from .channels import ConvexChannel
from .circuits import (
    PROB_CLAMP_TOL,
    PROB_SUM_TOL,
    MetrologyModel,
    _check_params,
    _ChanOp,
    _encode_dense,
    _encode_unitary,
    _prep_dense,
    _RotOp,
)
from .errors import InternalConsistencyError, UnsupportedGateError
from .fisher import FisherMatrix, OUTCOME_DROP_TOL
from .qalg import DensityMatrix, HermitianOp

DEFAULT_FD_STEP = 1e-5


class Evaluator:
    """Probability evaluation at shifted parameter points, with stage caching.

    Shifts are mappings ``(slot, occurrence) -> offset`` where ``occurrence``
    indexes the slot's parametrized gates in pipeline order.  Evaluation
    points submitted together run through the pipeline as stacked arrays;
    preparation, encoding, and measurement intermediates are cached across
    calls.  The optional ``counter`` set collects one key per distinct
    evaluation point.
    """

    def __init__(self, model: MetrologyModel, theta, phi, mu, counter: set | None = None):
        self.model = model
        self.cm = model.compiled
        self.theta = _check_params(model, "theta", theta)
        self.phi = _check_params(model, "phi", phi)
        self.mu = _check_params(model, "mu", mu)
        self.counter = counter
        self._rho0 = {}
        self._enc_u = {}
        self._enc = {}
        self._meas = {}
        self._probs = {}

    def probs(self, shifts=None) -> np.ndarray:
        return self.batch_probs([shifts])[0]

    def batch_probs(self, shift_dicts) -> np.ndarray:
        """Probabilities for several shifted points, shape (len(points), dim)."""
        keys = [self._split(s) for s in shift_dicts]
        if self.counter is not None:
            self.counter.update(keys)
        missing = [k for k in dict.fromkeys(keys) if k not in self._probs]
        if missing:
            self._compute_missing(missing)
        return np.stack([self._probs[k] for k in keys])

    def _split(self, shifts) -> tuple:
        by_slot = {"theta": [], "phi": [], "mu": []}
        if shifts:
            for (slot, occ), offset in shifts.items():
                by_slot[slot].append((occ, float(offset)))
        return tuple(tuple(sorted(by_slot[s])) for s in ("theta", "phi", "mu"))

    def _stage_shifts(self, slot: str, key) -> dict:
        occs = self.cm.occurrences[slot]
        out = {}
        for occ, offset in key:
            stage, pos, _ = occs[occ]
            out[(stage, pos)] = out.get((stage, pos), 0.0) + offset
        return out

    def _shift_columns(self, slot: str, keys) -> dict:
        """Per-gate-position offset vectors over a batch of slot keys."""
        occs = self.cm.occurrences[slot]
        columns = {}
        for b, key in enumerate(keys):
            for occ, offset in key:
                stage, pos, _ = occs[occ]
                column = columns.get((stage, pos))
                if column is None:
                    column = columns[(stage, pos)] = np.zeros(len(keys))
                column[b] += offset
        return columns

    def _compute_missing(self, triples) -> None:
        tkeys = [k for k in dict.fromkeys(t for t, _, _ in triples) if k not in self._rho0]
        if tkeys:
            self._prep_batch(tkeys)
        pairs = [k for k in dict.fromkeys((t, p) for t, p, _ in triples) if k not in self._enc]
        if pairs:
            self._encode_batch(pairs)
        by_mkey = {}
        for triple in triples:
            by_mkey.setdefault(triple[2], []).append(triple)
        for mkey, group in by_mkey.items():
            merged = self._meas.get(mkey)
            if merged is None:
                merged = _merge_meas_ops(self.cm, self.mu, self._stage_shifts("mu", mkey))
                self._meas[mkey] = merged
            rhos = np.stack([self._enc[(t, p)] for t, p, _ in group])
            probs = _batch_measure(merged, rhos)
            _check_probs_batch(probs)
            for triple, row in zip(group, probs):
                self._probs[triple] = row

    def _prep_batch(self, tkeys) -> None:
        cm = self.cm
        batch = len(tkeys)
        columns = self._shift_columns("theta", tkeys)
        params = {"theta": self.theta}
        psi = np.zeros((batch, cm.dim), dtype=complex)
        psi[:, 0] = 1.0
        start = len(cm.prep_ops)
        for pos, op in enumerate(cm.prep_ops):
            if isinstance(op, _ChanOp):
                start = pos
                break
            psi = _batch_apply_vector(op, params, columns, pos, psi)
        rhos = psi[:, :, None] * psi[:, None, :].conj()
        if start < len(cm.prep_ops):
            rhos = _batch_run_ops(rhos, cm.prep_ops, params, columns, "theta",
                                  self._param_values, start)
        for tkey, rho in zip(tkeys, rhos):
            self._rho0[tkey] = rho

    def _param_values(self, op, column) -> np.ndarray:
        base = self.theta if op.slot == "theta" else (
            self.phi if op.slot == "phi" else self.mu
        )
        values = np.full(column.shape, base[op.index]) + column
        return values

    def _encode_batch(self, pairs) -> None:
        cm = self.cm
        for pkey in dict.fromkeys(p for _, p in pairs):
            if pkey not in self._enc_u:
                self._enc_u[pkey] = _encode_unitary(
                    cm, self.phi, self._stage_shifts("phi", pkey)
                )
        rhos = np.stack([self._rho0[t] for t, _ in pairs])
        mats = np.stack([self._enc_u[p] for _, p in pairs])
        rhos = mats @ rhos @ mats.conj().transpose(0, 2, 1)
        if cm.noise_op is not None:
            rhos = cm.noise_op.apply_batch(rhos)
        for pair, rho in zip(pairs, rhos):
            self._enc[pair] = rho


def _batch_apply_vector(op, params, columns, pos, psi) -> np.ndarray:
    """One pure-segment gate applied to a stack of state vectors (batch, dim)."""
    if isinstance(op, _RotOp):
        angles = np.full(psi.shape[0], op.base)
        if op.slot is not None:
            angles += op.coeff * params[op.slot][op.index]
        column = columns.get(("prep", pos))
        if column is not None:
            angles = angles + column
        cos = np.cos(angles / 2)[:, None]
        sin = np.sin(angles / 2)[:, None]
        return cos * psi - 1j * sin * (psi @ op.p_full.T)
    return psi @ op.u_full.T


def _batch_run_ops(rhos, ops, params, columns, slot, param_values, start=0) -> np.ndarray:
    """Density-path stage over a batch; consecutive unitaries merge per batch."""
    stage = {"theta": "prep", "phi": "enc", "mu": "meas"}[slot]
    batch = rhos.shape[0]
    pending = None
    for pos in range(start, len(ops)):
        op = ops[pos]
        if isinstance(op, _ChanOp):
            if pending is not None:
                rhos = pending @ rhos @ pending.conj().transpose(0, 2, 1)
                pending = None
            if op.mode == "param":
                column = columns.get((stage, pos))
                offsets = column if column is not None else np.zeros(batch)
                rhos = op.apply_batch(rhos, param_values(op, offsets))
            else:
                rhos = op.apply_batch(rhos)
        else:
            if isinstance(op, _RotOp):
                angles = np.full(batch, op.base)
                if op.slot is not None:
                    angles += op.coeff * params[op.slot][op.index]
                column = columns.get((stage, pos))
                if column is not None:
                    angles = angles + column
                mats = op.matrices(angles)
            else:
                mats = np.broadcast_to(op.u_full, (batch, *op.u_full.shape))
            pending = mats if pending is None else mats @ pending
    if pending is not None:
        rhos = pending @ rhos @ pending.conj().transpose(0, 2, 1)
    return rhos


def _batch_measure(merged, rhos) -> np.ndarray:
    if len(merged) == 1 and merged[0][0] == "mat":
        mat = merged[0][1]
        return ((mat @ rhos) * mat.conj()).sum(axis=2).real
    for kind, payload in merged:
        if kind == "mat":
            rhos = payload @ rhos @ payload.conj().T
        elif kind == "chan_batch":
            rhos = payload.apply_batch(rhos)
        else:
            rhos = np.stack([payload(rho) for rho in rhos])
    return rhos.diagonal(axis1=1, axis2=2).real.copy()


def _check_probs_batch(probs: np.ndarray) -> None:
    if probs.min() < -PROB_CLAMP_TOL:
        raise InternalConsistencyError(f"negative outcome probability {probs.min()}")
    sums = probs.sum(axis=1)
    if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
        raise InternalConsistencyError("outcome probabilities do not sum to one")
    np.clip(probs, 0.0, None, out=probs)


def _merge_meas_ops(cm, mu, shifts) -> list:
    """Measurement stage with consecutive unitaries collapsed to single matrices."""
    from .circuits import _angle_of

    merged = []
    pending = None
    params = {"mu": mu}
    for pos, op in enumerate(cm.meas_ops):
        if isinstance(op, _ChanOp):
            if pending is not None:
                merged.append(("mat", pending))
                pending = None
            if op.mode == "param":
                p = params["mu"][op.index] + shifts.get(("meas", pos), 0.0)
                merged.append(("chan", op.channel.with_p(p).apply_dense))
            else:
                merged.append(("chan_batch", op))
        else:
            mat = op.matrix(_angle_of(op, params, shifts, "meas", pos)) \
                if isinstance(op, _RotOp) else op.u_full
            pending = mat if pending is None else mat @ pending
    if pending is not None:
        merged.append(("mat", pending))
    return merged


def _slot_occurrences(model: MetrologyModel, slot: str):
    occs = model.compiled.occurrences[slot]
    for occ_pos, (stage, pos, op) in enumerate(occs):
        if not isinstance(op, _RotOp):
            raise UnsupportedGateError(
                f"gate {op.label} in slot {slot!r} has no two-point shift rule"
            )
        yield occ_pos, op


def shift_grad_probs(model: MetrologyModel, theta, phi, mu, slot: str,
                     evaluator: Evaluator | None = None) -> np.ndarray:
    """Exact derivatives of all outcome probabilities for one parameter slot.

    Returns an array of shape (n_params_in_slot, n_outcomes); rows sum to
    zero.  A parameter appearing in several gates accumulates one two-point
    term per occurrence, scaled by the occurrence coefficient.
    """
    ev = evaluator or Evaluator(model, theta, phi, mu)
    cm = model.compiled
    occurrences = list(_slot_occurrences(model, slot))
    points = []
    for occ_pos, op in occurrences:
        shift = np.pi / (4.0 * op.shift_const)
        points.append({(slot, occ_pos): +shift})
        points.append({(slot, occ_pos): -shift})
    values = ev.batch_probs(points) if points else np.empty((0, cm.dim))
    out = np.zeros((cm.n_params[slot], cm.dim))
    for k, (occ_pos, op) in enumerate(occurrences):
        out[op.index] += op.coeff * op.shift_const * (values[2 * k] - values[2 * k + 1])
    return out


def second_shift_grad(model: MetrologyModel, theta, phi, mu, slot: str,
                      evaluator: Evaluator | None = None) -> np.ndarray:
    """Nested shift rule: d^2 p_l / (d slot_v d phi_j).

    Returns shape (n_slot_params, d, n_outcomes); four evaluations per
    occurrence pair, exact for the rotation gate family.
    """
    ev = evaluator or Evaluator(model, theta, phi, mu)
    cm = model.compiled
    slot_occs = list(_slot_occurrences(model, slot))
    phi_occs = list(_slot_occurrences(model, "phi"))
    signs = ((+1.0, +1.0), (+1.0, -1.0), (-1.0, +1.0), (-1.0, -1.0))
    points = []
    for v_pos, v_op in slot_occs:
        sv = np.pi / (4.0 * v_op.shift_const)
        for j_pos, j_op in phi_occs:
            sj = np.pi / (4.0 * j_op.shift_const)
            for sign_v, sign_j in signs:
                points.append({(slot, v_pos): sign_v * sv, ("phi", j_pos): sign_j * sj})
    values = ev.batch_probs(points) if points else np.empty((0, cm.dim))
    out = np.zeros((cm.n_params[slot], cm.d, cm.dim))
    k = 0
    for v_pos, v_op in slot_occs:
        for j_pos, j_op in phi_occs:
            acc = values[k] - values[k + 1] - values[k + 2] + values[k + 3]
            k += 4
            scale = v_op.coeff * v_op.shift_const * j_op.coeff * j_op.shift_const
            out[v_op.index, j_op.index] += scale * acc
    return out


def convex_channel_grad(channel: ConvexChannel, rho: DensityMatrix,
                        q1: float, q2: float) -> np.ndarray:
    """Derivative of a convex channel's output in its mixing probability.

    Exactly [N(q1)[rho] - N(q2)[rho]] / (q1 - q2) for any distinct
    q1, q2 in [0, 1]; the result does not depend on the channel's own p.
    """
    if not (0.0 <= q1 <= 1.0 and 0.0 <= q2 <= 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    if q1 == q2:
        raise ValueError("evaluation points must be distinct")
    out_1 = channel.with_p(q1).apply_dense(rho.data)
    out_2 = channel.with_p(q2).apply_dense(rho.data)
    return (out_1 - out_2) / (q1 - q2)


def derivative_operators(model: MetrologyModel, mu) -> list:
    """Operators -i [Pi'_l, H_j], indexed [outcome][phase]; each is Hermitian."""
    noisy_elements = _noisy_povm_dense(model, mu)
    gens = model.generators_dense()
    out = []
    for element in noisy_elements:
        row = []
        for gen in gens:
            delta = -1j * (element @ gen - gen @ element)
            row.append(HermitianOp(delta))
        out.append(row)
    return out


def _noisy_povm_dense(model: MetrologyModel, mu) -> list:
    from .circuits import noisy_povm

    return [op.data for op in noisy_povm(model, mu)]


def cfim_via_expectations(model: MetrologyModel, theta, phi, mu) -> FisherMatrix:
    """Phase CFIM from expectation values on the noise-free encoded state.

    Uses <Pi'_l> for the probabilities and <-i [Pi'_l, H_j]> for their
    derivatives, with the noise folded into the POVM operators.
    """
    theta = _check_params(model, "theta", theta)
    phi = _check_params(model, "phi", phi)
    cm = model.compiled
    rho = _encode_dense(cm, _prep_dense(cm, theta), phi, noisy=False)
    noisy_elements = _noisy_povm_dense(model, mu)
    gens = model.generators_dense()
    fim = np.zeros((cm.d, cm.d))
    for element in noisy_elements:
        p = np.einsum("ij,ji->", element, rho).real
        if p < OUTCOME_DROP_TOL:
            continue
        dp = np.empty(cm.d)
        for j, gen in enumerate(gens):
            delta = -1j * (element @ gen - gen @ element)
            dp[j] = np.einsum("ij,ji->", delta, rho).real
        fim += np.outer(dp, dp) / p
    return FisherMatrix(fim)


def phase_cfim(model: MetrologyModel, theta, phi, mu,
               evaluator: Evaluator | None = None) -> FisherMatrix:
    """Phase CFIM assembled from shift-rule probability derivatives."""
    from .fisher import cfim

    ev = evaluator or Evaluator(model, theta, phi, mu)
    p = ev.probs()
    dp = shift_grad_probs(model, theta, phi, mu, "phi", evaluator=ev)
    return cfim(p, dp)


def finite_diff_grad(evaluate, x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar- or array-valued function."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)
    rows = []
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = h
        rows.append((np.asarray(evaluate(x + shift)) - np.asarray(evaluate(x - shift))) / (2 * h))
    return np.asarray(rows)


def evaluation_count_audit(model: MetrologyModel, theta=None, phi=None, mu=None) -> int:
    """Distinct circuit evaluations used by probabilities + the phase CFIM.

    Counts the evaluation points actually requested while assembling the
    base probabilities and all d phase derivatives: 2d + 1 for single-
    occurrence encodings.
    """
    cm = model.compiled
    theta = np.zeros(cm.n_params["theta"]) if theta is None else theta
    phi = np.zeros(cm.n_params["phi"]) if phi is None else phi
    mu = np.zeros(cm.n_params["mu"]) if mu is None else mu
    counter: set = set()
    ev = Evaluator(model, theta, phi, mu, counter=counter)
    ev.probs()
    shift_grad_probs(model, theta, phi, mu, "phi", evaluator=ev)
    return len(counter)
