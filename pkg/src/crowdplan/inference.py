"""Posterior computation for the four aggregation models.

All posteriors are computed in log space. Votes inside a path are accumulated
in a canonical order (label counts in label order, or votes sorted by worker id
and label), so shuffling the stored vote order changes nothing, bit for bit.

The four model kinds:

* mv    -- majority vote over all votes, paths ignored.
* nbi   -- naive Bayes with one table per worker, conditioned on the outcome.
* nbap  -- naive Bayes with one effective table per path: the path marginal
           p(x | y) = sum_z p(z | y) p(x | z), applied independently per vote.
* apm   -- the full model; votes in a path are dependent through the latent
           path state, which is summed out exactly.

When evidence has zero probability under every outcome the posterior falls
back to the prior and sets `degenerate_evidence`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .model import ApmModel, Cpt, NbiModel, TaskSample


class ModelKind(str, enum.Enum):
    MV = "mv"
    NBI = "nbi"
    NBAP = "nbap"
    APM = "apm"


@dataclass(frozen=True)
class Posterior:
    """A distribution over outcomes plus its argmax summary.

    `prediction` is the smallest index attaining the maximum probability.
    """

    probs: np.ndarray
    prediction: int
    confidence: float
    degenerate_evidence: bool = False

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)


def _finish(probs: np.ndarray, degenerate: bool = False) -> Posterior:
    pred = int(np.argmax(probs))
    return Posterior(
        probs=probs,
        prediction=pred,
        confidence=float(probs[pred]),
        degenerate_evidence=degenerate,
    )


def _from_log_joint(log_joint: np.ndarray, prior: np.ndarray) -> Posterior:
    norm = logsumexp(log_joint)
    if not np.isfinite(norm):
        return _finish(prior.copy(), degenerate=True)
    return _finish(np.exp(log_joint - norm))


def _log(rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(rows)


def _label_counts(votes, k: int) -> np.ndarray:
    counts = np.zeros(k, dtype=np.float64)
    for _, v in votes:
        counts[v] += 1.0
    return counts


def _sorted_votes(votes):
    return sorted(votes, key=lambda wv: (str(wv[0]), wv[1]))


def _path_log_evidence(model: ApmModel, path: int, votes) -> np.ndarray:
    """log prod_j p(x_j | z) for one path, as a vector over latent states z."""
    k = model.num_labels
    table = model.worker_cpts[path]
    if isinstance(table, Cpt):
        counts = _label_counts(votes, k)
        seen = counts > 0
        return _log(table.rows[:, seen]) @ counts[seen]
    acc = np.zeros(k, dtype=np.float64)
    for worker, v in _sorted_votes(votes):
        acc += _log(model.vote_cpt(path, worker).rows[:, v])
    return acc


def apm_log_joint(model: ApmModel, sample: TaskSample) -> np.ndarray:
    """log p(y, votes) for every outcome y, latent path states summed out."""
    log_joint = _log(model.prior).copy()
    for path in sorted(sample.votes):
        evidence = _path_log_evidence(model, path, sample.votes[path])
        log_joint += logsumexp(_log(model.path_cpts[path].rows) + evidence[None, :], axis=1)
    return log_joint


def apm_posterior(model: ApmModel, sample: TaskSample) -> Posterior:
    """Exact posterior under the full access path model."""
    return _from_log_joint(apm_log_joint(model, sample), model.prior)


def nbap_posterior(model: ApmModel, sample: TaskSample) -> Posterior:
    """Posterior treating every vote on a path as independent given the outcome.

    Uses the same parameters as `apm_posterior`; only the independence
    assumption differs. Requires shared worker tables on every path.
    """
    for i in range(model.num_paths):
        if not model.is_shared(i):
            raise InputError(f"nbap requires shared worker CPTs; path {i} is per-worker")
    log_joint = _log(model.prior).copy()
    for path in sorted(sample.votes):
        marginal = model.path_cpts[path].rows @ model.worker_cpts[path].rows
        counts = _label_counts(sample.votes[path], model.num_labels)
        log_joint += _log(marginal) @ counts
    return _from_log_joint(log_joint, model.prior)


def nbi_posterior(model: NbiModel, sample: TaskSample) -> Posterior:
    """Posterior under per-worker naive Bayes; every vote needs a known worker."""
    log_joint = _log(model.prior).copy()
    flat = [wv for path in sorted(sample.votes) for wv in sample.votes[path]]
    for worker, v in _sorted_votes(flat):
        log_joint += _log(model.vote_cpt(worker).rows[:, v])
    return _from_log_joint(log_joint, model.prior)


def mv_predict(model: ApmModel | NbiModel, sample: TaskSample) -> Posterior:
    """Majority vote. Posterior probabilities are vote shares; no votes means uniform."""
    k = model.num_labels
    flat = [wv for votes in sample.votes.values() for wv in votes]
    if not flat:
        return _finish(np.full(k, 1.0 / k))
    counts = _label_counts(flat, k)
    return _finish(counts / counts.sum())


def predict(kind: ModelKind | str, model: ApmModel | NbiModel, sample: TaskSample) -> Posterior:
    """Dispatch to the posterior routine for `kind`, checking the model type."""
    try:
        kind = ModelKind(kind)
    except ValueError:
        raise InputError(f"unknown model kind {kind!r}") from None
    if kind is ModelKind.MV:
        return mv_predict(model, sample)
    if kind is ModelKind.NBI:
        if not isinstance(model, NbiModel):
            raise InputError("nbi prediction needs an NbiModel")
        return nbi_posterior(model, sample)
    if not isinstance(model, ApmModel):
        raise InputError(f"{kind.value} prediction needs an ApmModel")
    if kind is ModelKind.NBAP:
        return nbap_posterior(model, sample)
    return apm_posterior(model, sample)
