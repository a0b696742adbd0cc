"""One-dimensional ideal points for users, elites and content.

Endorsements are modelled as Bernoulli draws with log-odds

    Pi = -(pos_user - pos_target)**2 + bias_user + bias_target

and all positions are estimated jointly from the user x elite matrix ``R``
and the user x content matrix ``S`` by block-alternating gradient ascent on
the L2-regularized log-likelihood.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

log = logging.getLogger(__name__)

FULL_SUM_LIMIT = 10_000_000
BLOCKS = ("theta", "phi", "psi", "alpha", "beta_e", "gamma")
LEFT, CENTER, RIGHT = "Left", "Center", "Right"


class DegenerateDataError(ValueError):
    pass


@dataclass
class EndorsementData:
    """Confidence-weighted endorsement matrices sharing one user axis."""

    R: sp.csr_matrix
    S: sp.csr_matrix
    user_ids: tuple = ()
    elite_ids: tuple = ()
    content_ids: tuple = ()

    def __post_init__(self):
        self.R = sp.csr_matrix(self.R, dtype=np.float64)
        self.S = sp.csr_matrix(self.S, dtype=np.float64)
        if self.R.shape[0] != self.S.shape[0]:
            raise ValueError("R and S must have the same number of users")
        if (self.R.data < 0).any() or (self.S.data < 0).any():
            raise ValueError("confidence weights must be non-negative")
        if not self.user_ids:
            self.user_ids = tuple(range(self.num_users))
        if not self.elite_ids:
            self.elite_ids = tuple(range(self.R.shape[1]))
        if not self.content_ids:
            self.content_ids = tuple(range(self.S.shape[1]))

    @property
    def num_users(self) -> int:
        return self.R.shape[0]

    @property
    def num_elites(self) -> int:
        return self.R.shape[1]

    @property
    def num_contents(self) -> int:
        return self.S.shape[1]

    def elite_only(self) -> "EndorsementData":
        return EndorsementData(self.R, sp.csr_matrix((self.num_users, 0)), self.user_ids, self.elite_ids, ())

    @classmethod
    def from_records(cls, elite_records: Iterable[tuple[Hashable, Hashable, float]],
                     content_records: Iterable[tuple[Hashable, Hashable, float]] = (),
                     weighting: str = "binary") -> "EndorsementData":
        """Build from ``(user, target, count)`` triples.

        ``weighting`` is ``"binary"`` (weight 1 per observed pair) or ``"log"``
        (``log(1 + count)``). Repeated pairs have their counts summed.
        """
        if weighting not in ("binary", "log"):
            raise ValueError(f"unknown weighting {weighting!r}")
        elite_records, content_records = list(elite_records), list(content_records)
        users = list(dict.fromkeys([r[0] for r in elite_records] + [r[0] for r in content_records]))
        uidx = {u: i for i, u in enumerate(users)}

        def matrix(records):
            targets = list(dict.fromkeys(r[1] for r in records))
            tidx = {t: i for i, t in enumerate(targets)}
            counts: dict = {}
            for u, t, c in records:
                key = (uidx[u], tidx[t])
                counts[key] = counts.get(key, 0.0) + float(c)
            rows = [k[0] for k in counts]
            cols = [k[1] for k in counts]
            vals = [1.0 if weighting == "binary" else float(np.log1p(c)) for c in counts.values()]
            m = sp.csr_matrix((vals, (rows, cols)), shape=(len(users), len(targets)))
            return m, tuple(targets)

        R, elites = matrix(elite_records)
        S, contents = matrix(content_records)
        return cls(R, S, tuple(users), elites, contents)


@dataclass
class FitConfig:
    lam: float = 0.1
    mu: float = 1.0
    learning_rate: float = 0.05
    max_epochs: int = 500
    tolerance: float = 1e-6
    seed: int = 0
    prior_sigma: float = 1.0
    negatives: int = 5


@dataclass
class IdealPointModel:
    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    alpha: np.ndarray
    beta_e: np.ndarray
    gamma: np.ndarray
    lam: float = 0.1
    mu: float = 1.0
    prior_sigma: float = 1.0
    history: list = field(default_factory=list)
    epochs: int = 0
    converged: bool = False

    @classmethod
    def zeros(cls, m: int, n_e: int, n_i: int, lam: float = 0.1, mu: float = 1.0) -> "IdealPointModel":
        z = np.zeros
        return cls(z(m), z(n_e), z(n_i), z(m), z(n_e), z(n_i), lam, mu)

    def copy(self) -> "IdealPointModel":
        return dataclasses.replace(
            self, **{b: getattr(self, b).copy() for b in BLOCKS}, history=list(self.history)
        )

    def params(self) -> dict[str, np.ndarray]:
        return {b: getattr(self, b) for b in BLOCKS}


def linear_predictor(pos_a, pos_b, bias_a, bias_b):
    """``-(pos_a - pos_b)^2 + bias_a + bias_b``; works elementwise on arrays."""
    return -np.square(np.subtract(pos_a, pos_b)) + bias_a + bias_b


def endorse_probability(pi):
    """Logistic link ``exp(pi) / (1 + exp(pi))``, stable for large ``|pi|``."""
    return expit(pi)


@dataclass
class _Pairs:
    """Observation pairs of one matrix: target value ``a`` and term multiplicity ``c``."""

    u: np.ndarray
    j: np.ndarray
    a: np.ndarray
    c: np.ndarray


def _full_pairs(M: sp.csr_matrix) -> _Pairs:
    m, n = M.shape
    dense = M.toarray().ravel()
    u = np.repeat(np.arange(m), n)
    j = np.tile(np.arange(n), m)
    return _Pairs(u, j, dense, np.ones(m * n))


def _sampled_pairs(M: sp.csr_matrix, negatives: int, rng: np.random.Generator) -> _Pairs:
    """Observed pairs plus uniformly drawn unobserved ones, reweighted to stand for all of them."""
    coo = M.tocoo()
    m, n = M.shape
    deg = np.diff(M.indptr)
    nu = np.repeat(np.arange(m), deg * negatives)
    nj = rng.integers(0, n, size=len(nu))
    keys = np.sort(coo.row.astype(np.int64) * n + coo.col)
    hit = np.isin(nu.astype(np.int64) * n + nj, keys, assume_unique=False)
    nu, nj = nu[~hit], nj[~hit]
    drawn = np.bincount(nu, minlength=m).astype(np.float64)
    absent = (n - deg).astype(np.float64)
    scale = np.divide(absent, drawn, out=np.zeros(m), where=drawn > 0)
    return _Pairs(
        np.concatenate([coo.row, nu]),
        np.concatenate([coo.col, nj]),
        np.concatenate([coo.data, np.zeros(len(nu))]),
        np.concatenate([np.ones(len(coo.data)), scale[nu]]),
    )


class _Objective:
    """Log-likelihood and gradients over a fixed set of pairs."""

    def __init__(self, rp: _Pairs, sp_: _Pairs, lam: float, mu: float):
        self.rp, self.sp, self.lam, self.mu = rp, sp_, lam, mu

    @staticmethod
    def _pi(p: _Pairs, pos_u, pos_t, bias_u, bias_t):
        return linear_predictor(pos_u[p.u], pos_t[p.j], bias_u[p.u], bias_t[p.j])

    def value(self, model: IdealPointModel) -> float:
        total = 0.0
        for p, pos_t, bias_t, w in ((self.rp, model.phi, model.beta_e, self.mu),
                                    (self.sp, model.psi, model.gamma, 1.0)):
            if len(p.u):
                pi = self._pi(p, model.theta, pos_t, model.alpha, bias_t)
                total += w * float(np.sum(p.c * (p.a * pi - np.logaddexp(0.0, pi))))
        reg = np.dot(model.theta, model.theta) + np.dot(model.phi, model.phi) + np.dot(model.psi, model.psi)
        return total - 0.5 * self.lam * float(reg)

    def gradients(self, model: IdealPointModel) -> dict[str, np.ndarray]:
        m = len(model.theta)
        g = {b: np.zeros_like(getattr(model, b)) for b in BLOCKS}
        for p, pos_t, bias_t, w, pos_name, bias_name in (
            (self.rp, model.phi, model.beta_e, self.mu, "phi", "beta_e"),
            (self.sp, model.psi, model.gamma, 1.0, "psi", "gamma"),
        ):
            if not len(p.u):
                continue
            n = len(pos_t)
            pi = self._pi(p, model.theta, pos_t, model.alpha, bias_t)
            resid = w * p.c * (p.a - expit(pi))
            diff = model.theta[p.u] - pos_t[p.j]
            g["theta"] += np.bincount(p.u, resid * (-2.0 * diff), minlength=m)
            g[pos_name] += np.bincount(p.j, resid * (2.0 * diff), minlength=n)
            g["alpha"] += np.bincount(p.u, resid, minlength=m)
            g[bias_name] += np.bincount(p.j, resid, minlength=n)
        g["theta"] -= self.lam * model.theta
        g["phi"] -= self.lam * model.phi
        g["psi"] -= self.lam * model.psi
        return g


def _use_full_sum(data: EndorsementData) -> bool:
    return data.num_users * (data.num_elites + data.num_contents) <= FULL_SUM_LIMIT


def _objective(data: EndorsementData, lam: float, mu: float, negatives: int = 5,
               rng: np.random.Generator | None = None) -> _Objective:
    if _use_full_sum(data):
        return _Objective(_full_pairs(data.R), _full_pairs(data.S), lam, mu)
    rng = rng if rng is not None else np.random.default_rng(0)
    return _Objective(_sampled_pairs(data.R, negatives, rng), _sampled_pairs(data.S, negatives, rng), lam, mu)


def _check_dims(model: IdealPointModel, data: EndorsementData):
    if (len(model.theta), len(model.phi), len(model.psi)) != (data.num_users, data.num_elites, data.num_contents):
        raise ValueError("model and data dimensions do not match")


def log_likelihood(model: IdealPointModel, data: EndorsementData) -> float:
    """Joint regularized log-likelihood, summed over every user x target pair.

    Above ``FULL_SUM_LIMIT`` pairs the unobserved ones are estimated by
    negative sampling with a fixed seed.
    """
    _check_dims(model, data)
    return _objective(data, model.lam, model.mu).value(model)


def gradients(model: IdealPointModel, data: EndorsementData) -> dict[str, np.ndarray]:
    """Analytic partial derivatives of :func:`log_likelihood` for every parameter block."""
    _check_dims(model, data)
    return _objective(data, model.lam, model.mu).gradients(model)


def _grad_norm(g: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.dot(v, v)) for v in g.values())))


def _check_nondegenerate(data: EndorsementData):
    user_obs = np.diff(data.R.indptr) + np.diff(data.S.indptr)
    if data.num_users == 0 or (user_obs == 0).any():
        raise DegenerateDataError(f"{int((user_obs == 0).sum())} users have no observations")
    for name, M in (("elites", data.R), ("contents", data.S)):
        cnt = np.bincount(M.indices, minlength=M.shape[1])
        if (cnt == 0).any():
            raise DegenerateDataError(f"{int((cnt == 0).sum())} {name} have no observations")


def fit(data: EndorsementData, config: FitConfig | None = None) -> IdealPointModel:
    """Block-alternating gradient ascent: theta, phi, psi, alpha, beta_e, gamma per epoch.

    A block step that would lower the objective is halved until it does not;
    each block keeps its own step size, capped at ``learning_rate``.
    """
    cfg = config or FitConfig()
    _check_nondegenerate(data)
    rng = np.random.default_rng(cfg.seed)
    m, n_e, n_i = data.num_users, data.num_elites, data.num_contents
    model = IdealPointModel(
        theta=rng.normal(0.0, cfg.prior_sigma, m),
        phi=rng.normal(0.0, cfg.prior_sigma, n_e),
        psi=rng.normal(0.0, cfg.prior_sigma, n_i),
        alpha=np.zeros(m), beta_e=np.zeros(n_e), gamma=np.zeros(n_i),
        lam=cfg.lam, mu=cfg.mu, prior_sigma=cfg.prior_sigma,
    )
    full = _use_full_sum(data)
    obj = _objective(data, cfg.lam, cfg.mu, cfg.negatives, rng)
    steps = {b: cfg.learning_rate for b in BLOCKS}
    current = obj.value(model)
    model.history.append(current)

    for epoch in range(1, cfg.max_epochs + 1):
        if not full:
            obj = _objective(data, cfg.lam, cfg.mu, cfg.negatives, rng)
            current = obj.value(model)
        for b in BLOCKS:
            param = getattr(model, b)
            if param.size == 0:
                continue
            grad = obj.gradients(model)[b]
            base = param.copy()
            for _ in range(60):
                setattr(model, b, base + steps[b] * grad)
                trial = obj.value(model)
                if not np.isfinite(trial):
                    raise FloatingPointError(f"non-finite objective at epoch {epoch} (block {b})")
                if trial >= current:
                    current = trial
                    steps[b] = min(steps[b] * 1.2, cfg.learning_rate)
                    break
                steps[b] *= 0.5
            else:
                setattr(model, b, base)
        model.history.append(current)
        model.epochs = epoch
        gnorm = _grad_norm(obj.gradients(model))
        if not np.isfinite(gnorm):
            raise FloatingPointError(f"non-finite gradient at epoch {epoch}")
        if gnorm < cfg.tolerance:
            model.converged = True
            break
    log.debug("fit stopped after %d epochs (converged=%s)", model.epochs, model.converged)
    return model


def elite_only_fit(data: EndorsementData, config: FitConfig | None = None) -> IdealPointModel:
    """Fit users and elites from ``R`` alone (content term dropped, unit weight on R)."""
    cfg = dataclasses.replace(config or FitConfig(), mu=1.0)
    return fit(data.elite_only(), cfg)


_KINDS = {"user": "theta", "elite": "phi", "content": "psi"}


def align_sign(model: IdealPointModel, anchor: tuple[str, int], desired_sign: int) -> IdealPointModel:
    """Negate all positions if the anchor entity's position has the wrong sign."""
    kind, idx = anchor
    if kind not in _KINDS:
        raise KeyError(f"unknown entity kind {kind!r}")
    positions = getattr(model, _KINDS[kind])
    if not 0 <= idx < len(positions):
        raise KeyError(f"anchor {kind} {idx} does not exist")
    if desired_sign not in (1, -1):
        raise ValueError("desired_sign must be +1 or -1")
    out = model.copy()
    if np.sign(positions[idx]) == -desired_sign:
        out.theta, out.phi, out.psi = -out.theta, -out.phi, -out.psi
    return out


def classify(position: float) -> str:
    if position < -0.5:
        return LEFT
    if position > 0.5:
        return RIGHT
    return CENTER


def write_model_tsv(path, model: IdealPointModel, data: EndorsementData) -> None:
    """Rows of ``entity_kind, external_id, position, bias``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for kind, ids, pos, bias in (
            ("user", data.user_ids, model.theta, model.alpha),
            ("elite", data.elite_ids, model.phi, model.beta_e),
            ("content", data.content_ids, model.psi, model.gamma),
        ):
            for eid, p, b in zip(ids, pos.tolist(), bias.tolist()):
                fh.write(f"{kind}\t{eid}\t{p:.17g}\t{b:.17g}\n")


def read_positions_tsv(path) -> dict[str, dict[str, float]]:
    """``{kind: {external_id: position}}`` from a model TSV."""
    out: dict[str, dict[str, float]] = {k: {} for k in _KINDS}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[0] not in out:
                raise ValueError(f"{path}:{lineno}: malformed position row")
            out[parts[0]][parts[1]] = float(parts[2])
    return out
