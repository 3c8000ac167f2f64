"""Large-margin classification between hyperdisks.

Each class is modelled as a hyperdisk; the separating hyperplane bisects the
segment joining the closest points ``x+ = Phi+ a+`` and ``x- = Phi- a-``::

    f(z) = a+^T k+(z) - a-^T k-(z) + b,   b = -(a+^T K+ a+ - a-^T K- a-) / 2

With ``B = 0`` the balls are plain SVDD balls and the model reduces to
LMC-HD, which is also available through its own classical-SVDD code path
(``method=LMCHD``).
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import hyperdisk as hd
from . import qsvdd
from .data import Standardizer
from .kernels import KernelSpec, gram, gram_cross

log = logging.getLogger(__name__)

FORMAT_NAME = "qlmchd-model"
FORMAT_VERSION = 1
MAX_C_RETRIES = 3
QLMCHD = "qlmchd"
LMCHD = "lmchd"


class TrainingError(RuntimeError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class HyperParams:
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec.rbf(1.0))
    B: float = qsvdd.DEFAULT_B
    C: float = qsvdd.DEFAULT_C
    tau: float = hd.DEFAULT_TAU
    qp_tol: float = 1e-6
    cp_tol: float = 1e-12
    cp_max_iter: int = 100_000

    def __post_init__(self):
        if not self.B > -1:
            raise ValueError(f"B must be > -1, got {self.B}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")

    def replace(self, **changes) -> "HyperParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kernel"] = self.kernel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        d = dict(d)
        d["kernel"] = KernelSpec.from_dict(d["kernel"])
        return cls(**d)


@dataclass(frozen=True)
class BinaryModel:
    kernel: KernelSpec
    support_plus: np.ndarray = field(repr=False)
    support_minus: np.ndarray = field(repr=False)
    alpha_plus: np.ndarray = field(repr=False)
    alpha_minus: np.ndarray = field(repr=False)
    b: float
    margin: float

    def decision_from_kernels(self, k_plus, k_minus) -> np.ndarray:
        """Decision values from precomputed ``k(z, x+)`` / ``k(z, x-)`` blocks (rows = queries)."""
        return k_plus @ self.alpha_plus - k_minus @ self.alpha_minus + self.b

    def decision_function(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.support_plus.shape[1]:
            raise ValueError(f"expected {self.support_plus.shape[1]} features, got {Z.shape[1]}")
        return self.decision_from_kernels(
            gram_cross(self.kernel, Z, self.support_plus), gram_cross(self.kernel, Z, self.support_minus)
        )

    def predict(self, Z) -> np.ndarray:
        """+1 / -1 labels; an exact zero goes to +1."""
        return np.where(self.decision_function(Z) >= 0, 1, -1)

    def closest_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Explicit closest points (meaningful for the linear kernel only)."""
        return self.support_plus.T @ self.alpha_plus, self.support_minus.T @ self.alpha_minus


def _effective_C(C, n):
    # the ball QP is infeasible below 1/n
    return max(C, 1.0 / n)


def _build_disk(K, params: HyperParams, C, method=QLMCHD, cache=None, name=None):
    """One class's hyperdisk; ``cache`` (keyed by ``name``) shares balls and eigenpairs."""
    C = _effective_C(C, K.shape[0])
    cache = {} if cache is None else cache
    B = 0.0 if method == LMCHD else params.B
    ball_key = ("ball", name, method, B, C, params.qp_tol)
    if ball_key not in cache:
        if method == LMCHD:
            cache[ball_key] = qsvdd.fit_svdd(K, C, tol=params.qp_tol)
        else:
            cache[ball_key] = qsvdd.fit_qsvdd(K, B, C, tol=params.qp_tol)
    eig_key = ("eig", name)
    if K.shape[0] > 1 and eig_key not in cache:
        cache[eig_key] = hd.centered_eigh(K)
    return hd.build_hyperdisk(
        K, B, C, params.tau, params.qp_tol, ball=cache[ball_key], eig=cache.get(eig_key)
    )


def _pair_from_disks(disk_p, disk_m, K_pm, params):
    try:
        return hd.closest_pair(disk_p, disk_m, K_pm, tol=params.cp_tol, max_iter=params.cp_max_iter)
    except hd.ClosestPairConvergenceError as exc:
        log.warning("%s; using the last iterate", exc)
        pair = exc.pair
        if pair.dist_sq < hd.overlap_tol(disk_p, disk_m):
            raise hd.OverlapError("hyperdisks overlap", pair) from exc
        return pair


def _model_from_pair(kernel, X_p, X_m, K_p, K_m, pair) -> BinaryModel:
    ap, am = pair.alpha_plus, pair.alpha_minus
    b = -(ap @ K_p @ ap - am @ K_m @ am) / 2.0
    return BinaryModel(kernel, X_p, X_m, ap, am, float(b), float(np.sqrt(pair.dist_sq)))


def fit_binary(X_plus, X_minus, params: HyperParams, method=QLMCHD) -> BinaryModel:
    """Train one separator; raises ``OverlapError`` if the hyperdisks meet."""
    X_p = np.atleast_2d(np.asarray(X_plus, dtype=float))
    X_m = np.atleast_2d(np.asarray(X_minus, dtype=float))
    if X_p.shape[0] == 0 or X_m.shape[0] == 0:
        raise ValueError("both classes need at least one sample")
    K_p = gram(params.kernel, X_p)
    K_m = gram(params.kernel, X_m)
    K_pm = gram_cross(params.kernel, X_p, X_m)
    disk_p = _build_disk(K_p, params, params.C, method)
    disk_m = _build_disk(K_m, params, params.C, method)
    pair = _pair_from_disks(disk_p, disk_m, K_pm, params)
    return _model_from_pair(params.kernel, X_p, X_m, K_p, K_m, pair)


def fit_lmchd(X_plus, X_minus, params: HyperParams) -> BinaryModel:
    """LMC-HD: the same separator on classical SVDD balls."""
    return fit_binary(X_plus, X_minus, params.replace(B=0.0), method=LMCHD)


# -- multiclass ---------------------------------------------------------------

OAO = "oao"
OAR = "oar"


@dataclass
class Member:
    key: tuple
    plus_idx: np.ndarray = field(repr=False)
    minus_idx: np.ndarray = field(repr=False)
    model: BinaryModel = field(repr=False)
    C: float = 1.0


@dataclass
class MulticlassModel:
    strategy: str
    classes: tuple
    params: HyperParams
    X: np.ndarray = field(repr=False)
    method: str = QLMCHD
    standardizer: Standardizer | None = field(default=None, repr=False)
    members: list = field(default_factory=list, repr=False)
    overlap_events: list = field(default_factory=list)

    def decision_matrix(self, Z) -> np.ndarray:
        """Decision value of every member (columns) for every query (rows)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] == 0:
            return np.zeros((0, len(self.members)))
        if Z.shape[1] != self.X.shape[1]:
            raise ValueError(f"expected {self.X.shape[1]} features, got {Z.shape[1]}")
        if self.standardizer is not None:
            Z = self.standardizer.transform(Z)
        return self.decision_from_gram(gram_cross(self.params.kernel, Z, self.X))

    def decision_from_gram(self, Kz) -> np.ndarray:
        """Decision values from a precomputed query-by-training kernel block."""
        out = np.empty((Kz.shape[0], len(self.members)))
        for c, m in enumerate(self.members):
            out[:, c] = m.model.decision_from_kernels(Kz[:, m.plus_idx], Kz[:, m.minus_idx])
        return out

    def predict_indices(self, Z=None, Kz=None) -> np.ndarray:
        D = self.decision_matrix(Z) if Kz is None else self.decision_from_gram(Kz)
        n_cls = len(self.classes)
        if self.strategy == OAR:
            return np.argmax(D, axis=1) if D.shape[0] else np.zeros(0, dtype=int)
        votes = np.zeros((D.shape[0], n_cls))
        score = np.zeros((D.shape[0], n_cls))
        for c, m in enumerate(self.members):
            i, j = m.key
            win = D[:, c] >= 0
            votes[:, i] += win
            votes[:, j] += ~win
            score[:, i] += D[:, c]
            score[:, j] -= D[:, c]
        tied = votes == votes.max(axis=1, keepdims=True)
        return np.argmax(np.where(tied, score, -np.inf), axis=1)

    def predict(self, Z=None, Kz=None) -> np.ndarray:
        """Class labels for queries ``Z`` (or for a precomputed kernel block ``Kz``)."""
        idx = self.predict_indices(Z, Kz)
        return np.asarray(self.classes, dtype=object)[idx] if len(idx) else np.asarray([], dtype=object)


def fit_multiclass(
    X, y, strategy=OAO, params: HyperParams = HyperParams(), method=QLMCHD, K=None, cache=None
) -> MulticlassModel:
    """OAO trains every class pair, OAR every class against the pooled rest.

    A member whose hyperdisks overlap is retried with ``C`` halved, at most
    ``MAX_C_RETRIES`` times, before ``TrainingError`` is raised.  ``K`` may
    carry a precomputed Gram matrix of ``X``; a ``cache`` dict reused across
    calls with the same ``X`` and kernel shares ball fits and eigenpairs.
    """
    strategy = strategy.lower()
    if strategy not in (OAO, OAR):
        raise ValueError(f"unknown strategy {strategy!r}")
    if method not in (QLMCHD, LMCHD):
        raise ValueError(f"unknown method {method!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    classes = tuple(sorted(set(y.tolist()), key=str))
    if len(classes) < 2:
        raise ValueError("need at least two classes")

    K = gram(params.kernel, X) if K is None else np.asarray(K, dtype=float)
    index = {c: np.flatnonzero(y == c) for c in classes}
    disks = {}
    cache = {} if cache is None else cache

    def disk_for(name, idx, C):
        key = (name, C)
        if key not in disks:
            disks[key] = _build_disk(K[np.ix_(idx, idx)], params, C, method, cache, name)
        return disks[key]

    if strategy == OAO:
        tasks = [
            ((i, j), (i,), (j,))
            for i in range(len(classes))
            for j in range(i + 1, len(classes))
        ]
    else:
        tasks = [((i,), (i,), tuple(j for j in range(len(classes)) if j != i)) for i in range(len(classes))]

    model = MulticlassModel(strategy, classes, params, X, method)
    for key, plus, minus in tasks:
        idx_p = np.concatenate([index[classes[c]] for c in plus])
        idx_m = np.concatenate([index[classes[c]] for c in minus])
        C = params.C
        for attempt in range(MAX_C_RETRIES + 1):
            disk_p = disk_for(plus, idx_p, C)
            disk_m = disk_for(minus, idx_m, C)
            try:
                pair = _pair_from_disks(disk_p, disk_m, K[np.ix_(idx_p, idx_m)], params)
                break
            except hd.OverlapError as exc:
                model.overlap_events.append((key, C))
                log.info("member %s overlaps at C=%g: %s", key, C, exc)
                if attempt == MAX_C_RETRIES:
                    raise TrainingError(
                        f"member {key} still overlaps after {MAX_C_RETRIES} halvings of C "
                        f"(last C={C:g}); try a smaller C or another kernel width",
                        key,
                    ) from exc
                C = C / 2.0
        binary = _model_from_pair(
            params.kernel, X[idx_p], X[idx_m], disk_p.gram, disk_m.gram, pair
        )
        model.members.append(Member(key, idx_p, idx_m, binary, C))
    return model


# -- serialization --------------------------------------------------------------


def model_to_dict(model: MulticlassModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "strategy": model.strategy,
        "method": model.method,
        "classes": list(model.classes),
        "params": model.params.to_dict(),
        "X": model.X.tolist(),
        "members": [
            {
                "key": list(m.key),
                "C": m.C,
                "plus_idx": m.plus_idx.tolist(),
                "minus_idx": m.minus_idx.tolist(),
                "alpha_plus": m.model.alpha_plus.tolist(),
                "alpha_minus": m.model.alpha_minus.tolist(),
                "b": m.model.b,
                "margin": m.model.margin,
            }
            for m in model.members
        ],
        "overlap_events": [[list(k), c] for k, c in model.overlap_events],
        "standardizer": model.standardizer.to_dict() if model.standardizer is not None else None,
    }


def model_from_dict(d: dict) -> MulticlassModel:
    if d.get("format") != FORMAT_NAME:
        raise ValueError("not a qlmchd model file")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')}")
    params = HyperParams.from_dict(d["params"])
    X = np.asarray(d["X"], dtype=float).reshape(len(d["X"]), -1)
    model = MulticlassModel(d["strategy"], tuple(d["classes"]), params, X, d.get("method", QLMCHD))
    for m in d["members"]:
        ip = np.asarray(m["plus_idx"], dtype=int)
        im = np.asarray(m["minus_idx"], dtype=int)
        binary = BinaryModel(
            params.kernel, X[ip], X[im],
            np.asarray(m["alpha_plus"], dtype=float), np.asarray(m["alpha_minus"], dtype=float),
            float(m["b"]), float(m["margin"]),
        )
        model.members.append(Member(tuple(m["key"]), ip, im, binary, float(m["C"])))
    model.overlap_events = [(tuple(k), c) for k, c in d.get("overlap_events", [])]
    if d.get("standardizer") is not None:
        model.standardizer = Standardizer.from_dict(d["standardizer"])
    return model


def save_model(model: MulticlassModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> MulticlassModel:
    return model_from_dict(json.loads(Path(path).read_text()))
