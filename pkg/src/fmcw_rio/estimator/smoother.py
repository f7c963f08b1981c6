"""Robust Levenberg-Marquardt fixed-lag smoother.

The core only knows about keyed manifold variables and factors. A factor
provides::

    keys            tuple of variable keys
    loss            RobustLoss applied per residual block
    block           residual block size the loss acts on
    update_model(values)        refresh state-dependent noise (optional)
    linearize(values) -> (r, [J_k for k in keys])   whitened
    error(values) -> r                               whitened

State-dependent noise models are refreshed at the start of every outer
iteration and then held fixed while candidate steps are compared, so the
accepted-step cost sequence is monotone under the model in force.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional

import numpy as np
import scipy.linalg

from .losses import NONE, RobustLoss

log = logging.getLogger(__name__)


def robust_weights(r, block, loss: RobustLoss):
    """(sqrt weights per row or None when all are one, total robust cost)."""
    if r.size == 0:
        return None, 0.0
    if loss.kind == "none":
        return None, 0.5 * float(r @ r)
    if block == 1:
        s = r * r
        return np.sqrt(loss.weight(s)), float(np.sum(loss.cost(s)))
    s = np.sum(r.reshape(-1, block) ** 2, axis=1)
    w = np.repeat(np.sqrt(loss.weight(s)), block)
    return w, float(np.sum(loss.cost(s)))


class Factor:
    keys: tuple = ()
    loss: RobustLoss = NONE
    block: int = 1

    def update_model(self, values) -> None:
        pass

    def error(self, values) -> np.ndarray:
        return self.linearize(values)[0]

    def linearize(self, values):
        raise NotImplementedError

    def cost(self, values) -> float:
        r = self.error(values)
        return robust_weights(r, self.block, self.loss)[1]


class LinearFactor(Factor):
    """sqrt_info (sum_k A_k x_k - b) on Euclidean variables."""

    def __init__(self, keys, A, b, sqrt_info=None, loss: RobustLoss = NONE):
        self.keys = tuple(keys)
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        m = self.b.size
        self.L = np.eye(m) if sqrt_info is None else np.atleast_2d(np.asarray(sqrt_info, dtype=float))
        self.loss = loss
        self.block = m

    def linearize(self, values):
        e = sum(a @ values[k].x for k, a in zip(self.keys, self.A)) - self.b
        return self.L @ e, [self.L @ a for a in self.A]


class PriorFactor(Factor):
    """Gaussian prior r = r0 + Jp * (xbar ominus x) stacked over its keys."""

    def __init__(self, keys, anchors, Jp, r0):
        self.keys = tuple(keys)
        self.anchors = list(anchors)
        self.Jp = np.asarray(Jp, dtype=float)
        self.r0 = np.asarray(r0, dtype=float)
        self.dims = [a.dim for a in self.anchors]
        self.block = max(self.r0.size, 1)

    @classmethod
    def from_information(cls, keys, anchors, H, g=None, rel_tol=1e-12):
        H = 0.5 * (H + H.T)
        g = np.zeros(H.shape[0]) if g is None else g
        lam, V = np.linalg.eigh(H)
        keep = lam > rel_tol * max(lam.max(), 0.0) if lam.size else np.zeros(0, bool)
        lam, V = lam[keep], V[:, keep]
        Jp = np.sqrt(lam)[:, None] * V.T
        r0 = (V.T @ g) / np.sqrt(lam)
        return cls(keys, anchors, Jp, r0)

    @classmethod
    def from_covariance(cls, key, anchor, cov):
        return cls.from_information([key], [anchor], np.linalg.inv(cov))

    def linearize(self, values):
        deltas, jacs = [], []
        off = 0
        for k, a, d in zip(self.keys, self.anchors, self.dims):
            x = values[k]
            deltas.append(a.local(x))
            jacs.append(self.Jp[:, off:off + d] @ a.local_jacobian(x))
            off += d
        r = self.r0 + self.Jp @ np.concatenate(deltas)
        return r, jacs

    def information(self):
        return self.Jp.T @ self.Jp


@dataclass
class IterationRecord:
    cost_before: float
    cost_after: float
    accepted: bool
    damping: float
    step_norm: float


@dataclass
class OptimizeResult:
    iterations: List[IterationRecord] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def initial_cost(self):
        return self.iterations[0].cost_before if self.iterations else 0.0

    @property
    def final_cost(self):
        if not self.iterations:
            return 0.0
        last = self.iterations[-1]
        return last.cost_after if last.accepted else last.cost_before


class Smoother:
    def __init__(self, max_iterations: int = 5, rel_tol: float = 1e-6, step_tol: float = 1e-9):
        self.values: Dict[Hashable, object] = {}
        self.fixed: set = set()
        self.factors: List[Factor] = []
        self.max_iterations = max_iterations
        self.rel_tol = rel_tol
        self.step_tol = step_tol
        self.diagnostics: List[str] = []

    # ------------------------------------------------------------------ graph
    def add_variable(self, key, value, fixed: bool = False):
        if key in self.values:
            raise KeyError(f"variable {key!r} already present")
        self.values[key] = value
        if fixed:
            self.fixed.add(key)

    def add_factor(self, factor: Factor):
        missing = [k for k in factor.keys if k not in self.values]
        if missing:
            raise KeyError(f"factor references unknown variables {missing}")
        self.factors.append(factor)

    def ordering(self, keys=None):
        keys = [k for k in (self.values if keys is None else keys) if k not in self.fixed]
        out, off = {}, 0
        for k in keys:
            d = self.values[k].dim
            out[k] = (off, d)
            off += d
        return out, off

    def labels(self, order):
        names = []
        for k, (off, d) in order.items():
            names.extend(f"{k}.{lab}" for lab in self.values[k].labels)
        return names

    # ------------------------------------------------------------- evaluation
    def cost(self, values=None, factors=None) -> float:
        values = self.values if values is None else values
        return sum(f.cost(values) for f in (self.factors if factors is None else factors))

    def linear_system(self, values=None, factors=None, order=None):
        values = self.values if values is None else values
        factors = self.factors if factors is None else factors
        if order is None:
            order, n = self.ordering()
        else:
            n = sum(d for _, d in order.values())
        H = np.zeros((n, n))
        g = np.zeros(n)
        total = 0.0
        for f in factors:
            r, Js = f.linearize(values)
            if r.size == 0:
                continue
            w, c = robust_weights(r, f.block, f.loss)
            total += c
            if w is not None:
                r = w * r
                Js = [w[:, None] * J for J in Js]
            blocks = [(order[k], J) for k, J in zip(f.keys, Js) if k in order]
            for i, ((oa, da), Ja) in enumerate(blocks):
                g[oa:oa + da] += Ja.T @ r
                H[oa:oa + da, oa:oa + da] += Ja.T @ Ja
                for (ob, db), Jb in blocks[i + 1:]:
                    B = Ja.T @ Jb
                    H[oa:oa + da, ob:ob + db] += B
                    H[ob:ob + db, oa:oa + da] += B.T
        return H, g, total

    def _retract(self, order, delta):
        new = dict(self.values)
        for k, (off, d) in order.items():
            new[k] = self.values[k].retract(delta[off:off + d])
        return new

    # ------------------------------------------------------------ solve steps
    def optimize(self, max_iterations: Optional[int] = None) -> OptimizeResult:
        result = OptimizeResult()
        iters = self.max_iterations if max_iterations is None else max_iterations
        order, n = self.ordering()
        if n == 0:
            return result
        lam = 0.0
        for _ in range(iters):
            for f in self.factors:
                f.update_model(self.values)
            H, g, c0 = self.linear_system(order=order)
            checked = bool(result.iterations)
            floor = 1e-6 * max(np.mean(np.abs(np.diag(H))), 1e-12)
            accepted = False
            while True:
                try:
                    cf = scipy.linalg.cho_factor(H + lam * np.eye(n), lower=True, check_finite=False)
                    delta = -scipy.linalg.cho_solve(cf, g, check_finite=False)
                except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                    if not checked:
                        result.diagnostics.extend(self._rank_check(H, order))
                        checked = True
                    lam = max(10 * lam, floor)
                    continue
                if not checked and lam == 0.0:
                    # a tiny Cholesky pivot flags a (numerically) rank-deficient system
                    piv = np.diag(cf[0]) ** 2
                    if piv.min() <= 1e-10 * piv.max():
                        result.diagnostics.extend(self._rank_check(H, order))
                    checked = True
                if not np.all(np.isfinite(delta)):
                    lam = max(10 * lam, floor)
                    continue
                cand = self._retract(order, delta)
                c1 = self.cost(cand)
                if c1 <= c0:
                    self.values = cand
                    accepted = True
                    step = float(np.linalg.norm(delta))
                    result.iterations.append(IterationRecord(c0, c1, True, lam, step))
                    lam = 0.0 if lam <= floor else lam / 10
                    break
                # predicted decrease too small to matter: already converged
                if -0.5 * float(g @ delta) <= self.rel_tol * c0:
                    break
                lam = max(10 * lam, floor)
                if lam > 1e12 * floor:
                    result.iterations.append(IterationRecord(c0, c1, False, lam, 0.0))
                    break
            if not accepted:
                break
            if c0 - c1 <= self.rel_tol * c0 or step < self.step_tol:
                break
        return result

    def _rank_check(self, H, order, rel_tol=1e-10):
        lam, V = np.linalg.eigh(H)
        names = self.labels(order)
        weak = np.flatnonzero(lam <= rel_tol * max(lam.max(), 1e-300))
        out = []
        for i in weak:
            j = int(np.argmax(np.abs(V[:, i])))
            out.append(f"unconstrained direction dominated by {names[j]} (eigenvalue {lam[i]:.3g})")
        for msg in out:
            log.warning(msg)
        self.diagnostics.extend(out)
        return out

    def covariance(self, keys=None):
        """Marginal covariance of ``keys`` at the current estimate."""
        order, n = self.ordering()
        H, _, _ = self.linear_system(order=order)
        P = np.linalg.inv(H)
        keys = list(order) if keys is None else [k for k in keys if k in order]
        idx = np.concatenate([np.arange(order[k][0], order[k][0] + order[k][1]) for k in keys])
        return P[np.ix_(idx, idx)]

    # ---------------------------------------------------------- marginalizing
    def marginalize(self, keys) -> Optional[PriorFactor]:
        """Eliminate ``keys`` by Schur complement into a new prior on their neighbours."""
        keys = list(keys)
        gone = set(keys)
        touching = [f for f in self.factors if gone & set(f.keys)]
        self.factors = [f for f in self.factors if not (gone & set(f.keys))]
        neighbours = []
        for f in touching:
            for k in f.keys:
                if k not in gone and k not in self.fixed and k not in neighbours:
                    neighbours.append(k)
        prior = None
        if touching and neighbours:
            for f in touching:
                f.update_model(self.values)
            order, n = self.ordering([k for k in keys if k not in self.fixed] + neighbours)
            H, g, _ = self.linear_system(factors=touching, order=order)
            m = sum(order[k][1] for k in keys if k in order)
            Hmm, Hmo, Hoo = H[:m, :m], H[:m, m:], H[m:, m:]
            lam, V = np.linalg.eigh(Hmm)
            tiny = 1e-12 * max(lam.max(), 1e-300)
            if lam.min() <= tiny:
                msg = f"marginalized block is singular (min eigenvalue {lam.min():.3g}); regularized"
                log.warning(msg)
                self.diagnostics.append(msg)
                lam = np.maximum(lam, tiny)
            Hinv = (V / lam) @ V.T
            Hs = Hoo - Hmo.T @ Hinv @ Hmo
            gs = g[m:] - Hmo.T @ Hinv @ g[:m]
            anchors = [self.values[k] for k in neighbours]
            prior = PriorFactor.from_information(neighbours, anchors, Hs, gs)
            self.factors.append(prior)
        for k in keys:
            del self.values[k]
            self.fixed.discard(k)
        return prior
