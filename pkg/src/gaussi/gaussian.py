"""Immutable multivariate Gaussian state and its closed-form updates.

Every probabilistic statement of the language reduces to one of the methods
on :class:`GaussianState`: appending a variable (independent, linearly
dependent, shifted/scaled copy, sum of two variables), conditioning on an
observed value, marginalising, or a general affine map.

Storage
-------
A state of dimension ``n`` is a view of the top-left ``n x n`` block of a
row-major buffer that only holds the *lower triangle* of the covariance
(entry ``(i, j)`` with ``i >= j`` lives at ``buf[i, j]``).  Buffers are
append-only: extending a state writes row ``n`` and nothing else, so every
state that views a smaller block is untouched.  The first extension of a
given state claims the spare capacity in place; any further extension of the
same parent copies.  States therefore behave as values while a chain of
``n`` extensions costs ``O(n^2)`` instead of ``O(n^3)``.
"""

from __future__ import annotations

import math
import mmap
import threading
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalError, StateError, SupportError

#: relative tolerance for the PSD check and for clamping tiny negative variances
PSD_TOL = 1e-8
#: relative tolerance under which an observed variance counts as zero
ZERO_VARIANCE_TOL = 1e-12
#: relative tolerance for the symmetry check on user supplied covariances
SYMMETRY_TOL = 1e-9

_CONDITION_CHUNK = 512
_HUGE_ALLOC = 1 << 26

_OPS = {
    "+": "+", "-": "-", "*": "*", "/": "/",
    "−": "-", "×": "*", "÷": "/",
}


def _zeros_square(capacity: int) -> np.ndarray:
    """Zero ``capacity x capacity`` matrix whose pages are only backed once written.

    numpy asks for transparent huge pages on large allocations, which would
    back the untouched upper triangle as well; an anonymous mapping without
    huge pages keeps resident memory near the lower triangle.
    """
    nbytes = capacity * capacity * 8
    if nbytes < _HUGE_ALLOC or not hasattr(mmap, "MADV_NOHUGEPAGE"):
        return np.zeros((capacity, capacity))
    buf = mmap.mmap(-1, nbytes)
    buf.madvise(mmap.MADV_NOHUGEPAGE)
    return np.frombuffer(buf, dtype=np.float64).reshape(capacity, capacity)


class _Storage:
    __slots__ = ("cov", "mean", "names", "index", "used", "lock")

    def __init__(self, capacity: int):
        capacity = max(int(capacity), 1)
        self.cov = _zeros_square(capacity)
        self.mean = np.zeros(capacity)
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.used = 0
        self.lock = threading.Lock()

    @property
    def capacity(self) -> int:
        return self.mean.shape[0]


class GaussianState:
    """Ordered variable names with a joint Gaussian over them.

    Build one with :meth:`empty` or :meth:`from_moments`; every operation
    returns a new state and never modifies its receiver.

    >>> s = GaussianState.empty().extend_independent("X", 15, 2)
    >>> s = s.extend_independent("Y", 20, 1).extend_linear("Z", 2, "X", 0, 1)
    >>> s.mean.tolist()
    [15.0, 20.0, 30.0]
    >>> s.cov.tolist()
    [[2.0, 0.0, 4.0], [0.0, 1.0, 0.0], [4.0, 0.0, 9.0]]
    """

    __slots__ = ("_store", "_n", "_names", "_mean", "_cov")

    def __init__(self, _store: _Storage, _n: int):
        self._store = _store
        self._n = _n
        self._names = None
        self._mean = None
        self._cov = None

    # -- construction ---------------------------------------------------

    @classmethod
    def empty(cls, capacity: int = 16) -> "GaussianState":
        """The zero-dimensional state.

        ``capacity`` pre-allocates room for that many variables; it is only a
        performance hint.
        """
        return cls(_Storage(capacity), 0)

    @classmethod
    def from_moments(cls, names: Sequence[str], mean, cov, *, check: bool = True,
                     capacity: int | None = None) -> "GaussianState":
        names = [str(x) for x in names]
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(cov, dtype=float)
        n = len(names)
        if cov.ndim != 2 or cov.shape != (n, n) or mean.shape != (n,):
            raise StateError(
                f"dimension mismatch: {n} names, mean {mean.shape}, cov {cov.shape}")
        if len(set(names)) != n:
            raise StateError("variable names must be unique")
        if check:
            _check_moments(mean, cov)
        store = _Storage(max(n, capacity or 0))
        store.cov[:n, :n] = 0.5 * (cov + cov.T)
        store.mean[:n] = mean
        store.names.extend(names)
        store.index.update((name, i) for i, name in enumerate(names))
        store.used = n
        return cls(store, n)

    # -- read access ----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __contains__(self, name) -> bool:
        return self._store.index.get(name, self._n) < self._n

    @property
    def dim(self) -> int:
        return self._n

    @property
    def names(self) -> tuple[str, ...]:
        if self._names is None:
            self._names = tuple(self._store.names[: self._n])
        return self._names

    def index(self, name: str) -> int:
        i = self._store.index.get(name, self._n)
        if i >= self._n:
            raise StateError(f"unknown random variable {name!r}")
        return i

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            m = self._store.mean[: self._n].copy()
            m.flags.writeable = False
            self._mean = m
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        """Full symmetric covariance matrix (materialised once, read-only)."""
        if self._cov is None:
            low = np.tril(self._store.cov[: self._n, : self._n])
            full = low + np.tril(low, -1).T
            full.flags.writeable = False
            self._cov = full
        return self._cov

    def mean_of(self, name: str) -> float:
        return float(self._store.mean[self.index(name)])

    def variance(self, name: str) -> float:
        i = self.index(name)
        return float(self._store.cov[i, i])

    def covariance(self, a: str, b: str) -> float:
        i, j = self.index(a), self.index(b)
        return float(self._store.cov[max(i, j), min(i, j)])

    def _column(self, i: int) -> np.ndarray:
        n, buf = self._n, self._store.cov
        col = np.empty(n)
        col[: i + 1] = buf[i, : i + 1]
        col[i + 1:] = buf[i + 1: n, i]
        return col

    def _block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        r = np.maximum.outer(rows, cols)
        c = np.minimum.outer(rows, cols)
        return self._store.cov[r, c]

    def _diagonal(self) -> np.ndarray:
        return np.diagonal(self._store.cov)[: self._n]

    # -- extensions -----------------------------------------------------

    def _fresh(self, name: str) -> None:
        if not isinstance(name, str) or not name:
            raise StateError(f"invalid variable name {name!r}")
        if name in self:
            raise StateError(f"duplicate random variable {name!r}")

    def _append(self, name: str, mean: float, row: np.ndarray | None,
                variance: float) -> "GaussianState":
        """Write ``name`` as row ``n``; ``row`` holds its covariances with 0..n-1."""
        n = self._n
        store = self._store
        with store.lock:
            owned = store.used == n and n < store.capacity
            if owned:
                store.used = n + 1
        if not owned:
            fresh = _Storage(max(2 * n + 1, 16))
            fresh.cov[:n, :n] = store.cov[:n, :n]
            fresh.mean[:n] = store.mean[:n]
            fresh.names.extend(store.names[:n])
            fresh.index.update((nm, i) for i, nm in enumerate(fresh.names))
            fresh.used = n + 1
            store = fresh
        # rows at or beyond ``used`` are pristine zeros, so an independent
        # variable only needs its diagonal entry
        if row is not None:
            store.cov[n, :n] = row
        store.cov[n, n] = variance
        store.mean[n] = mean
        store.names.append(name)
        store.index[name] = n
        return GaussianState(store, n + 1)

    def extend_independent(self, name: str, mean: float, variance: float) -> "GaussianState":
        """Append ``name ~ N(mean, variance)`` independent of every other variable."""
        self._fresh(name)
        mean, variance = float(mean), float(variance)
        _check_variance(variance)
        if not math.isfinite(mean):
            raise StateError(f"non-finite mean {mean}")
        return self._append(name, mean, None, variance)

    def extend_linear(self, name: str, coeff: float, dep: str, offset: float,
                      variance: float) -> "GaussianState":
        """Append ``name | dep ~ N(coeff * dep + offset, variance)``."""
        d = self.index(dep)
        self._fresh(name)
        coeff, offset, variance = float(coeff), float(offset), float(variance)
        _check_variance(variance)
        col = self._column(d)
        return self._append(
            name,
            coeff * self._store.mean[d] + offset,
            coeff * col,
            variance + coeff * coeff * col[d],
        )

    def extend_shift_scale(self, name: str, src: str, op: str, c: float) -> "GaussianState":
        """Append ``name = src (op) c`` for ``op`` one of ``+ - * /``."""
        s = self.index(src)
        self._fresh(name)
        try:
            op = _OPS[op]
        except KeyError:
            raise StateError(f"unsupported operator {op!r}") from None
        c = float(c)
        col = self._column(s)
        mu = self._store.mean[s]
        if op == "+":
            return self._append(name, mu + c, col, col[s])
        if op == "-":
            return self._append(name, mu - c, col, col[s])
        if op == "*":
            return self._append(name, c * mu, c * col, c * c * col[s])
        if c == 0.0:
            raise StateError(f"division of {src!r} by zero")
        return self._append(name, mu / c, col / c, col[s] / (c * c))

    def extend_sum(self, name: str, a: str, b: str) -> "GaussianState":
        """Append ``name = a + b`` (``a == b`` allowed)."""
        ia, ib = self.index(a), self.index(b)
        self._fresh(name)
        ca, cb = self._column(ia), self._column(ib)
        # exact value is >= 0; cancellation of anti-correlated terms can round below
        variance = max(0.0, ca[ia] + cb[ib] + ca[ib] + cb[ia])
        mean = self._store.mean[ia] + self._store.mean[ib]
        return self._append(name, mean, ca + cb, variance)

    # -- conditioning, marginals, affine maps ---------------------------

    def condition(self, obs: str, value: float) -> "GaussianState":
        """Condition on ``obs == value`` and drop ``obs`` from the state.

        Uses the Schur complement with the scalar generalised inverse: an
        observed variance at or below the zero tolerance contributes nothing,
        but then ``value`` must equal the variable's mean.
        """
        o = self.index(obs)
        value = float(value)
        n = self._n
        store = self._store
        col = self._column(o)
        s = col[o]
        mu_o = store.mean[o]
        diag = self._diagonal()
        scale = 1.0 + float(diag.max(initial=0.0))

        keep = np.concatenate([np.arange(o), np.arange(o + 1, n)])
        m = n - 1
        out = _Storage(max(m, store.capacity - 1))
        out.names.extend(nm for i, nm in enumerate(store.names[:n]) if i != o)
        out.index.update((nm, i) for i, nm in enumerate(out.names))
        out.used = m

        if s <= ZERO_VARIANCE_TOL * scale:
            if abs(value - mu_o) > 1e-9 * (1.0 + abs(mu_o) + abs(value)):
                raise SupportError(
                    f"observed {obs!r} = {float(value)!r} outside the support of a "
                    f"zero-variance variable with mean {float(mu_o)!r}")
            out.mean[:m] = store.mean[keep]
            for r0 in range(0, m, _CONDITION_CHUNK):
                r1 = min(r0 + _CONDITION_CHUNK, m)
                out.cov[r0:r1, :r1] = self._block(keep[r0:r1], keep[:r1])
            return GaussianState(out, m)

        c = col[keep]
        gain = c / s
        out.mean[:m] = store.mean[keep] + gain * (value - mu_o)
        for r0 in range(0, m, _CONDITION_CHUNK):
            r1 = min(r0 + _CONDITION_CHUNK, m)
            out.cov[r0:r1, :r1] = (self._block(keep[r0:r1], keep[:r1])
                                   - np.outer(gain[r0:r1], c[:r1]))
        new_diag = np.diagonal(out.cov)[:m]
        tol = PSD_TOL * scale
        if np.any(new_diag < -tol):
            bad = out.names[int(np.argmin(new_diag))]
            raise NumericalError(
                f"conditioning on {obs!r} left variance of {bad!r} at {float(new_diag.min())!r}")
        neg = np.flatnonzero(new_diag < 0.0)
        out.cov[neg, neg] = 0.0
        return GaussianState(out, m)

    def marginal(self, targets: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
        """Mean vector and covariance of ``targets``, in the requested order."""
        targets = list(targets)
        if len(set(targets)) != len(targets):
            raise StateError(f"duplicate marginal target in {targets}")
        idx = np.array([self.index(t) for t in targets], dtype=np.intp)
        return self._store.mean[idx].copy(), self._block(idx, idx)

    def select(self, targets: Iterable[str]) -> "GaussianState":
        """Marginal as a new state."""
        targets = list(targets)
        mean, cov = self.marginal(targets)
        return GaussianState.from_moments(targets, mean, cov, check=False)

    def is_independent(self, a: str, b: str) -> bool:
        if a == b:
            raise StateError("independence needs two distinct variables")
        ia, ib = self.index(a), self.index(b)
        buf = self._store.cov
        cab = buf[max(ia, ib), min(ia, ib)]
        return abs(cab) <= 1e-12 * (1.0 + math.sqrt(max(buf[ia, ia] * buf[ib, ib], 0.0)))

    def affine_transform(self, A, b, new_names: Sequence[str]) -> "GaussianState":
        """The distribution of ``A @ X + b`` under new names."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[1] != self._n:
            raise StateError(f"matrix of shape {A.shape} cannot act on dimension {self._n}")
        if b.shape[0] != A.shape[0] or len(new_names) != A.shape[0]:
            raise StateError("offset vector and names must match the number of rows of A")
        cov = A @ self.cov @ A.T
        return GaussianState.from_moments(
            new_names, A @ self.mean + b, 0.5 * (cov + cov.T), check=False)

    # -- checks and dunder helpers --------------------------------------

    def check_invariants(self) -> None:
        """Raise if the state violates symmetry, PSD or naming invariants."""
        if len(set(self.names)) != self._n:
            raise StateError("variable names are not unique")
        _check_moments(self.mean, self.cov)

    def __eq__(self, other):
        if not isinstance(other, GaussianState):
            return NotImplemented
        return (self.names == other.names
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.cov, other.cov))

    __hash__ = None

    def __repr__(self):
        if self._n > 8:
            return f"GaussianState(dim={self._n}, names={list(self.names[:4])}...)"
        return (f"GaussianState(names={list(self.names)}, mean={self.mean.tolist()}, "
                f"cov={self.cov.tolist()})")


def _check_variance(variance: float) -> None:
    if not math.isfinite(variance):
        raise StateError(f"non-finite variance {variance}")
    if variance < 0.0:
        raise StateError(f"negative variance {variance}")


def _check_moments(mean: np.ndarray, cov: np.ndarray) -> None:
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise StateError("mean and covariance must be finite")
    if cov.size == 0:
        return
    scale = float(np.abs(cov).max())
    if np.abs(cov - cov.T).max() > SYMMETRY_TOL * (1.0 + scale):
        raise StateError("covariance matrix is not symmetric")
    diag = np.diagonal(cov)
    if np.any(diag < 0.0):
        raise NumericalError("covariance has a negative variance")
    lo = float(np.linalg.eigvalsh(0.5 * (cov + cov.T)).min())
    if lo < -PSD_TOL * (1.0 + float(diag.max())):
        raise NumericalError(f"covariance is not positive semi-definite (min eigenvalue {lo})")
