"""Independent reference computations used to validate the engine.

Nothing here touches :mod:`gaussi.gaussian`.  :class:`NoiseBasisModel`
writes every random variable as ``offset + weights . eps`` with independent
standard normal coordinates ``eps``; covariances are dot products of weight
vectors and conditioning is an orthogonal projection.  :func:`abc_posterior`
is a rejection sampler over forward simulations.  :func:`random_program`
generates valid programs for property tests.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GaussiError, StateError, SupportError
from .lang import ast, parse
from .lang.validate import loop_count


class AbcFailure(GaussiError):
    """Rejection sampling accepted no simulation."""


def default_seed() -> int:
    return int(os.environ.get("GAUSSI_SEED", "0"))


# -- noise-basis representation --------------------------------------------

class NoiseBasisModel:
    """Variables as affine functions of independent standard normals."""

    def __init__(self):
        self.basis_count = 0
        self.variables: dict[str, tuple[float, np.ndarray]] = {}

    def copy(self) -> "NoiseBasisModel":
        other = NoiseBasisModel()
        other.basis_count = self.basis_count
        other.variables = {k: (o, w.copy()) for k, (o, w) in self.variables.items()}
        return other

    @classmethod
    def from_weights(cls, names, offsets, weights) -> "NoiseBasisModel":
        """Model with ``names[i] = offsets[i] + weights[i] . eps``."""
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        model = cls()
        model.basis_count = weights.shape[1]
        for name, off, w in zip(names, offsets, weights):
            model.variables[name] = (float(off), w.copy())
        return model

    def weights(self, name: str) -> np.ndarray:
        try:
            off, w = self.variables[name]
        except KeyError:
            raise StateError(f"unknown random variable {name!r}") from None
        if w.shape[0] < self.basis_count:
            w = np.concatenate([w, np.zeros(self.basis_count - w.shape[0])])
        return w

    def offset(self, name: str) -> float:
        self.weights(name)
        return self.variables[name][0]

    def _new(self, name: str, offset: float, weights: np.ndarray) -> None:
        if name in self.variables:
            raise StateError(f"duplicate random variable {name!r}")
        self.variables[name] = (float(offset), weights)

    def _fresh_coordinate(self) -> np.ndarray:
        self.basis_count += 1
        e = np.zeros(self.basis_count)
        e[-1] = 1.0
        return e

    def add_independent(self, name, mean, variance):
        if variance < 0:
            raise StateError("negative variance")
        self._new(name, mean, math.sqrt(variance) * self._fresh_coordinate())

    def add_linear(self, name, coeff, dep, offset, variance):
        if variance < 0:
            raise StateError("negative variance")
        base = self.weights(dep)
        e = self._fresh_coordinate()
        w = np.concatenate([base, [0.0]]) * coeff + math.sqrt(variance) * e
        self._new(name, coeff * self.offset(dep) + offset, w)

    def add_shift_scale(self, name, src, op, c):
        w, off = self.weights(src), self.offset(src)
        if op == "+":
            self._new(name, off + c, w.copy())
        elif op == "-":
            self._new(name, off - c, w.copy())
        elif op == "*":
            self._new(name, off * c, w * c)
        elif op == "/":
            if c == 0:
                raise StateError("division by zero")
            self._new(name, off / c, w / c)
        else:
            raise StateError(f"unsupported operator {op!r}")

    def add_sum(self, name, a, b):
        self._new(name, self.offset(a) + self.offset(b), self.weights(a) + self.weights(b))

    def variance(self, name) -> float:
        w = self.weights(name)
        return float(w @ w)

    def condition(self, name, value):
        wo, mo = self.weights(name), self.offset(name)
        norm2 = float(wo @ wo)
        scale = 1.0 + max((self.variance(k) for k in self.variables), default=0.0)
        del self.variables[name]
        if norm2 <= 1e-12 * scale:
            if abs(value - mo) > 1e-9 * (1.0 + abs(mo) + abs(value)):
                raise SupportError(f"{name} = {value} outside the support of a point mass at {mo}")
            return
        innovation = value - mo
        for k in list(self.variables):
            w, off = self.weights(k), self.variables[k][0]
            proj = float(w @ wo) / norm2
            self.variables[k] = (off + proj * innovation, w - proj * wo)

    def moments(self, targets) -> tuple[np.ndarray, np.ndarray]:
        targets = list(targets)
        W = np.array([self.weights(t) for t in targets]).reshape(len(targets), self.basis_count)
        mean = np.array([self.offset(t) for t in targets])
        return mean, W @ W.T


def _eval(e, env):
    if isinstance(e, ast.Num):
        return e.value
    if isinstance(e, ast.Var):
        return env[e.name]
    a, b = _eval(e.left, env), _eval(e.right, env)
    return {"+": a + b, "-": a - b, "*": a * b}.get(e.op) if e.op != "/" else a / b


def _resolve(ref, env):
    if ref.index is None:
        return ref.name
    return f"{ref.name}_{int(_eval(ref.index, env))}"


def _walk(stmt, env, visit):
    """Run ``visit(stmt, env)`` on each primitive statement with loops unrolled."""
    if isinstance(stmt, ast.Seq):
        for s in stmt.body:
            _walk(s, env, visit)
    elif isinstance(stmt, ast.For):
        saved = env.get(stmt.var)
        for k in range(loop_count(stmt.count)):
            env[stmt.var] = float(k)
            _walk(stmt.body, env, visit)
        if saved is None:
            env.pop(stmt.var, None)
        else:
            env[stmt.var] = saved
    elif isinstance(stmt, ast.DetAssign):
        env[stmt.name] = _eval(stmt.value, env)
    else:
        visit(stmt, env)


def build_noise_basis(program: ast.Program, *, skip_conditions: bool = False) -> NoiseBasisModel:
    """Noise-basis model of ``program`` after executing its body."""
    model = NoiseBasisModel()
    model.env = {}

    def visit(s, env):
        if isinstance(s, ast.ProbAssign):
            d = s.dist
            name = _resolve(s.target, env)
            if isinstance(d, ast.Independent):
                model.add_independent(name, _eval(d.mean, env), _eval(d.variance, env))
            else:
                model.add_linear(name, _eval(d.coeff, env), _resolve(d.dep, env),
                                 _eval(d.offset, env), _eval(d.variance, env))
        elif isinstance(s, ast.OpAssign):
            model.add_shift_scale(_resolve(s.target, env), _resolve(s.src, env), s.op,
                                  _eval(s.operand, env))
        elif isinstance(s, ast.SumAssign):
            model.add_sum(_resolve(s.target, env), _resolve(s.left, env), _resolve(s.right, env))
        elif isinstance(s, ast.Condition):
            if not skip_conditions:
                model.condition(_resolve(s.target, env), _eval(s.value, env))

    _walk(program.body, model.env, visit)
    return model


def oracle_moments(model: NoiseBasisModel, targets) -> tuple[np.ndarray, np.ndarray]:
    return model.moments(targets)


def return_names(program: ast.Program, env=None) -> list[str]:
    return [_resolve(r, env or {}) for r in program.returns]


def oracle_posterior(program: ast.Program):
    """``(names, mean, cov)`` of the program's return list via the noise basis."""
    model = build_noise_basis(program)
    names = return_names(program, model.env)
    mean, cov = model.moments(names)
    return names, mean, cov


# -- rejection ABC ---------------------------------------------------------

@dataclass(frozen=True)
class AbcEstimate:
    names: tuple
    mean: np.ndarray
    cov: np.ndarray
    accepted: int
    bandwidth: float
    simulations: int

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of each posterior-mean estimate."""
        return np.sqrt(np.diag(self.cov) / self.accepted)


def _simulate(program, n, rng):
    values: dict[str, np.ndarray] = {}
    observations = []

    def visit(s, env):
        if isinstance(s, ast.ProbAssign):
            d = s.dist
            z = rng.standard_normal(n)
            sd = math.sqrt(_eval(d.variance, env))
            if isinstance(d, ast.Independent):
                x = _eval(d.mean, env) + sd * z
            else:
                x = _eval(d.coeff, env) * values[_resolve(d.dep, env)] + _eval(d.offset, env) + sd * z
            values[_resolve(s.target, env)] = x
        elif isinstance(s, ast.OpAssign):
            src, c = values[_resolve(s.src, env)], _eval(s.operand, env)
            values[_resolve(s.target, env)] = {"+": src + c, "-": src - c, "*": src * c}.get(s.op) \
                if s.op != "/" else src / c
        elif isinstance(s, ast.SumAssign):
            values[_resolve(s.target, env)] = values[_resolve(s.left, env)] + values[_resolve(s.right, env)]
        elif isinstance(s, ast.Condition):
            name = _resolve(s.target, env)
            observations.append((name, values[name], _eval(s.value, env)))

    env: dict = {}
    _walk(program.body, env, visit)
    returns = np.column_stack([values[nm] for nm in return_names(program, env)])
    return returns, observations


def _chunk_moments(x: np.ndarray):
    k = x.shape[0]
    if k == 0:
        return 0, np.zeros(x.shape[1]), np.zeros((x.shape[1], x.shape[1]))
    m = x.mean(axis=0)
    d = x - m
    return k, m, d.T @ d


def _merge(a, b):
    na, ma, Ma = a
    nb, mb, Mb = b
    n = na + nb
    if n == 0:
        return a
    delta = mb - ma
    return n, ma + delta * (nb / n), Ma + Mb + np.outer(delta, delta) * (na * nb / n)


def abc_posterior(program: ast.Program, samples: int = 1_000_000, bandwidth: float = 0.05,
                  *, seed: int | None = None, chunk: int = 200_000,
                  workers: int = 1) -> AbcEstimate:
    """Rejection-ABC estimate of the posterior moments of the return list.

    Simulates ``samples`` forward runs ignoring ``condition`` statements and
    keeps runs where every conditioned variable lies within
    ``bandwidth * sd`` of its observed value, ``sd`` being that variable's
    prior-predictive standard deviation.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    seed = default_seed() if seed is None else seed
    prior = build_noise_basis(program, skip_conditions=True)
    sizes = [min(chunk, samples - i) for i in range(0, samples, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def one(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        returns, observations = _simulate(program, size, rng)
        keep = np.ones(size, dtype=bool)
        for name, x, value in observations:
            h = bandwidth * math.sqrt(prior.variance(name))
            keep &= np.abs(x - value) <= h
        return _chunk_moments(returns[keep])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, zip(sizes, seeds)))
    else:
        parts = [one(a) for a in zip(sizes, seeds)]
    total = parts[0]
    for p in parts[1:]:
        total = _merge(total, p)
    n, mean, M2 = total
    names = tuple(return_names(program, prior.env))
    if n == 0:
        raise AbcFailure(
            f"no simulation out of {samples} fell within the acceptance window; "
            "increase the bandwidth or the number of samples")
    cov = M2 / (n - 1) if n > 1 else np.full_like(M2, np.nan)
    return AbcEstimate(names, mean, cov, int(n), bandwidth, samples)


# -- random programs -------------------------------------------------------

STATEMENT_KINDS = ("independent", "dependent", "op", "sum", "condition", "det", "for")


def _c(rng, lo=-10.0, hi=10.0) -> float:
    return round(float(rng.uniform(lo, hi)), 3)


def _lit(v: float) -> str:
    return repr(v) if v >= 0 else f"({v!r})"


def random_program(seed: int | None = None, max_vars: int = 12, max_conditions: int = 3,
                   *, return_kinds: bool = False):
    """A random valid program with at most ``max_vars`` random variables.

    Constants come from [-10, 10] and variances from [0.1, 10].  Observed
    values are drawn within one prior-predictive standard deviation of the
    variable's current mean so that sampling-based checks stay feasible.
    """
    if max_vars < 1:
        raise ValueError("max_vars must be at least 1")
    rng = np.random.default_rng(default_seed() if seed is None else seed)
    model = NoiseBasisModel()
    lines: list[str] = []
    kinds: list[str] = []
    live: list[str] = []
    dets: dict[str, float] = {}
    budget = int(rng.integers(1, max_vars + 1))
    created = 0
    conditions = 0
    counter = 0

    def fresh(prefix="R"):
        nonlocal counter
        counter += 1
        return f"{prefix}{counter}"

    def det_expr():
        # a constant, or a deterministic variable plus a constant
        if dets and rng.random() < 0.3:
            d = str(rng.choice(sorted(dets)))
            c = _c(rng, -2, 2)
            return f"{d} + {_lit(c)}", dets[d] + c
        c = _c(rng)
        return _lit(c), c

    while created < budget:
        options = ["independent", "det"]
        if live:
            options += ["dependent", "op", "sum"]
            eligible = [x for x in live if model.variance(x) >= 0.1]
            if conditions < max_conditions and len(live) >= 2 and eligible:
                options.append("condition")
        if budget - created >= 2:
            options.append("for")
        kind = str(rng.choice(options))
        kinds.append(kind)
        if kind == "independent":
            name = fresh()
            text, mean = det_expr()
            var = _c(rng, 0.1, 10)
            lines.append(f"{name} = Normal({text}, {var!r})")
            model.add_independent(name, mean, var)
            live.append(name)
            created += 1
        elif kind == "dependent":
            name, dep = fresh(), str(rng.choice(live))
            a, b, var = _c(rng), _c(rng), _c(rng, 0.1, 10)
            form = int(rng.integers(3))
            if form == 0:
                lines.append(f"{name} = Normal({_lit(a)} * {dep} + {_lit(b)}, {var!r})")
            elif form == 1:
                lines.append(f"{name} = Normal({dep} * {_lit(a)}, {var!r})")
                b = 0.0
            else:
                lines.append(f"{name} = Normal({dep} + {_lit(b)}, {var!r})")
                a = 1.0
            model.add_linear(name, a, dep, b, var)
            live.append(name)
            created += 1
        elif kind == "op":
            name, src = fresh(), str(rng.choice(live))
            op = str(rng.choice(["+", "-", "*", "/"]))
            c = _c(rng)
            if op in "*/" and abs(c) < 0.5:
                c = 0.5 if c >= 0 else -0.5
            lines.append(f"{name} = {src} {op} {_lit(c)}")
            model.add_shift_scale(name, src, op, c)
            live.append(name)
            created += 1
        elif kind == "sum":
            name = fresh()
            a, b = str(rng.choice(live)), str(rng.choice(live))
            lines.append(f"{name} = {a} + {b}")
            model.add_sum(name, a, b)
            live.append(name)
            created += 1
        elif kind == "condition":
            target = str(rng.choice([x for x in live if model.variance(x) >= 0.1]))
            sd = math.sqrt(model.variance(target))
            value = round(model.offset(target) + float(rng.uniform(-1, 1)) * sd, 3)
            lines.append(f"condition({target}, {_lit(value)})")
            model.condition(target, value)
            live.remove(target)
            conditions += 1
        elif kind == "det":
            name = fresh("d")
            text, value = det_expr()
            lines.append(f"{name} = {text}")
            dets[name] = value
        else:
            k = int(rng.integers(2, min(3, budget - created) + 1))
            base = fresh("L")
            var = _c(rng, 0.1, 10)
            if live and rng.random() < 0.5:
                dep, a = str(rng.choice(live)), _c(rng)
                lines.append(f"for i in range({k}):")
                lines.append(f"    {base}[i] = Normal({_lit(a)} * {dep} + i, {var!r})")
                for j in range(k):
                    model.add_linear(f"{base}_{j}", a, dep, float(j), var)
            else:
                lines.append(f"for i in range({k}):")
                lines.append(f"    {base}[i] = Normal(i * 2, {var!r})")
                for j in range(k):
                    model.add_independent(f"{base}_{j}", 2.0 * j, var)
            live.extend(f"{base}_{j}" for j in range(k))
            created += k

    count = int(rng.integers(1, min(3, len(live)) + 1))
    returns = [str(x) for x in rng.choice(live, size=count, replace=False)]
    lines.append("return " + ", ".join(returns))
    program = parse("\n".join(lines) + "\n")
    return (program, kinds) if return_kinds else program
