"""Income-statistics case study: program generation, posterior and leakage.

An attacker knows Gaussian priors over the incomes of 80 individuals and
observes released group averages.  Case 1 releases the average of males
aged 21-30, case 2 adds the average of everyone aged 21-30 and case 3 adds
the average of all males.  With differential privacy each release gets
Gaussian-mechanism noise before it is observed.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import GaussiError
from .interpreter import PosteriorResult, run_program
from .lang import parse
from .metrics import (DpParameters, LeakageReport, gaussian_mechanism_variance,
                      kl_divergence_nats, kl_divergence_paper, mutual_information)

COLUMNS = ("age_group", "gender", "income", "prior_mean", "prior_variance")
DEFAULT_EPSILON = 0.9


class DatasetError(GaussiError, ValueError):
    """The income dataset does not follow the expected schema."""


@dataclass(frozen=True)
class Person:
    age_group: str
    gender: str
    income: float
    prior_mean: float
    prior_variance: float


@dataclass(frozen=True)
class Statistic:
    """A released average over the groups in ``members`` (``(gender, age_group)`` pairs)."""

    name: str
    members: tuple
    label: str


@dataclass(frozen=True)
class CaseStudyConfig:
    dataset: Path | None = None
    priors: Path | None = None
    case: int = 1
    dp: bool = False
    epsilon: float = DEFAULT_EPSILON
    delta: float | None = None
    sensitivity: float | None = None
    dp_scope: str = "group"
    victim: str | None = None
    condition_order: tuple | None = None

    def __post_init__(self):
        if self.case not in (1, 2, 3):
            raise ValueError(f"case must be 1, 2 or 3, got {self.case}")
        if self.dp_scope not in ("group", "database"):
            raise ValueError(f"dp scope must be 'group' or 'database', got {self.dp_scope!r}")
        for p in (self.dataset, self.priors):
            if p is not None and not Path(p).is_file():
                raise ValueError(f"no such file: {p}")


@dataclass(frozen=True)
class CaseStudyResult:
    config: CaseStudyConfig
    program: str
    victim: str
    prior_mean: float
    prior_variance: float
    true_income: float
    posterior: PosteriorResult
    observations: dict
    noise_variances: dict
    leakage: LeakageReport
    mi_by_statistic: dict = field(default_factory=dict)

    @property
    def posterior_mean(self) -> float:
        return float(self.posterior.mean[0])

    @property
    def posterior_variance(self) -> float:
        return float(self.posterior.cov[0, 0])


def _number(row, key, where):
    try:
        v = float(row[key])
    except (TypeError, ValueError):
        raise DatasetError(f"{where}: column {key!r} is not a number: {row.get(key)!r}") from None
    if not math.isfinite(v):
        raise DatasetError(f"{where}: column {key!r} is not finite")
    return v


def load_dataset(path=None, priors=None) -> list[Person]:
    """Rows of the income CSV, in file order.

    ``priors`` optionally names a second CSV (columns age_group, gender,
    prior_mean, prior_variance, same row order) overriding the prior columns.
    """
    if path is None:
        text = resources.files("gaussi").joinpath("data/incomes.csv").read_text("utf-8")
        source = "incomes.csv"
    else:
        text = Path(path).read_text("utf-8")
        source = str(path)
    rows = list(csv.DictReader(text.splitlines()))
    header = tuple(csv.reader(text.splitlines()[:1]))[0] if text.strip() else ()
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DatasetError(f"{source}: missing columns {', '.join(missing)}")
    people = []
    for k, row in enumerate(rows, start=2):
        where = f"{source}:{k}"
        gender = row["gender"].strip().lower()
        if gender not in ("male", "female"):
            raise DatasetError(f"{where}: gender must be male or female, got {row['gender']!r}")
        age = row["age_group"].strip()
        if not re.fullmatch(r"\d+-\d+", age):
            raise DatasetError(f"{where}: age group must look like 21-30, got {age!r}")
        var = _number(row, "prior_variance", where)
        if var <= 0:
            raise DatasetError(f"{where}: prior variance must be positive")
        people.append(Person(age, gender, _number(row, "income", where),
                             _number(row, "prior_mean", where), var))
    if not people:
        raise DatasetError(f"{source}: no rows")
    if priors is not None:
        prior_rows = list(csv.DictReader(Path(priors).read_text("utf-8").splitlines()))
        if len(prior_rows) != len(people):
            raise DatasetError(f"{priors}: expected {len(people)} rows, found {len(prior_rows)}")
        merged = []
        for k, (p, row) in enumerate(zip(people, prior_rows), start=2):
            where = f"{priors}:{k}"
            if (row.get("age_group", "").strip(), row.get("gender", "").strip().lower()) \
                    != (p.age_group, p.gender):
                raise DatasetError(f"{where}: row does not match the dataset's group order")
            var = _number(row, "prior_variance", where)
            if var <= 0:
                raise DatasetError(f"{where}: prior variance must be positive")
            merged.append(Person(p.age_group, p.gender, p.income,
                                 _number(row, "prior_mean", where), var))
        people = merged
    return people


def group_name(gender: str, age_group: str) -> str:
    return f"{gender}_{age_group.replace('-', '_')}"


def groups(people) -> dict:
    """``{(gender, age_group): [Person, ...]}`` in first-appearance order."""
    out: dict = {}
    for p in people:
        out.setdefault((p.gender, p.age_group), []).append(p)
    return out


def statistics_for_case(case: int, people) -> list[Statistic]:
    g = groups(people)
    first_age = next(a for (_, a) in g)
    males = tuple(k for k in g if k[0] == "male")
    stats = [Statistic(f"{group_name('male', first_age)}_average", (("male", first_age),),
                       f"males aged {first_age}")]
    if case >= 2:
        members = tuple(k for k in g if k[1] == first_age)
        stats.append(Statistic(f"age_{first_age.replace('-', '_')}_average", members,
                               f"everyone aged {first_age}"))
    if case >= 3:
        stats.append(Statistic("male_average", males, "all males"))
    return stats


def true_average(stat: Statistic, people) -> float:
    g = groups(people)
    incomes = [p.income for m in stat.members for p in g[m]]
    return sum(incomes) / len(incomes)


def dp_parameters(stat: Statistic, people, config: CaseStudyConfig) -> DpParameters:
    """Gaussian-mechanism parameters for one release.

    By default the sensitivity is (max - min) / size and delta is 1 / size**2,
    both over the people the statistic averages.  With ``dp_scope='database'``
    the whole dataset is used instead.
    """
    g = groups(people)
    scope = [p for m in stat.members for p in g[m]] if config.dp_scope == "group" else list(people)
    size = len(scope)
    incomes = [p.income for p in scope]
    sens = config.sensitivity if config.sensitivity is not None else (max(incomes) - min(incomes)) / size
    delta = config.delta if config.delta is not None else 1.0 / size ** 2
    return DpParameters(config.epsilon, delta, sens)


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _sum_chain(lines, target, operands):
    """Emit ``target = operands[0] + ... + operands[-1]`` as binary sums."""
    if len(operands) == 1:
        lines.append(f"{target} = {operands[0]} * 1")
        return
    acc = operands[0]
    for k, op in enumerate(operands[1:], start=1):
        name = target if k == len(operands) - 1 else f"{target}_partial_{k}"
        lines.append(f"{name} = {acc} + {op}")
        acc = name


def generate_program(config: CaseStudyConfig, people=None, *, with_conditions: bool = True,
                     returns=None) -> tuple[str, dict, dict]:
    """Source text of the case program, the observations and the noise variances."""
    people = load_dataset(config.dataset, config.priors) if people is None else people
    g = groups(people)
    stats = statistics_for_case(config.case, people)
    needed = {m for s in stats for m in s.members}
    lines = ["def agg():"]
    body = []
    for key, members in g.items():
        name = group_name(*key)
        priors = ", ".join(f"Normal({_fmt(p.prior_mean)}, {_fmt(p.prior_variance)})" for p in members)
        body.append(f"{name} = [{priors}]")
        if key not in needed:
            continue
        n = len(members)
        total = f"{name}_total"
        if n == 1:
            body.append(f"{total} = {name}[0] * 1")
        else:
            body.append(f"{name}_running[1] = {name}[0] + {name}[1]")
            if n > 2:
                body.append(f"for i in range({n - 2}):")
                body.append(f"    {name}_running[i + 2] = {name}_running[i + 1] + {name}[i + 2]")
            body.append(f"{total} = {name}_running[{n - 1}] * 1")
    observations: dict = {}
    noises: dict = {}
    observed = []
    for s in stats:
        size = sum(len(g[m]) for m in s.members)
        if len(s.members) == 1:
            body.append(f"{s.name} = {group_name(*s.members[0])}_total / {size}")
        else:
            total = s.name.replace("_average", "_total")
            _sum_chain(body, total, [f"{group_name(*m)}_total" for m in s.members])
            body.append(f"{s.name} = {total} / {size}")
        out = s.name
        if config.dp:
            var = gaussian_mechanism_variance(dp_parameters(s, people, config))
            noise = f"{s.name}_noise"
            body.append(f"{noise} = Normal(0, {_fmt(var)})")
            out = f"{s.name}_dp"
            body.append(f"{out} = {s.name} + {noise}")
            noises[out] = var
        observations[out] = true_average(s, people)
        observed.append(out)
    order = config.condition_order or tuple(range(len(observed)))
    if sorted(order) != list(range(len(observed))):
        raise ValueError(f"condition order must permute 0..{len(observed) - 1}")
    if with_conditions:
        for k in order:
            body.append(f'condition("{observed[k]}", {_fmt(observations[observed[k]])})')
    victim = config.victim or f"{group_name(*next(iter(g)))}[0]"
    body.append("return " + ", ".join(returns or [victim]))
    lines.extend("    " + b for b in body)
    return "\n".join(lines) + "\n", observations, noises


def _victim_person(victim: str, people) -> Person:
    m = re.fullmatch(r"(.+?)(?:\[(\d+)\]|_(\d+))", victim)
    if not m:
        raise ValueError(f"victim must name an individual such as male_21_30[0], got {victim!r}")
    base, k = m.group(1), int(m.group(2) or m.group(3))
    for key, members in groups(people).items():
        if group_name(*key) == base and k < len(members):
            return members[k]
    raise ValueError(f"unknown victim {victim!r}")


def run_case_study(config: CaseStudyConfig) -> CaseStudyResult:
    people = load_dataset(config.dataset, config.priors)
    g = groups(people)
    victim = config.victim or f"{group_name(*next(iter(g)))}[0]"
    config = CaseStudyConfig(**{**config.__dict__, "victim": victim})
    person = _victim_person(victim, people)
    text, observations, noises = generate_program(config, people)
    posterior = run_program(parse(text))
    mean, var = float(posterior.mean[0]), float(posterior.cov[0, 0])
    # MI is measured in the joint before any observation is made
    outputs = list(observations)
    joint_text, _, _ = generate_program(config, people, with_conditions=False,
                                        returns=[victim] + outputs)
    joint = run_program(parse(joint_text))
    vname = joint.names[0]
    mi = {o: mutual_information(joint.state, vname, o) for o in outputs}
    leakage = LeakageReport(
        label=f"case {config.case}{' with DP' if config.dp else ''}",
        kl_prior_posterior=kl_divergence_paper(mean, var, person.prior_mean, person.prior_variance),
        kl_prior_posterior_nats=kl_divergence_nats(mean, var, person.prior_mean, person.prior_variance),
        mutual_information=mi[outputs[-1]],
    )
    return CaseStudyResult(config, text, vname, person.prior_mean, person.prior_variance,
                           person.income, posterior, observations, noises, leakage, mi)
