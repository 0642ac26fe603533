"""Plan selection under a budget.

The main routine is the cost-scaled greedy: repeatedly buy the single vote
with the best information gain per unit cost until nothing affordable helps.
Because plan quality is monotone and has diminishing returns over vote
multisets, the greedy plan's gain is at least 1 - e^(-(1 - gamma)) of the
optimum, where gamma = max_i c_i / B; `approximation_bound` computes that
factor and `exhaustive_opt` the true optimum for small instances.

Budgets and costs are exact rationals throughout, so affordability is an
integer comparison and a plan that spends the whole budget is exactly
feasible. In sampled mode each greedy step evaluates every candidate under the
same derived seed (common random numbers), which removes sampling noise from
the comparison between candidates within a step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction

from ._rng import derive_seed, substream
from .errors import InputError, ResourceLimitError
from .infogain import IgConfig, IgEstimate, IgMode, information_gain
from .model import AccessPlan, ApmModel, plan_cost


class Strategy(str, enum.Enum):
    GREEDY = "greedy"
    OPT = "opt"
    RND = "rnd"
    BEST = "best"
    EQUAL = "equal"


@dataclass(frozen=True)
class TraceStep:
    """One greedy acquisition: which path, what it added, at what rate."""

    step: int
    path: int
    delta_ig: float
    ratio: float


@dataclass(frozen=True)
class PlanResult:
    plan: AccessPlan
    cost: Fraction
    ig: IgEstimate
    trace: tuple[TraceStep, ...] = ()


def _coerce_budget(budget) -> Fraction:
    try:
        b = Fraction(budget)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise InputError(f"bad budget {budget!r}: {exc}") from None
    if b < 0:
        raise InputError(f"budget must be non-negative, got {b}")
    return b


def approximation_bound(model: ApmModel, budget) -> float:
    """Worst-case greedy/optimal gain ratio, 1 - e^(-(1 - gamma))."""
    b = _coerce_budget(budget)
    if b <= 0:
        raise InputError("approximation bound needs a positive budget")
    cmax = max(model.costs)
    if cmax > b:
        raise InputError(
            f"path cost {cmax} exceeds budget {b}; the bound only covers gamma < 1"
        )
    gamma = float(cmax / b)
    return 1.0 - math.exp(-(1.0 - gamma))


def greedy_plan(
    model: ApmModel,
    budget,
    ig_cfg: IgConfig | None = None,
    threads: int = 1,
) -> PlanResult:
    """Cost-scaled greedy vote acquisition.

    Each step adds the affordable single vote maximizing gain per cost; ties go
    to the lowest path index; steps with no positive gain end the search early.
    """
    cfg = ig_cfg or IgConfig()
    b = _coerce_budget(budget)
    counts = [0] * model.num_paths
    spent = Fraction(0)
    trace: list[TraceStep] = []
    step = 0
    while True:
        affordable = [i for i, c in enumerate(model.costs) if c <= b - spent]
        if not affordable:
            break
        step_cfg = cfg
        if cfg.mode is not IgMode.EXACT:
            step_cfg = replace(cfg, seed=derive_seed(cfg.seed, "greedy-step", step))
        base = information_gain(model, counts, step_cfg, threads).value
        best = None
        for i in affordable:
            counts[i] += 1
            delta = information_gain(model, counts, step_cfg, threads).value - base
            counts[i] -= 1
            if delta <= 0:
                continue
            ratio = delta / float(model.costs[i])
            if best is None or ratio > best[2]:
                best = (i, delta, ratio)
        if best is None:
            break
        i, delta, ratio = best
        counts[i] += 1
        spent += model.costs[i]
        trace.append(TraceStep(step=step, path=i, delta_ig=delta, ratio=ratio))
        step += 1
    return PlanResult(
        plan=AccessPlan(tuple(counts)),
        cost=spent,
        ig=information_gain(model, counts, cfg, threads),
        trace=tuple(trace),
    )


def exhaustive_opt(
    model: ApmModel,
    budget,
    ig_cfg: IgConfig | None = None,
    enumeration_limit: int = 200_000,
) -> PlanResult:
    """True optimum by enumerating every feasible plan with exact gain.

    Ties prefer the lexicographically smallest plan. Raises ResourceLimitError
    when the feasible set exceeds enumeration_limit.
    """
    cfg = ig_cfg or IgConfig()
    b = _coerce_budget(budget)
    caps = [int(b // c) for c in model.costs]
    total = 1
    for cap in caps:
        total *= cap + 1
    if total > enumeration_limit:
        raise ResourceLimitError(
            f"{total} candidate plans exceed the enumeration limit {enumeration_limit}"
        )

    exact_cfg = replace(cfg, mode=IgMode.EXACT)
    best_counts: tuple[int, ...] | None = None
    best_ig: IgEstimate | None = None

    def recurse(path: int, prefix: list[int], remaining: Fraction):
        nonlocal best_counts, best_ig
        if path == model.num_paths:
            est = information_gain(model, prefix, exact_cfg)
            if best_ig is None or est.value > best_ig.value:
                best_counts = tuple(prefix)
                best_ig = est
            return
        cost = model.costs[path]
        count = 0
        while count * cost <= remaining:
            prefix.append(count)
            recurse(path + 1, prefix, remaining - count * cost)
            prefix.pop()
            count += 1

    recurse(0, [], b)
    assert best_counts is not None and best_ig is not None
    return PlanResult(
        plan=AccessPlan(best_counts),
        cost=plan_cost(model, best_counts),
        ig=best_ig,
    )


def baseline_plan(
    strategy: Strategy | str,
    model: ApmModel,
    budget,
    seed: int = 0,
    ig_cfg: IgConfig | None = None,
    threads: int = 1,
) -> PlanResult:
    """Reference allocations: random, single-best-path, or equal spread."""
    strategy = Strategy(strategy)
    cfg = ig_cfg or IgConfig()
    b = _coerce_budget(budget)
    counts = [0] * model.num_paths
    spent = Fraction(0)

    if strategy is Strategy.RND:
        rng = substream(seed, "rnd-plan")
        while True:
            affordable = [i for i, c in enumerate(model.costs) if c <= b - spent]
            if not affordable:
                break
            i = affordable[int(rng.integers(0, len(affordable)))]
            counts[i] += 1
            spent += model.costs[i]
    elif strategy is Strategy.BEST:
        exact_cfg = replace(cfg, mode=IgMode.EXACT)
        best_path = None
        best_gain = -1.0
        for i in range(model.num_paths):
            one = [0] * model.num_paths
            one[i] = 1
            gain = information_gain(model, one, exact_cfg).value
            if gain > best_gain:
                best_path, best_gain = i, gain
        if model.costs[best_path] <= b:
            counts[best_path] = int(b // model.costs[best_path])
            spent = model.costs[best_path] * counts[best_path]
    elif strategy is Strategy.EQUAL:
        progressed = True
        while progressed:
            progressed = False
            for i, c in enumerate(model.costs):
                if c <= b - spent:
                    counts[i] += 1
                    spent += c
                    progressed = True
    else:
        raise InputError(
            f"{strategy.value} is not a baseline; call greedy_plan or exhaustive_opt"
        )

    return PlanResult(
        plan=AccessPlan(tuple(counts)),
        cost=spent,
        ig=information_gain(model, counts, cfg, threads),
    )


def build_plan(
    strategy: Strategy | str,
    model: ApmModel,
    budget,
    seed: int = 0,
    ig_cfg: IgConfig | None = None,
    threads: int = 1,
    enumeration_limit: int = 200_000,
) -> PlanResult:
    """Uniform entry point over all strategies."""
    strategy = Strategy(strategy)
    if strategy is Strategy.GREEDY:
        return greedy_plan(model, budget, ig_cfg, threads)
    if strategy is Strategy.OPT:
        return exhaustive_opt(model, budget, ig_cfg, enumeration_limit)
    return baseline_plan(strategy, model, budget, seed, ig_cfg, threads)
