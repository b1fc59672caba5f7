"""Twin networks and the abduction-action-prediction reference procedure.

A twin network duplicates every observable ``v`` into a counterfactual copy
``v*`` driven by the *same* latent parent as ``v``. A counterfactual query
``P(Y*=y | E=e, do(X*=x))`` then becomes an ordinary conditional query on the
joint graph. :func:`query_counterfactual_aap` computes the same quantity the
long way round (posterior over latents, intervene, predict) and serves as the
cross-check.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any

from .errors import UnknownVariableError, ZeroEvidenceError
from .scm import (
    SCM,
    Event,
    StructuralEquation,
    apply_do,
    as_event,
    build_scm,
    enumerate_latents,
    evaluate,
)

STAR = "*"
ZERO_EVIDENCE = 1e-15


def star(name: str) -> str:
    return name if name.endswith(STAR) else name + STAR


def unstar(name: str) -> str:
    return name[: -len(STAR)] if name.endswith(STAR) else name


@dataclass(frozen=True)
class TwinNetwork:
    factual: SCM
    counterfactual: SCM
    star_variables: Mapping[str, str]
    cf_interventions: Mapping[str, Any] = field(default_factory=dict)

    @property
    def latents(self) -> tuple[str, ...]:
        return self.factual.latents

    def evaluate(self, noise: Mapping[str, Any]) -> dict[str, Any]:
        """Joint forward pass: factual values plus starred counterfactual values."""
        values = evaluate(self.factual, noise)
        values.update(evaluate(self.counterfactual, noise))
        return values


@dataclass(frozen=True)
class CounterfactualQuery:
    evidence: Mapping[str, Any]
    cf_do: Mapping[str, Any]
    event: Event | Mapping[str, Any]

    def __post_init__(self):
        for name in self.evidence:
            if name.endswith(STAR):
                raise UnknownVariableError(f"evidence must name factual nodes, got {name!r}")
        object.__setattr__(self, "cf_do", {star(k): v for k, v in self.cf_do.items()})
        if isinstance(self.event, Mapping):
            object.__setattr__(self, "event", {star(k): v for k, v in self.event.items()})


def _starred_scm(scm: SCM) -> SCM:
    eqs = [
        StructuralEquation(star(eq.target), tuple(star(p) for p in eq.parents), eq.noise, eq.mechanism, eq.domain)
        for eq in scm.equations.values()
    ]
    # priors object is passed through unchanged: latents are shared, not copied
    cf = build_scm(eqs, scm.priors)
    return apply_do(cf, {star(k): v for k, v in scm.interventions.items()})


def build_twin(scm: SCM, cf_do: Mapping[str, Any] | None = None) -> TwinNetwork:
    """Duplicate ``scm`` and intervene on the counterfactual half.

    ``cf_do`` may name variables with or without the ``*`` suffix.
    """
    cf_do = {star(k): v for k, v in (cf_do or {}).items()}
    for name in cf_do:
        if unstar(name) not in scm.equations:
            if unstar(name) in scm.priors:
                # let apply_do raise the latent-specific error
                apply_do(scm, {unstar(name): cf_do[name]})
            raise UnknownVariableError(f"unknown variable {unstar(name)!r}")
    cf = apply_do(_starred_scm(scm), cf_do)
    return TwinNetwork(
        factual=scm,
        counterfactual=cf,
        star_variables=MappingProxyType({v: star(v) for v in scm.observables}),
        cf_interventions=MappingProxyType(cf_do),
    )


def _matches(values: Mapping[str, Any], evidence: Mapping[str, Any]) -> bool:
    return all(values[k] == v for k, v in evidence.items())


def query_counterfactual_twin(twin: TwinNetwork, q: CounterfactualQuery) -> float:
    """``P(event* | evidence, do(X*=x))`` by joint enumeration of the twin graph."""
    for name in q.evidence:
        if name not in twin.factual.equations:
            raise UnknownVariableError(f"unknown evidence variable {name!r}")
    cf = apply_do(twin.counterfactual, q.cf_do) if q.cf_do else twin.counterfactual
    event = as_event(q.event)
    num = []
    den = []
    for u, p in enumerate_latents(twin.factual):
        if not _matches(evaluate(twin.factual, u), q.evidence):
            continue
        den.append(p)
        if event(evaluate(cf, u)):
            num.append(p)
    p_e = math.fsum(den)
    if p_e < ZERO_EVIDENCE:
        raise ZeroEvidenceError(f"evidence {dict(q.evidence)} has probability {p_e!r}")
    return min(1.0, max(0.0, math.fsum(num) / p_e))


def query_counterfactual_aap(scm: SCM, q: CounterfactualQuery) -> float:
    """Same query by abduction (posterior over latents), action, prediction."""
    # abduction
    posterior: list[tuple[dict, float]] = []
    for u, p in enumerate_latents(scm):
        if p > 0 and _matches(evaluate(scm, u), q.evidence):
            posterior.append((u, p))
    p_e = math.fsum(p for _, p in posterior)
    if p_e < ZERO_EVIDENCE:
        raise ZeroEvidenceError(f"evidence {dict(q.evidence)} has probability {p_e!r}")
    # action
    sub = apply_do(scm, {unstar(k): v for k, v in q.cf_do.items()})
    # prediction
    event = as_event(q.event)
    hits = []
    for u, p in posterior:
        starred = {star(k): v for k, v in evaluate(sub, u).items()}
        if event(starred):
            hits.append(p / p_e)
    return min(1.0, max(0.0, math.fsum(hits)))


# randomized models for the equivalence sweep


def random_scm(rng: random.Random, n_observables: int, max_domain: int = 3, edge_prob: float = 0.5) -> SCM:
    """Random DAG over ``n_observables`` with one latent per observable.

    Priors are random categoricals and mechanisms are random lookup tables.
    Node ``i`` may only have parents ``j < i``, which keeps the graph acyclic.
    """
    names = [f"V{i}" for i in range(n_observables)]
    domains = [rng.randint(2, max_domain) for _ in names]
    priors = {}
    eqs = []
    for i, name in enumerate(names):
        k = rng.randint(2, max_domain)
        weights = [rng.random() + 0.05 for _ in range(k)]
        total = sum(weights)
        probs = [w / total for w in weights]
        probs[-1] = 1.0 - math.fsum(probs[:-1])
        priors[f"U{i}"] = dict(enumerate(probs))
        parents = tuple(names[j] for j in range(i) if rng.random() < edge_prob)
        parent_domains = [range(domains[names.index(p)]) for p in parents]
        table = {}
        for pa in itertools.product(*parent_domains):
            for u in range(k):
                table[(pa, u)] = rng.randrange(domains[i])
        eqs.append(StructuralEquation(name, parents, f"U{i}", _Table(table), tuple(range(domains[i]))))
    return build_scm(eqs, priors)


class _Table:
    def __init__(self, table):
        self.table = table

    def __call__(self, parents, u):
        return self.table[(tuple(parents), u)]


def random_query(rng: random.Random, scm: SCM) -> CounterfactualQuery:
    """A well-posed query: evidence is read off a latent state with positive prior."""
    latent_states = [(u, p) for u, p in enumerate_latents(scm) if p > 0]
    u, _ = rng.choice(latent_states)
    values = evaluate(scm, u)
    obs = list(scm.observables)
    evidence_vars = rng.sample(obs, rng.randint(0, len(obs)))
    evidence = {k: values[k] for k in evidence_vars}
    do_var = rng.choice(obs)
    do_value = rng.choice(scm.equations[do_var].domain)
    target = rng.choice(obs)
    target_value = rng.choice(scm.equations[target].domain)
    return CounterfactualQuery(evidence, {do_var: do_value}, {target: target_value})


def equivalence_sweep(n_models: int = 100, queries_per_model: int = 5, seed: int = 1,
                      max_observables: int = 6, max_domain: int = 3) -> dict:
    """Compare twin and abduction-action-prediction answers on random models.

    Returns the maximum absolute deviation and the wall time spent in each path.
    """
    rng = random.Random(seed)
    max_dev = 0.0
    t_twin = t_aap = 0.0
    n_queries = 0
    for _ in range(n_models):
        scm = random_scm(rng, rng.randint(2, max_observables), max_domain)
        for _ in range(queries_per_model):
            q = random_query(rng, scm)
            t0 = time.perf_counter()
            a = query_counterfactual_twin(build_twin(scm, q.cf_do), q)
            t1 = time.perf_counter()
            b = query_counterfactual_aap(scm, q)
            t2 = time.perf_counter()
            t_twin += t1 - t0
            t_aap += t2 - t1
            max_dev = max(max_dev, abs(a - b))
            n_queries += 1
    return {"models": n_models, "queries": n_queries, "max_deviation": max_dev,
            "twin_seconds": t_twin, "aap_seconds": t_aap}
