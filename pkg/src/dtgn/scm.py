"""Discrete structural causal models with exact, enumeration-based inference.

A model is a set of latent noise variables with categorical priors and one
deterministic mechanism per observable, ``v = f(parents, u)``. Interventions
replace a mechanism by a constant and ignore its incoming edges.
"""

from __future__ import annotations

import graphlib
import itertools
import math
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any

from .errors import (
    CycleError,
    DanglingVariableError,
    ExplosionError,
    IncompleteNoiseError,
    InfiniteDomainError,
    InvalidPriorError,
    LatentInterventionError,
    UnknownVariableError,
)

LATENT = "latent"
OBSERVABLE = "observable"

PRIOR_TOL = 1e-12
ENUM_TOL = 1e-9
MAX_JOINT_STATES = 2**20

Assignment = dict[str, int]
Event = Callable[[Mapping[str, int]], bool]


@dataclass(frozen=True)
class VariableId:
    name: str
    kind: str


@dataclass(frozen=True)
class StructuralEquation:
    """``target = mechanism(tuple(values of parents), value of noise)``."""

    target: str
    parents: tuple[str, ...]
    noise: str
    mechanism: Callable[[tuple, Any], Any]
    domain: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if self.domain is not None:
            object.__setattr__(self, "domain", tuple(self.domain))


def equation(target, parents, noise, mechanism, domain=None) -> StructuralEquation:
    return StructuralEquation(target, tuple(parents), noise, mechanism, domain)


@dataclass(frozen=True)
class SCM:
    variables: tuple[VariableId, ...]
    equations: Mapping[str, StructuralEquation]
    priors: Mapping[str, Any]
    interventions: Mapping[str, Any] = field(default_factory=dict)
    order: tuple[str, ...] = ()

    @property
    def latents(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind == LATENT)

    @property
    def observables(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind == OBSERVABLE)

    def parents_of(self, name: str) -> tuple[str, ...]:
        if name in self.interventions:
            return ()
        return self.equations[name].parents

    def is_finite(self) -> bool:
        return all(isinstance(p, Mapping) for p in self.priors.values())


def _check_prior(name: str, prior: Any) -> Any:
    if not isinstance(prior, Mapping):
        # non-categorical priors are legal but cannot be enumerated
        return prior
    total = 0.0
    for value, p in prior.items():
        if not isinstance(p, (int, float)) or math.isnan(p) or p < 0:
            raise InvalidPriorError(f"prior of {name!r} has invalid probability {p!r} for value {value!r}")
        total += p
    if abs(total - 1.0) > PRIOR_TOL:
        raise InvalidPriorError(f"prior of {name!r} sums to {total!r}, not 1")
    return MappingProxyType(dict(prior))


def build_scm(equations: Sequence[StructuralEquation], priors: Mapping[str, Any]) -> SCM:
    """Validate equations and priors and return an immutable model.

    ``priors`` maps each latent name to ``{value: probability}``. Any other
    object is accepted as a non-enumerable prior (see :func:`enumerate_latents`).
    """
    eqs: dict[str, StructuralEquation] = {}
    for eq in equations:
        if eq.target in eqs:
            raise DanglingVariableError(f"observable {eq.target!r} has more than one equation")
        if eq.target in priors:
            raise DanglingVariableError(f"{eq.target!r} is declared both latent and observable")
        eqs[eq.target] = eq
    for eq in eqs.values():
        if eq.noise not in priors:
            raise DanglingVariableError(f"noise {eq.noise!r} of {eq.target!r} has no prior")
        for p in eq.parents:
            if p not in eqs:
                raise DanglingVariableError(f"parent {p!r} of {eq.target!r} is not an observable with an equation")
    checked = {name: _check_prior(name, prior) for name, prior in priors.items()}

    sorter = graphlib.TopologicalSorter({t: eq.parents for t, eq in eqs.items()})
    try:
        obs_order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        raise CycleError(f"causal graph has a cycle: {exc.args[1]}") from None

    variables = tuple(VariableId(n, LATENT) for n in checked) + tuple(VariableId(n, OBSERVABLE) for n in obs_order)
    return SCM(
        variables=variables,
        equations=MappingProxyType(eqs),
        priors=MappingProxyType(checked),
        interventions=MappingProxyType({}),
        order=tuple(checked) + obs_order,
    )


def apply_do(scm: SCM, interventions: Mapping[str, Any]) -> SCM:
    """Return the submodel in which each intervened observable is a constant."""
    for name in interventions:
        if name in scm.priors:
            raise LatentInterventionError(f"cannot intervene on latent {name!r}")
        if name not in scm.equations:
            raise UnknownVariableError(f"unknown variable {name!r}")
    if not interventions:
        return scm
    merged = dict(scm.interventions)
    merged.update(interventions)
    return SCM(scm.variables, scm.equations, scm.priors, MappingProxyType(merged), scm.order)


def evaluate(scm: SCM, noise: Mapping[str, Any]) -> Assignment:
    """Forward pass in topological order. Returns values of all observables."""
    missing = [u for u in scm.latents if u not in noise]
    if missing:
        raise IncompleteNoiseError(f"noise assignment missing latents {missing}")
    values: dict[str, Any] = {}
    for name in scm.order:
        if name in scm.priors:
            continue
        if name in scm.interventions:
            values[name] = scm.interventions[name]
            continue
        eq = scm.equations[name]
        values[name] = eq.mechanism(tuple(values[p] for p in eq.parents), noise[eq.noise])
    return values


def enumerate_latents(scm: SCM) -> Iterator[tuple[Assignment, float]]:
    """Yield every joint latent assignment with its product prior probability."""
    names = scm.latents
    domains = []
    size = 1
    for u in names:
        prior = scm.priors[u]
        if not isinstance(prior, Mapping):
            raise InfiniteDomainError(f"latent {u!r} has no finite categorical prior")
        domains.append(tuple(prior.items()))
        size *= len(prior)
    if size > MAX_JOINT_STATES:
        raise ExplosionError(f"{size} joint latent states exceed the cap of {MAX_JOINT_STATES}")
    for combo in itertools.product(*domains):
        prob = 1.0
        for _, p in combo:
            prob *= p
        yield {u: value for u, (value, _) in zip(names, combo)}, prob


def as_event(event: Event | Mapping[str, Any]) -> Event:
    """Accept either a predicate or a ``{name: value}`` conjunction of equalities."""
    if callable(event):
        return event
    required = dict(event)
    return lambda values: all(values[k] == v for k, v in required.items())


def query_interventional(scm: SCM, do: Mapping[str, Any], event: Event | Mapping[str, Any]) -> float:
    """Exact ``P(event | do)`` by summing priors of satisfying latent states."""
    event = as_event(event)
    sub = apply_do(scm, do)
    total = math.fsum(p for u, p in enumerate_latents(sub) if event(evaluate(sub, u)))
    return min(1.0, max(0.0, total))


def query_observational(scm: SCM, event: Event | Mapping[str, Any]) -> float:
    return query_interventional(scm, {}, event)
