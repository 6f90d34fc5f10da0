"""Bounded verification and instance search over region decompositions.

A boolean goal is verified by decomposing it and asking, per region, whether
the region's constraints admit an input where the goal value is false.  A
satisfying assignment is rebuilt into concrete arguments and replayed through
the concrete evaluator; only a replay that actually produces false is
reported as a refutation.  Regions closed by the unroll or construction
bounds weaken a clean pass to "proved up to bound".  Solver unknowns and
models that lean on uninterpreted atoms surface as Unknown, with the
untrusted candidate attached for inspection.

Instance search is the dual query: find a region input where the goal is
true, replay it, and report it; exhausting all regions without a witness is
always reported relative to the bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import decomp as D
from . import solver as SL
from . import syntax as S
from . import values as V
from .decomp import DecompOptions, DecompResult, Region, decompose, rebuild_value
from .evaluator import Counterexample, EvalError, ReplayReport, eval_call, replay_counterexample
from .solver import TypeContext, check_sat, s_not
from .values import Value

PROVED = "Proved"
PROVED_UP_TO_BOUND = "ProvedUpToBound"
REFUTED = "Refuted"
UNKNOWN = "Unknown"
INSTANCE_FOUND = "InstanceFound"
NO_INSTANCE_UP_TO_BOUND = "NoInstanceUpToBound"


@dataclass
class RegionOutcome:
    region_id: str
    outcome: str  # "proved" | "refuted" | "unknown" | "bound" | "true" | "no-witness"
    reason: Optional[str] = None


@dataclass
class Verdict:
    goal: str
    status: str
    depth: int
    counterexample: Optional[Counterexample] = None
    replay: Optional[ReplayReport] = None
    unknown_reason: Optional[str] = None
    candidate: Optional[Counterexample] = None
    region_id: Optional[str] = None
    outcomes: list[RegionOutcome] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.verdict/1",
            "goal": self.goal,
            "status": self.status,
            "depth": self.depth,
            "counterexample": None if self.counterexample is None else self.counterexample.to_json(),
            "replay": None if self.replay is None else self.replay.to_json(),
            "unknown_reason": self.unknown_reason,
            "candidate": None if self.candidate is None else self.candidate.to_json(),
            "region": self.region_id,
            "regions": {
                "total": len(self.outcomes),
                "proved": sum(1 for o in self.outcomes if o.outcome == "proved"),
                "bound_exhausted": sum(1 for o in self.outcomes if o.outcome == "bound"),
                "unknown": sum(1 for o in self.outcomes if o.outcome == "unknown"),
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


class VerifyError(Exception):
    pass


def _rebuild_args(result: DecompResult, model: SL.Model,
                  types: dict[str, S.TypeDef]) -> list[tuple[str, Value]]:
    return [(name, rebuild_value(name, ty, model, types))
            for name, ty in result.params]


def _model_atoms(model: SL.Model) -> dict[str, Value]:
    return dict(model.atoms)


def _opaque_atom_keys(region: Region, extra: SL.STerm,
                      opaque: set[str]) -> bool:
    terms = list(region.constraints) + [extra]
    for t in terms:
        if SL.opaque_heads(t, opaque):
            return True
    return False


def _replay(program: S.Program, goal: str, args: list[tuple[str, Value]],
            semantics: str, guard: Optional[str]) -> ReplayReport:
    cx = Counterexample(goal, args)
    report = replay_counterexample(program, goal, cx, semantics=semantics)
    if guard and report.replayed:
        try:
            g = eval_call(program, guard, [v for _, v in args])
            if g != V.TRUE:
                return ReplayReport(goal, semantics, True, g, False,
                                    "side condition does not hold on replay")
        except EvalError as e:
            return ReplayReport(goal, semantics, False, None, False, str(e))
    return report


def _attempt_region(program: S.Program, result: DecompResult, region: Region,
                    target_value: bool, options: DecompOptions,
                    opaque: set[str], semantics: str) -> tuple[str, Optional[Counterexample], Optional[ReplayReport], Optional[str]]:
    """Search one region for an input where the goal evaluates to
    target_value.  Returns (outcome, counterexample, replay, reason) where
    outcome is "found" | "closed" | "unknown".
    """
    types = TypeContext(program.types)
    inv = region.invariant
    guard = options.side_condition

    if isinstance(inv, V.BoolV):
        if inv.value != target_value:
            return "closed", None, None, None
        goal_cs = list(region.constraints)
        extra: SL.STerm = SL.TRUE
    else:
        term = D.as_term(inv)
        extra = term if target_value else s_not(term)
        goal_cs = list(region.constraints) + [extra]

    basis_fns = set(options.basis)
    constraints = goal_cs
    last_candidate: Optional[Counterexample] = None
    for _ in range(8):
        r = check_sat(constraints, types, budget=options.solver_budget)
        if r.is_unsat:
            if last_candidate is not None:
                # instance facts were appended; inconclusive, not closed
                return "unknown", last_candidate, None, "replay-mismatch"
            return "closed", None, None, None
        if not r.is_sat:
            return "unknown", None, None, r.reason
        args = _rebuild_args(result, r.model, program.types)
        cx = Counterexample(result.function, args)
        if _opaque_atom_keys(region, extra, opaque - basis_fns):
            # the model interprets declared-only symbols; it cannot be replayed
            return "unknown", cx, None, "opaque-atoms"
        report = _replay(program, result.function, args, semantics, guard)
        if report.confirmed:
            return "found", cx, report, None
        last_candidate = cx
        # the model disagreed with real function semantics on some atom;
        # pin each basis atom to its actual value and try again
        adjusted = False
        for t in goal_cs:
            for atom in SL.atoms_of(t):
                if not isinstance(atom, SL.SApp) or atom.fn not in basis_fns:
                    continue
                try:
                    arg_vals = [
                        SL.eval_sterm(a, r.model.scalars, r.model.ctors, r.model.atoms)
                        for a in atom.args
                    ]
                    actual = eval_call(program, atom.fn, arg_vals)
                except (SL.SolverInternalError, EvalError):
                    return "unknown", cx, None, "replay-error"
                assumed = r.model.atoms.get(SL.key_of(atom))
                if assumed == actual:
                    continue
                adjusted = True
                if isinstance(actual, V.IntV):
                    constraints = constraints + [SL.s_cmp("=", atom, SL.SIntConst(actual.value))]
                elif isinstance(actual, V.RatV):
                    constraints = constraints + [SL.s_cmp("=", atom, SL.SRatConst(actual.value))]
                elif isinstance(actual, V.BoolV):
                    constraints = constraints + [atom if actual.value else s_not(atom)]
                else:
                    return "unknown", cx, None, "replay-error"
        if not adjusted:
            return "unknown", cx, None, "replay-mismatch"
    return "unknown", last_candidate, None, "budget"


def verify_goal(program: S.Program, fn_name: str,
                options: Optional[DecompOptions] = None) -> Verdict:
    """Check whether fn_name returns true on every input, up to the bound."""
    options = options or DecompOptions()
    options.synthesize_samples = False
    result = decompose(program, fn_name, options)
    opaque = {n for n, d in program.symbols.items() if isinstance(d, S.OpaqueDecl)}

    outcomes: list[RegionOutcome] = []
    bounds_hit = False
    unknown_reason: Optional[str] = None
    candidate: Optional[Counterexample] = None

    for region in result.regions:
        if region.kind == "bound_exhausted":
            bounds_hit = True
            outcomes.append(RegionOutcome(region.region_id, "bound"))
            continue
        outcome, cx, report, reason = _attempt_region(
            program, result, region, target_value=False, options=options,
            opaque=opaque, semantics="verify")
        if outcome == "found":
            outcomes.append(RegionOutcome(region.region_id, "refuted"))
            return Verdict(fn_name, REFUTED, options.unroll_depth,
                           counterexample=cx, replay=report,
                           region_id=region.region_id, outcomes=outcomes)
        if outcome == "unknown":
            outcomes.append(RegionOutcome(region.region_id, "unknown", reason))
            if unknown_reason is None:
                unknown_reason = reason
                candidate = cx
            continue
        outcomes.append(RegionOutcome(region.region_id, "proved"))

    if unknown_reason is not None:
        return Verdict(fn_name, UNKNOWN, options.unroll_depth,
                       unknown_reason=unknown_reason, candidate=candidate,
                       outcomes=outcomes)
    if bounds_hit:
        return Verdict(fn_name, PROVED_UP_TO_BOUND, options.unroll_depth,
                       outcomes=outcomes)
    return Verdict(fn_name, PROVED, options.unroll_depth, outcomes=outcomes)


def find_instance(program: S.Program, fn_name: str,
                  options: Optional[DecompOptions] = None) -> Verdict:
    """Search for an input on which fn_name returns true, up to the bound."""
    options = options or DecompOptions()
    options.synthesize_samples = False
    result = decompose(program, fn_name, options)
    opaque = {n for n, d in program.symbols.items() if isinstance(d, S.OpaqueDecl)}

    outcomes: list[RegionOutcome] = []
    unknown_reason: Optional[str] = None
    candidate: Optional[Counterexample] = None

    for region in result.regions:
        if region.kind == "bound_exhausted":
            outcomes.append(RegionOutcome(region.region_id, "bound"))
            continue
        outcome, cx, report, reason = _attempt_region(
            program, result, region, target_value=True, options=options,
            opaque=opaque, semantics="instance")
        if outcome == "found":
            outcomes.append(RegionOutcome(region.region_id, "true"))
            return Verdict(fn_name, INSTANCE_FOUND, options.unroll_depth,
                           counterexample=cx, replay=report,
                           region_id=region.region_id, outcomes=outcomes)
        if outcome == "unknown":
            outcomes.append(RegionOutcome(region.region_id, "unknown", reason))
            if unknown_reason is None:
                unknown_reason = reason
                candidate = cx
            continue
        outcomes.append(RegionOutcome(region.region_id, "no-witness"))

    if unknown_reason is not None:
        return Verdict(fn_name, UNKNOWN, options.unroll_depth,
                       unknown_reason=unknown_reason, candidate=candidate,
                       outcomes=outcomes)
    return Verdict(fn_name, NO_INSTANCE_UP_TO_BOUND, options.unroll_depth,
                   outcomes=outcomes)


def options_for_directive(program: S.Program, directive: S.Directive,
                          unroll_depth: Optional[int] = None) -> DecompOptions:
    """Build decomposition options from a source-level directive."""
    opts = DecompOptions()
    if unroll_depth is not None:
        opts.unroll_depth = unroll_depth
    if directive.assuming:
        opts.side_condition = directive.assuming
    if directive.basis:
        opts.basis = tuple(directive.basis)
    return opts
