"""Bundled models and fixtures with their expected analysis artifacts.

Each entry names a source file (or fixture, or project tree) plus the
artifacts the analyses are expected to produce on it: admission level,
region counts, verdict kinds, scores.  The expectations here are the
single source the test suite asserts against, so a drift in any engine
shows up as a corpus failure rather than a silently changed artifact.

Directive expectations are listed in file order.  ``depth`` overrides the
default unroll depth for that directive; deep-recursion goals pin small
depths to keep runtimes bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class DirectiveExpectation:
    kind: str  # "verify" | "instance" | "decompose"
    target: str
    depth: Optional[int] = None
    status: Optional[str] = None  # verdict status, for verify/instance
    regions: Optional[int] = None  # region count, for decompose
    exhaustive: Optional[bool] = None


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    path: Path
    kind: str  # "model" | "project" | "fixture"
    admission: Optional[str] = None
    directives: tuple[DirectiveExpectation, ...] = ()
    expected: dict = field(default_factory=dict)


def corpus_root() -> Path:
    return Path(str(resources.files("regionforge.corpus")))


def load_corpus() -> list[CorpusEntry]:
    root = corpus_root()
    return [
        CorpusEntry(
            id="discount",
            path=root / "discount.mml",
            kind="model",
            admission="AdmittedTransparent",
            directives=(
                DirectiveExpectation("decompose", "discount",
                                     regions=4, exhaustive=True),
                DirectiveExpectation("decompose", "discount",
                                     regions=2, exhaustive=True),
            ),
        ),
        CorpusEntry(
            id="gtt",
            path=root / "gtt.mml",
            kind="model",
            admission="AdmittedTransparent",
            directives=(
                DirectiveExpectation("verify", "no_conflict",
                                     depth=2, status="Refuted"),
                DirectiveExpectation("decompose", "tick", regions=24,
                                     exhaustive=True),
            ),
            # The printed conflict witness: one auction already scheduled to
            # uncross at 2700 holding an order that expires at 2700, a market
            # order waiting, extension 1, two clock ticks.
            expected={
                "witness": {
                    "time": 2699, "uncross_at": 2700, "expires_at": 2700,
                    "extension": 1, "call_duration": 100, "interval": 100,
                    "msgs": ["Tick", "Tick"],
                },
            },
        ),
        CorpusEntry(
            id="netting",
            path=root / "netting.mml",
            kind="model",
            admission="AdmittedTransparent",
            directives=(
                DirectiveExpectation("verify", "vg_zero_sum",
                                     depth=4, status="ProvedUpToBound"),
                DirectiveExpectation("verify", "vg_efficiency_one",
                                     status="Refuted"),
                DirectiveExpectation("verify", "vg_efficiency_one_validated",
                                     status="Proved"),
            ),
            # Amounts are exact ints; the floating-point drift this model
            # guards against in production systems cannot occur here, so the
            # only efficiency witnesses are genuinely negative amounts.
            expected={"efficiency_witness": "amount < 0"},
        ),
        CorpusEntry(
            id="ordering",
            path=root / "ordering.mml",
            kind="model",
            admission="AdmittedWithOpaqueness",
            directives=(
                DirectiveExpectation("verify", "rank_transitivity",
                                     status="Proved"),
                DirectiveExpectation("verify", "boosted_still_higher",
                                     status="Proved"),
                DirectiveExpectation("instance", "order_higher_ranked",
                                     status="InstanceFound"),
                DirectiveExpectation("decompose", "order_higher_ranked",
                                     regions=1, exhaustive=True),
            ),
        ),
        CorpusEntry(
            id="example_project",
            path=root / "example_project",
            kind="project",
            expected={
                "statuses": {
                    "utils/math_ops.mml": "AdmittedTransparent",
                    "utils/helpers.mml": "AdmittedTransparent",
                    "main.mml": "AdmittedTransparent",
                    "models/order.mml": "AdmittedTransparent",
                    "reports/summary.mml": "AdmittedTransparent",
                },
                "edges": {
                    "utils/helpers.mml": ["utils/math_ops.mml"],
                    "main.mml": ["utils/helpers.mml"],
                    "reports/summary.mml": ["models/order.mml"],
                },
            },
        ),
        CorpusEntry(
            id="q1_state_space",
            path=root / "fixtures" / "q1_state_space.json",
            kind="fixture",
            expected={"rows": 5, "metric": "StateSpace", "truth": 117},
        ),
        CorpusEntry(
            id="radar",
            path=root / "fixtures" / "radar.json",
            kind="fixture",
            expected={
                "overall": {
                    "anthropic/claude-opus-4.5": "0.601",
                    "openai/gpt-5.2": "0.589",
                    "anthropic/claude-sonnet-4.5": "0.576",
                    "x-ai/grok-code-fast-1": "0.534",
                    "google/gemini-3-pro-preview": "0.532",
                },
                "tolerance": "0.001",
            },
        ),
    ]


def corpus_entry(entry_id: str) -> CorpusEntry:
    for entry in load_corpus():
        if entry.id == entry_id:
            return entry
    raise KeyError(f"no corpus entry {entry_id!r}")
