"""Region-driven test generation.

Every behavioral region of a decomposition becomes one test vector: the
region's synthesized sample is the input, the concrete evaluator supplies
the expected output, and the region's constraints and invariant are kept
as documentation strings.  Regions that cannot be turned into runnable
tests (no sample, or the target leans on opaque symbols) become skipped
stubs so the rendered file still accounts for the full partition.

Rendering is a thin template layer: a template file supplies a header, a
per-type block, a per-test block, and a per-skip block, and vectors are
substituted into "{placeholder}" slots.  A bundled reference template
renders Python in a dataclass + docstring style.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from . import syntax as S
from . import values as V
from .decomp import DecompResult, Region, _program_hash, as_term
from .evaluator import EvalError, eval_call
from .solver import pretty_term
from .values import Value


class TestgenError(Exception):
    pass


# ---------------------------------------------------------------------------
# Vectors

@dataclass
class TestVector:
    name: str
    target: str
    region_id: str
    inputs: tuple[tuple[str, Value], ...]  # parameter order; empty for stubs
    expected: Optional[Value]
    constraints: tuple[str, ...]
    invariant: str
    executable: bool
    skip_reason: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "region": self.region_id,
            "inputs": {n: V.to_json(v) for n, v in self.inputs},
            "order": [n for n, _ in self.inputs],
            "expected": None if self.expected is None else V.to_json(self.expected),
            "constraints": list(self.constraints),
            "invariant": self.invariant,
            "executable": self.executable,
            "skip_reason": self.skip_reason,
        }


def vectors_to_json(vectors: list[TestVector]) -> dict:
    return {
        "schema": "regionforge.testvectors/1",
        "vectors": [v.to_json() for v in vectors],
    }


def vectors_dumps(vectors: list[TestVector]) -> str:
    return json.dumps(vectors_to_json(vectors), sort_keys=True,
                      separators=(",", ":"))


def _invariant_string(region: Region) -> str:
    inv = region.invariant
    if inv is None:
        note = region.note or "bound exhausted"
        return f"(no invariant: {note})"
    if isinstance(inv, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                        V.RecordV, V.VariantV)):
        return V.pretty_value(inv)
    return pretty_term(as_term(inv))


def generate_tests(result: DecompResult, program: S.Program) -> list[TestVector]:
    """One vector per region, in region-id order; the evaluator is the oracle."""
    if result.program_hash != _program_hash(program):
        raise TestgenError(
            "stale artifacts: decomposition was produced from a different "
            "program (hash mismatch)")
    vectors: list[TestVector] = []
    regions = sorted(result.regions, key=lambda r: r.region_id)
    for i, region in enumerate(regions):
        name = f"test_{i + 1}"
        constraints = tuple(region.constraint_strings())
        invariant = _invariant_string(region)
        common = dict(name=name, target=result.function,
                      region_id=region.region_id, constraints=constraints,
                      invariant=invariant)
        if not region.executable:
            vectors.append(TestVector(inputs=(), expected=None,
                                      executable=False,
                                      skip_reason="non-executable (opaque)",
                                      **common))
            continue
        if region.sample is None:
            vectors.append(TestVector(inputs=(), expected=None,
                                      executable=False,
                                      skip_reason="no sample (solver unknown)",
                                      **common))
            continue
        inputs = tuple((n, region.sample[n]) for n, _ in result.params)
        try:
            expected = eval_call(program, result.function,
                                 [v for _, v in inputs])
        except EvalError as e:
            raise TestgenError(
                f"region {region.region_id}: sample does not evaluate: {e}")
        inv = region.invariant
        if isinstance(inv, (V.IntV, V.RatV, V.BoolV, V.TupleV, V.ListV,
                            V.RecordV, V.VariantV)) and inv != expected:
            raise TestgenError(
                f"region {region.region_id}: evaluator result "
                f"{V.pretty_value(expected)} disagrees with region invariant "
                f"{V.pretty_value(inv)}")
        vectors.append(TestVector(inputs=inputs, expected=expected,
                                  executable=True, **common))
    return vectors


# ---------------------------------------------------------------------------
# Templates

_SECTION_RE = re.compile(r"^== *(\w+) *==$")
_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")

_ALLOWED = {
    "header": {"function"},
    "type": {"typedef"},
    "test": {"name", "docstring", "call", "expected"},
    "skip": {"name", "docstring", "reason"},
}
_REQUIRED = {
    "header": set(),
    "type": {"typedef"},
    "test": {"name", "docstring", "call", "expected"},
    "skip": {"name", "reason"},
}


@dataclass
class TemplateSpec:
    header: str
    type_block: str
    test_block: str
    skip_block: str

    @staticmethod
    def parse(text: str) -> "TemplateSpec":
        sections: dict[str, list[str]] = {}
        current: Optional[str] = None
        for line in text.splitlines():
            m = _SECTION_RE.match(line.strip())
            if m:
                current = m.group(1)
                if current not in _ALLOWED:
                    raise TestgenError(f"unknown template section: {current}")
                if current in sections:
                    raise TestgenError(f"duplicate template section: {current}")
                sections[current] = []
                continue
            if current is None:
                if line.strip():
                    raise TestgenError("template text before first section marker")
                continue
            sections[current].append(line)
        if "test" not in sections:
            raise TestgenError("template has no test section")
        blocks = {k: "\n".join(v).strip("\n") for k, v in sections.items()}
        for sec, body in blocks.items():
            used = set(_PLACEHOLDER_RE.findall(body))
            for extra in sorted(used - _ALLOWED[sec]):
                raise TestgenError(f"unknown placeholder: {extra}")
            for missing in sorted(_REQUIRED[sec] - used):
                raise TestgenError(f"missing placeholder: {missing}")
        return TemplateSpec(header=blocks.get("header", ""),
                            type_block=blocks.get("type", ""),
                            test_block=blocks["test"],
                            skip_block=blocks.get("skip", ""))

    @staticmethod
    def load(path) -> "TemplateSpec":
        with open(path, encoding="utf-8") as f:
            return TemplateSpec.parse(f.read())

    @staticmethod
    def bundled() -> "TemplateSpec":
        text = (resources.files("regionforge.corpus") / "templates"
                / "python_tests.tmpl").read_text(encoding="utf-8")
        return TemplateSpec.parse(text)


def _subst(block: str, mapping: dict[str, str]) -> str:
    out = block
    for key, val in mapping.items():
        out = out.replace("{" + key + "}", val)
    return out


# ---------------------------------------------------------------------------
# Python rendering helpers (used by the bundled template)

_PY_BASE = {S.IntTy: "int", S.RatTy: "Fraction", S.BoolTy: "bool"}


def _py_ty(ty: S.Ty) -> str:
    if isinstance(ty, (S.IntTy, S.RatTy, S.BoolTy)):
        return _PY_BASE[type(ty)]
    if isinstance(ty, S.NamedTy):
        return ty.name
    if isinstance(ty, S.ListTy):
        return "list"
    if isinstance(ty, S.TupleTy):
        return "tuple"
    raise TestgenError(f"unsupported type: {ty}")


def py_literal(v: Value) -> str:
    """A Python expression reconstructing the value under generated types."""
    if isinstance(v, V.IntV):
        return str(v.value)
    if isinstance(v, V.RatV):
        f = v.value
        if f.denominator == 1:
            return f"Fraction({f.numerator})"
        return f"Fraction({f.numerator}, {f.denominator})"
    if isinstance(v, V.BoolV):
        return "True" if v.value else "False"
    if isinstance(v, V.TupleV):
        inner = ", ".join(py_literal(i) for i in v.items)
        return f"({inner},)" if len(v.items) == 1 else f"({inner})"
    if isinstance(v, V.ListV):
        return "[" + ", ".join(py_literal(i) for i in v.items) + "]"
    if isinstance(v, V.RecordV):
        return f"{v.type_name}(" + ", ".join(
            py_literal(val) for _, val in v.fields) + ")"
    if isinstance(v, V.VariantV):
        return f"{v.ctor}(" + ", ".join(py_literal(a) for a in v.args) + ")"
    raise TestgenError(f"not a value: {v!r}")


def _typedef_text(td: S.TypeDef) -> str:
    if td.is_record:
        lines = ["@dataclass", f"class {td.name}:"]
        for fname, fty in td.record_fields:
            lines.append(f"    {fname}: {_py_ty(fty)}")
        return "\n".join(lines)
    blocks = []
    for ctor in td.ctors:
        lines = ["@dataclass", f"class {ctor.name}:"]
        if not ctor.arg_tys:
            lines.append("    pass")
        else:
            for i, aty in enumerate(ctor.arg_tys):
                lines.append(f"    arg_{i}: {_py_ty(aty)}")
        blocks.append("\n".join(lines))
    alias = f"{td.name} = " + " | ".join(c.name for c in td.ctors)
    return "\n\n".join(blocks + [alias])


def _used_types(vectors: list[TestVector], program: S.Program) -> list[S.TypeDef]:
    """Type definitions reachable from vector inputs, in declaration order."""
    names: set[str] = set()

    def walk_ty(ty: S.Ty) -> None:
        if isinstance(ty, S.NamedTy) and ty.name not in names:
            td = (program.types or {}).get(ty.name)
            if td is None:
                return
            names.add(ty.name)
            if td.is_record:
                for _, fty in td.record_fields:
                    walk_ty(fty)
            else:
                for ctor in td.ctors:
                    for aty in ctor.arg_tys:
                        walk_ty(aty)
        elif isinstance(ty, S.ListTy):
            walk_ty(ty.elem)
        elif isinstance(ty, S.TupleTy):
            for item in ty.items:
                walk_ty(item)

    def walk_value(v: Value) -> None:
        if isinstance(v, V.RecordV):
            walk_ty(S.NamedTy(v.type_name))
            for _, val in v.fields:
                walk_value(val)
        elif isinstance(v, V.VariantV):
            td = (program.ctor_index or {}).get(v.ctor)
            if td is not None:
                walk_ty(S.NamedTy(td.name))
            for a in v.args:
                walk_value(a)
        elif isinstance(v, (V.ListV, V.TupleV)):
            for item in v.items:
                walk_value(item)

    for vec in vectors:
        for _, val in vec.inputs:
            walk_value(val)
        if vec.expected is not None:
            walk_value(vec.expected)
    ordered = []
    for d in program.decls:
        if isinstance(d, S.TypeDef) and d.name in names:
            ordered.append(d)
    return ordered


def _docstring(vec: TestVector) -> str:
    lines = [vec.name, "", f"    - invariant: {vec.invariant}"]
    if vec.constraints:
        lines.append("    - constraints:")
        for c in vec.constraints:
            lines.append(f"        - {c}")
    else:
        lines.append("    - constraints: (none)")
    return "\n".join(lines)


def _call_text(vec: TestVector) -> str:
    args = ", ".join(f"{n}={py_literal(v)}" for n, v in vec.inputs)
    return f"{vec.target}({args})"


def render_tests(vectors: list[TestVector], template: TemplateSpec,
                 program: Optional[S.Program] = None) -> str:
    """Deterministic source text: header, type blocks, one block per vector."""
    function = vectors[0].target if vectors else ""
    parts = []
    if template.header:
        parts.append(_subst(template.header, {"function": function}))
    if program is not None and template.type_block and vectors:
        for td in _used_types(vectors, program):
            parts.append(_subst(template.type_block,
                                {"typedef": _typedef_text(td)}))
    for vec in vectors:
        mapping = {"name": vec.name, "docstring": _docstring(vec)}
        if vec.executable:
            mapping["call"] = _call_text(vec)
            mapping["expected"] = py_literal(vec.expected)
            parts.append(_subst(template.test_block, mapping))
        else:
            mapping["reason"] = vec.skip_reason or "skipped"
            parts.append(_subst(template.skip_block, mapping))
    return "\n\n".join(p for p in parts if p) + "\n"
