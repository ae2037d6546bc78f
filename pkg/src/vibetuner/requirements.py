"""Parsing, validation, and canonical serialization of requirement documents.

A requirements definition document is headed plain text: markdown-style
``#``/``##`` section headings over ``key: value`` bullets and ``[x]``
checkbox lines. Heading synonyms are folded through a fixed alias table so
hand-written documents and the canonical serialization parse identically.

Unrecognized sections are preserved verbatim in ``notes``; required
sections that are absent (or present but empty of anything extractable)
are reported in ``missing_items`` and replaced by documented defaults so
the project manager agent is informed rather than surprised.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from .errors import EmptyDocument, MalformedSection

# Defaults applied when the corresponding section is absent. The rate is
# points per (second x GPU); the peak is GFLOPS for a single GPU.
DEFAULT_POINT_RATE = Decimal("0.007")
DEFAULT_PEAK_GFLOPS_PER_GPU = Decimal("7800")

PM_ASSIGNED = "pm-assigned"

ROLE_NAMES = ("PM", "SE", "PG", "CD")


@dataclass
class Budget:
    min_points: Decimal
    reference_points: Decimal
    max_points: Decimal


@dataclass
class TimeLimits:
    min_minutes: int
    reference_minutes: int
    max_minutes: int


@dataclass
class Accuracy:
    value_type: str = "double"
    error_metric: str = "relative-2-norm"
    tolerance: Decimal | str = PM_ASSIGNED


@dataclass
class Hardware:
    gpus_per_node: int
    peak_gflops_per_gpu: Decimal
    peak_gflops_node: Decimal


@dataclass
class PublishPolicy:
    enabled: bool = False
    anonymize: bool = False


@dataclass
class RequirementSpec:
    project_name: str
    budget: Budget
    point_rate: Decimal
    time_limits: TimeLimits
    agent_roster: dict[str, int]
    forbidden_libraries: list[str]
    accuracy: Accuracy
    hardware: Hardware
    priorities: list[str]
    publish: PublishPolicy
    missing_items: list[str] = field(default_factory=list)
    notes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""


# Canonical section names every document is folded onto. Order fixes the
# order of missing_items and of the serialized output.
REQUIRED_SECTIONS = (
    "Project Information",
    "Performance Goals",
    "Priorities",
    "Hardware",
    "Peak Performance",
    "Budget",
    "Point Rate",
    "Time Limit",
    "Accuracy Requirements",
    "Prohibited Libraries",
    "Agent Configuration",
)

_ALIASES = {
    "project information": "Project Information",
    "performance goals": "Performance Goals",
    "target performance": "Performance Goals",
    "priorities": "Priorities",
    "hardware": "Hardware",
    "available hardware": "Hardware",
    "selected supercomputer": "Hardware",
    "peak performance": "Peak Performance",
    "budget": "Budget",
    "computational resource budget": "Budget",
    "point rate": "Point Rate",
    "rate": "Point Rate",
    "type ii subsystem rate": "Point Rate",
    "time limit": "Time Limit",
    "time limits": "Time Limit",
    "accuracy requirements": "Accuracy Requirements",
    "allowable accuracy": "Accuracy Requirements",
    "computational precision": "Accuracy Requirements",
    "input/output type": "Value Type",
    "value type": "Value Type",
    "prohibited libraries": "Prohibited Libraries",
    "agent configuration": "Agent Configuration",
    "security requirements": "Security Requirements",
    "publication": "Publish",
    "github integration": "Publish",
    "use of cd": "Publish",
    "missing items": "Missing Items",
    "auto-generated information": "Missing Items",
}

_HEADING_RE = re.compile(r"^\s{0,3}(#{1,6})\s+(.*?)\s*$")
_KV_RE = re.compile(
    r"^\s*(?:[*+-]\s*)?(?:\[[ xX]\]\s*)?\**([^:*\[\]]+?)\**\s*:\s*(.+?)\s*$"
)
_CHECKBOX_RE = re.compile(r"^\s*[*+-]\s*\[([ xX])\]\s*(.+?)\s*$")
_BACKTICK_RE = re.compile(r"`([^`]+)`")
_NUMBER_RE = re.compile(r"(-?[\d,]+(?:\.\d+)?)")
_ROSTER_RE = re.compile(r"^(PM|SE|PG|CD)\s*(?:[x×]\s*(\d+))?$", re.IGNORECASE)


def _canonical(heading: str) -> str | None:
    name = heading.strip().strip(":").lower()
    name = re.sub(r"\s*\([^)]*\)\s*$", "", name).strip()
    return _ALIASES.get(name)


def _split_sections(doc: str) -> dict[str, list[str]]:
    """Fold the document into canonical-section -> lines, merging aliases."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in doc.splitlines():
        m = _HEADING_RE.match(line)
        if m:
            canon = _canonical(m.group(2))
            if canon is None:
                canon = f"~{m.group(2).strip()}"  # opaque note bucket
            current = sections.setdefault(canon, [])
            continue
        if current is not None:
            current.append(line)
    return sections


def _number(text: str) -> Decimal:
    m = _NUMBER_RE.search(text)
    if not m:
        raise InvalidOperation(text)
    return Decimal(m.group(1).replace(",", ""))


def _keyed_number(lines: list[str], keys: tuple[str, ...], section: str) -> Decimal | None:
    """First numeric value under any of the given key aliases, or None."""
    for line in lines:
        m = _KV_RE.match(line)
        if not m:
            continue
        key = m.group(1).strip().lower()
        if key in keys:
            try:
                return _number(m.group(2))
            except InvalidOperation:
                raise MalformedSection(section, line.strip())
    return None


def _parse_budget(lines: list[str]) -> Budget | None:
    lo = _keyed_number(lines, ("minimum consumption line", "minimum", "min"), "Budget")
    ref = _keyed_number(lines, ("reference", "ref"), "Budget")
    hi = _keyed_number(lines, ("maximum", "max"), "Budget")
    if lo is None and ref is None and hi is None:
        return None
    if None in (lo, ref, hi):
        raise MalformedSection("Budget", "needs minimum, reference, and maximum lines")
    return Budget(lo, ref, hi)


def _parse_time_limits(lines: list[str]) -> TimeLimits | None:
    lo = _keyed_number(lines, ("minimum", "min"), "Time Limit")
    ref = _keyed_number(lines, ("reference", "ref"), "Time Limit")
    hi = _keyed_number(lines, ("maximum", "max"), "Time Limit")
    if lo is None and ref is None and hi is None:
        return None
    if None in (lo, ref, hi):
        raise MalformedSection("Time Limit", "needs minimum, reference, and maximum lines")
    return TimeLimits(int(lo), int(ref), int(hi))


def _parse_rate(lines: list[str]) -> Decimal | None:
    rate = None
    for line in lines:
        m = _KV_RE.match(line)
        if m and m.group(1).strip().lower() in ("rate", "point rate"):
            try:
                rate = _number(m.group(2))
            except InvalidOperation:
                raise MalformedSection("Point Rate", line.strip())
            break
        # Prose form: "... elapsed time (seconds) x 0.007 x number of GPUs ..."
        m2 = re.search(r"[x×]\s*(\d+\.\d+)\s*[x×]", line)
        if m2:
            rate = Decimal(m2.group(1))
            break
    return rate


def _parse_roster(lines: list[str]) -> dict[str, int] | None:
    roster: dict[str, int] = {}
    saw_any = False
    for raw in lines:
        line = raw.strip().strip("`").strip()
        line = re.sub(r"^[*+-]\s*", "", line).strip("*").strip()
        if not line or line.startswith("```"):
            continue
        if re.match(r"^(PM|SE|PG|CD)\b", line, re.IGNORECASE):
            saw_any = True
            m = _ROSTER_RE.match(line)
            if not m:
                raise MalformedSection("Agent Configuration", raw.strip())
            role = m.group(1).upper()
            count = int(m.group(2)) if m.group(2) else 1
            roster[role] = roster.get(role, 0) + count
    return roster if saw_any else None


def _parse_priorities(lines: list[str]) -> list[str]:
    out = []
    for line in lines:
        m = _CHECKBOX_RE.match(line)
        if m and m.group(1).lower() == "x":
            out.append(m.group(2).strip())
    return out


def _parse_peak(lines: list[str]) -> Decimal | None:
    for line in lines:
        m = re.search(r"([\d,]+(?:\.\d+)?)\s*(GFLOPS|TFLOPS)", line, re.IGNORECASE)
        if m:
            value = Decimal(m.group(1).replace(",", ""))
            if m.group(2).upper() == "TFLOPS":
                value *= 1000
            return value
    if any(_KV_RE.match(ln) for ln in lines):
        raise MalformedSection("Peak Performance", "no GFLOPS/TFLOPS figure found")
    return None


def _parse_gpus_per_node(lines: list[str]) -> int | None:
    for line in lines:
        m = re.search(r"(\d+)\s*GPUs?\s*per\s*node", line, re.IGNORECASE)
        if m:
            return int(m.group(1))
        m = _KV_RE.match(line)
        if m and m.group(1).strip().lower() in ("gpus per node", "gpus"):
            try:
                return int(_number(m.group(2)))
            except InvalidOperation:
                raise MalformedSection("Hardware", line.strip())
    return None


def _parse_forbidden(doc: str, sections: dict[str, list[str]]) -> list[str]:
    """Collect backticked library names from prohibition sentences anywhere,
    plus bullets under an explicit Prohibited Libraries section."""
    found: list[str] = []

    def add(token: str) -> None:
        if token and token not in found:
            found.append(token)

    for line in doc.splitlines():
        if "prohibit" in line.lower():
            for token in _BACKTICK_RE.findall(line):
                add(token.strip())
    for line in sections.get("Prohibited Libraries", []):
        for token in _BACKTICK_RE.findall(line):
            add(token.strip())
        m = re.match(r"^\s*[*+-]\s*([A-Za-z][\w.+-]*)\s*$", line)
        if m:
            add(m.group(1))
    return found


def _parse_accuracy(sections: dict[str, list[str]]) -> tuple[Accuracy, bool]:
    lines = sections.get("Accuracy Requirements", [])
    present = any(ln.strip() for ln in lines)
    acc = Accuracy()
    for line in lines:
        m = _KV_RE.match(line)
        if not m:
            continue
        key = m.group(1).strip().lower()
        value = m.group(2).strip()
        if key == "tolerance":
            if value.lower() == PM_ASSIGNED:
                acc.tolerance = PM_ASSIGNED
            else:
                try:
                    acc.tolerance = Decimal(value)
                except InvalidOperation:
                    raise MalformedSection("Accuracy Requirements", line.strip())
        elif key == "error metric":
            acc.error_metric = value
        elif key == "value type":
            acc.value_type = value
    vt_lines = sections.get("Value Type", [])
    for line in vt_lines:
        m = _CHECKBOX_RE.match(line)
        if m and m.group(1).lower() == "x":
            acc.value_type = m.group(2).split("(")[0].strip()
            break
        m = _KV_RE.match(line)
        if m and m.group(1).strip().lower() == "value type":
            acc.value_type = m.group(2).strip()
            break
    return acc, present


def _parse_publish(sections: dict[str, list[str]]) -> PublishPolicy:
    policy = PublishPolicy()
    for line in sections.get("Publish", []):
        lowered = line.lower()
        m = _CHECKBOX_RE.match(line)
        if m and "enab" in m.group(2).lower():
            policy.enabled = m.group(1).lower() == "x"
        m = _KV_RE.match(line)
        if m and m.group(1).strip().lower() in ("github", "publish"):
            policy.enabled = m.group(2).strip().lower() in ("enabled", "yes", "true")
        if "anonymize" in lowered:
            policy.anonymize = not re.search(r"\banonymize\s*:\s*(no|false)\b", lowered)
    for line in sections.get("Security Requirements", []):
        if "anonymize" in line.lower():
            policy.anonymize = True
    return policy


def parse_requirements(doc: str) -> RequirementSpec:
    """Parse a requirements definition document into a RequirementSpec.

    Raises EmptyDocument for blank input and MalformedSection when a
    recognized section carries garbled values. Absent required sections
    land in ``missing_items`` with documented defaults applied.
    """
    if not doc or not doc.strip():
        raise EmptyDocument("requirements document is empty")

    sections = _split_sections(doc)
    present: set[str] = set()
    notes = {
        name[1:]: "\n".join(ln for ln in lines).strip()
        for name, lines in sections.items()
        if name.startswith("~") and any(ln.strip() for ln in lines)
    }

    project_name = "unnamed-project"
    for line in sections.get("Project Information", []):
        m = _KV_RE.match(line)
        if m and m.group(1).strip().lower() == "project name":
            project_name = m.group(2).strip()
            present.add("Project Information")
            break

    goal_lines = [ln for ln in sections.get("Performance Goals", []) if ln.strip()]
    if goal_lines:
        present.add("Performance Goals")
        notes["Performance Goals"] = "\n".join(ln.strip() for ln in goal_lines)

    priorities = _parse_priorities(sections.get("Priorities", []))
    if priorities:
        present.add("Priorities")

    budget = _parse_budget(sections.get("Budget", []))
    if budget is not None:
        present.add("Budget")
    else:
        budget = Budget(Decimal(0), Decimal(0), Decimal(0))

    rate = _parse_rate(sections.get("Point Rate", []))
    if rate is not None:
        present.add("Point Rate")
    else:
        rate = DEFAULT_POINT_RATE

    limits = _parse_time_limits(sections.get("Time Limit", []))
    if limits is not None:
        present.add("Time Limit")
    else:
        limits = TimeLimits(0, 0, 0)

    gpus = _parse_gpus_per_node(sections.get("Hardware", []))
    if gpus is not None:
        present.add("Hardware")
    else:
        gpus = 1

    peak = _parse_peak(sections.get("Peak Performance", []))
    if peak is not None:
        present.add("Peak Performance")
    else:
        peak = DEFAULT_PEAK_GFLOPS_PER_GPU

    accuracy, acc_present = _parse_accuracy(sections)
    if acc_present:
        present.add("Accuracy Requirements")

    forbidden = _parse_forbidden(doc, sections)
    if forbidden:
        present.add("Prohibited Libraries")

    roster = _parse_roster(sections.get("Agent Configuration", []))
    if roster is not None:
        present.add("Agent Configuration")
    else:
        roster = {}

    missing = [name for name in REQUIRED_SECTIONS if name not in present]

    return RequirementSpec(
        project_name=project_name,
        budget=budget,
        point_rate=rate,
        time_limits=limits,
        agent_roster=roster,
        forbidden_libraries=forbidden,
        accuracy=accuracy,
        hardware=Hardware(gpus, peak, peak * gpus),
        priorities=priorities,
        publish=_parse_publish(sections),
        missing_items=missing,
        notes=notes,
    )


def validate_spec(spec: RequirementSpec, mode: str | None = None) -> list[Violation]:
    """Check internal consistency; returns typed violations, empty when clean.

    ``mode`` is "multi" or "solo"; when omitted it is inferred from the
    roster (exactly one PG and nothing else means solo).
    """
    if mode is None:
        mode = "solo" if spec.agent_roster == {"PG": 1} else "multi"

    out: list[Violation] = []
    b = spec.budget
    if not (b.min_points <= b.reference_points <= b.max_points):
        out.append(Violation("BudgetOrdering",
                             f"{b.min_points} <= {b.reference_points} <= {b.max_points} fails"))
    t = spec.time_limits
    if not (t.min_minutes <= t.reference_minutes <= t.max_minutes):
        out.append(Violation("TimeOrdering",
                             f"{t.min_minutes} <= {t.reference_minutes} <= {t.max_minutes} fails"))
    if spec.point_rate <= 0:
        out.append(Violation("NonPositiveRate", str(spec.point_rate)))
    for role, count in spec.agent_roster.items():
        if count < 0:
            out.append(Violation("NegativeCount", f"{role}: {count}"))
    if spec.hardware.gpus_per_node < 0:
        out.append(Violation("NegativeCount", f"gpus_per_node: {spec.hardware.gpus_per_node}"))
    if mode == "multi" and spec.agent_roster.get("PM", 0) != 1:
        out.append(Violation("MissingManager",
                             f"multi mode needs exactly one PM, roster has {spec.agent_roster.get('PM', 0)}"))
    if isinstance(spec.accuracy.tolerance, Decimal) and spec.accuracy.tolerance <= 0:
        out.append(Violation("NonPositiveTolerance", str(spec.accuracy.tolerance)))
    return out


def serialize_spec(spec: RequirementSpec) -> str:
    """Canonical text form; parse_requirements reads it back identically."""
    lines: list[str] = ["# Requirement Definition", ""]
    lines += ["## Project Information", f"Project Name: {spec.project_name}", ""]
    goals = spec.notes.get("Performance Goals", "")
    lines += ["## Performance Goals"]
    lines += [goals] if goals else ["Target Performance: unspecified"]
    lines += [""]
    lines += ["## Priorities"]
    lines += [f"- [x] {p}" for p in spec.priorities] or ["- [ ] none recorded"]
    lines += [""]
    lines += ["## Hardware", f"GPUs per Node: {spec.hardware.gpus_per_node}", ""]
    lines += ["## Peak Performance",
              f"Per GPU: {spec.hardware.peak_gflops_per_gpu} GFLOPS",
              f"Per Node: {spec.hardware.peak_gflops_node} GFLOPS", ""]
    lines += ["## Budget",
              f"Minimum: {spec.budget.min_points} points",
              f"Reference: {spec.budget.reference_points} points",
              f"Maximum: {spec.budget.max_points} points", ""]
    lines += ["## Point Rate",
              f"Rate: {spec.point_rate} points per second per GPU", ""]
    lines += ["## Time Limit",
              f"Minimum: {spec.time_limits.min_minutes} min",
              f"Reference: {spec.time_limits.reference_minutes} min",
              f"Maximum: {spec.time_limits.max_minutes} min", ""]
    lines += ["## Accuracy Requirements",
              f"Value Type: {spec.accuracy.value_type}",
              f"Error Metric: {spec.accuracy.error_metric}",
              f"Tolerance: {spec.accuracy.tolerance}", ""]
    lines += ["## Prohibited Libraries"]
    if spec.forbidden_libraries:
        quoted = " or ".join(f"`{t}`" for t in spec.forbidden_libraries)
        lines += [f"The use of numerical libraries such as {quoted} is prohibited."]
    else:
        lines += ["None."]
    lines += [""]
    lines += ["## Agent Configuration", "```"]
    for role in ROLE_NAMES:
        count = spec.agent_roster.get(role, 0)
        if count == 1:
            lines.append(role)
        elif count > 1:
            lines.append(f"{role} x {count}")
    lines += ["```", ""]
    lines += ["## Publication",
              f"GitHub: {'enabled' if spec.publish.enabled else 'disabled'}",
              f"Anonymize: {'yes' if spec.publish.anonymize else 'no'}", ""]
    if spec.missing_items:
        lines += ["## Missing Items"]
        lines += [f"- {item}" for item in spec.missing_items]
        lines += [""]
    return "\n".join(lines)


def content_fields(spec: RequirementSpec) -> dict:
    """Recognized content fields only (fixed-point comparison set)."""
    return {
        "project_name": spec.project_name,
        "budget": spec.budget,
        "point_rate": spec.point_rate,
        "time_limits": spec.time_limits,
        "agent_roster": spec.agent_roster,
        "forbidden_libraries": spec.forbidden_libraries,
        "accuracy": spec.accuracy,
        "hardware": spec.hardware,
        "priorities": spec.priorities,
        "publish": spec.publish,
    }
