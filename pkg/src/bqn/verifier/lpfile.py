"""LP text export of a constraint system, plus a small reference parser.

The writer emits a feasibility program (`Minimize obj: 0`) with one
constraint per row, explicit bounds for every continuous variable, and
a Binary section for phase / indicator bits. Output is deterministic
byte for byte: fixed ordering, LF endings, repr() float rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bqn.verifier.encode import ConstraintSystem
from bqn.verifier.simplex import SENSE_EQ, SENSE_GE, SENSE_LE

_SENSE_TOKEN = {SENSE_LE: "<=", SENSE_GE: ">=", SENSE_EQ: "="}


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def render_lp(system: ConstraintSystem) -> str:
    lines = ["Minimize", " obj: 0", "Subject To"]
    for r in range(system.num_rows):
        row = system.a[r]
        terms = []
        for j in np.flatnonzero(row):
            coef = row[j]
            sign = "+" if coef >= 0 else "-"
            terms.append(f"{sign} {_num(abs(coef))} {system.names[j]}")
        body = " ".join(terms) if terms else "+ 0 " + system.names[0]
        sense = _SENSE_TOKEN[int(system.sense[r])]
        lines.append(f" c{r}: {body} {sense} {_num(system.rhs[r])}")
    lines.append("Bounds")
    for j in range(system.num_vars):
        if system.is_binary[j]:
            continue
        lines.append(f" {_num(system.lo[j])} <= {system.names[j]} <= {_num(system.up[j])}")
    binaries = [system.names[j] for j in system.binary_var_indices()]
    if binaries:
        lines.append("Binary")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(system: ConstraintSystem, path: str) -> None:
    """Write the LP file; raises OSError on unwritable paths."""
    text = render_lp(system)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


@dataclass
class ParsedLP:
    constraints: list[tuple[str, dict[str, float], str, float]] = field(
        default_factory=list
    )
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    binaries: list[str] = field(default_factory=list)

    @property
    def variable_names(self) -> set[str]:
        names = set(self.bounds) | set(self.binaries)
        for _, terms, _, _ in self.constraints:
            names.update(terms)
        return names


def parse_lp(text: str) -> ParsedLP:
    """Reference parser for the exported subset of the LP format."""
    parsed = ParsedLP()
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        lower = line.lower()
        if lower in ("minimize", "maximize", "subject to", "bounds", "binary", "end"):
            section = lower
            continue
        if section == "minimize":
            continue
        if section == "subject to":
            name, _, body = line.partition(":")
            tokens = body.split()
            sense_pos = [
                i for i, t in enumerate(tokens) if t in ("<=", ">=", "=")
            ]
            if len(sense_pos) != 1:
                raise ValueError(f"bad constraint line {raw!r}")
            k = sense_pos[0]
            sense = tokens[k]
            rhs = float(tokens[k + 1])
            terms: dict[str, float] = {}
            i = 0
            while i < k:
                sign = tokens[i]
                if sign not in ("+", "-"):
                    raise ValueError(f"bad term sign in {raw!r}")
                coef = float(tokens[i + 1])
                var = tokens[i + 2]
                terms[var] = terms.get(var, 0.0) + (coef if sign == "+" else -coef)
                i += 3
            parsed.constraints.append((name.strip(), terms, sense, rhs))
        elif section == "bounds":
            tokens = line.split()
            if len(tokens) != 5 or tokens[1] != "<=" or tokens[3] != "<=":
                raise ValueError(f"bad bounds line {raw!r}")
            parsed.bounds[tokens[2]] = (float(tokens[0]), float(tokens[4]))
        elif section == "binary":
            parsed.binaries.append(line)
    return parsed
