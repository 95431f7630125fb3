"""Model/study configuration: a small brace-nested key-value text format.

The grammar is documented in ``config_schema.txt`` (shipped with the
package).  Sections nest with braces, assignments are ``name = value``,
values are scalars or bracketed lists, and complex scalars use the
explicit ``a+bi`` form (``1+0i``, ``-0.5-2e-3i``, ``2i``).  ``#`` starts
a comment.  Parse and validation errors carry line numbers and field
paths.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import numpy as np

from spinqds.lattice import (
    DEFAULT_DIM_CAP,
    ShellFamily,
    Site,
    embed_block,
    make_shell_family,
    make_window,
    shell_sites,
)

FLAVORS = ("gns_form", "algebra_form")
STUDY_TYPES = ("convergence", "compatibility", "cp_sweep", "dual_check", "ito_check")


class ConfigError(ValueError):
    """Schema or syntax violation, annotated with line and field path."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if path:
            parts.append(path)
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(r"[{}\[\]=,]|[^\s{}\[\]=,#]+")
_INT_RE = re.compile(r"[+-]?\d+\Z")
_FLOAT_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?\Z")


@dataclass
class _Token:
    text: str
    line: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for match in _TOKEN_RE.finditer(line):
            tokens.append(_Token(match.group(), lineno))
    return tokens


def _parse_complex(atom: str, line: int) -> complex:
    body = atom[:-1]
    if not body:
        raise ConfigError(f"malformed complex literal {atom!r}", line)
    split = None
    for pos in range(len(body) - 1, 0, -1):
        if body[pos] in "+-" and body[pos - 1] not in "eE":
            split = pos
            break
    if split is None:
        real_part, imag_part = "0", body
    else:
        real_part, imag_part = body[:split], body[split:]
    try:
        return complex(float(real_part), float(imag_part))
    except ValueError:
        raise ConfigError(f"malformed complex literal {atom!r}", line) from None


def _classify(atom: str, line: int) -> Any:
    if atom == "true":
        return True
    if atom == "false":
        return False
    if _INT_RE.match(atom):
        return int(atom)
    if _FLOAT_RE.match(atom):
        return float(atom)
    if atom.endswith("i") and len(atom) > 1 and atom[0] in "+-.0123456789":
        return _parse_complex(atom, line)
    return atom  # bareword string


@dataclass
class ConfigNode:
    """Parsed section: nested sections plus scalar/list assignments."""

    name: str
    line: int
    sections: list["ConfigNode"] = field(default_factory=list)
    values: dict[str, tuple[Any, int]] = field(default_factory=dict)

    def subsections(self, name: str) -> list["ConfigNode"]:
        return [s for s in self.sections if s.name == name]

    def keys(self) -> set[str]:
        return set(self.values) | {s.name for s in self.sections}


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1].line if self.tokens else 1
            raise ConfigError("unexpected end of input", last)
        self.pos += 1
        return tok

    def parse_file(self) -> ConfigNode:
        root = ConfigNode(name="", line=0)
        while self.peek() is not None:
            self.parse_entry(root)
        return root

    def parse_entry(self, parent: ConfigNode) -> None:
        name_tok = self.next()
        if name_tok.text in "{}[]=,":
            raise ConfigError(f"expected a name, got {name_tok.text!r}", name_tok.line)
        sep = self.next()
        if sep.text == "{":
            node = ConfigNode(name=name_tok.text, line=name_tok.line)
            while True:
                tok = self.peek()
                if tok is None:
                    raise ConfigError(f"unclosed section {name_tok.text!r}", name_tok.line)
                if tok.text == "}":
                    self.next()
                    break
                self.parse_entry(node)
            parent.sections.append(node)
        elif sep.text == "=":
            if name_tok.text in parent.values:
                raise ConfigError(f"duplicate key {name_tok.text!r}", name_tok.line)
            parent.values[name_tok.text] = (self.parse_value(), name_tok.line)
        else:
            raise ConfigError(
                f"expected '{{' or '=' after {name_tok.text!r}, got {sep.text!r}", sep.line)

    def parse_value(self) -> Any:
        tok = self.next()
        if tok.text == "[":
            out = []
            while True:
                nxt = self.peek()
                if nxt is None:
                    raise ConfigError("unclosed list", tok.line)
                if nxt.text == "]":
                    self.next()
                    return out
                out.append(self.parse_value())
                nxt = self.peek()
                if nxt is not None and nxt.text == ",":
                    self.next()
        if tok.text in "{}]=,":
            raise ConfigError(f"expected a value, got {tok.text!r}", tok.line)
        return _classify(tok.text, tok.line)


def parse_config_text(text: str) -> ConfigNode:
    """Parse the raw config grammar without schema validation."""
    return _Parser(_tokenize(text)).parse_file()


# ---------------------------------------------------------------------------
# Schema


@dataclass(frozen=True)
class ShellSpec:
    level: int
    sites: tuple[Site, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class StudySpec:
    kind: str
    t_final: float
    step_counts: tuple[int, ...]
    times: tuple[float, ...]
    levels: tuple[int, ...]
    observables: int
    negative_control: bool


@dataclass(frozen=True)
class ModelSpec:
    local_dim: int
    lattice_dim: int
    flavor: str
    shells: tuple[ShellSpec, ...]
    study: StudySpec


_REQUIRED = object()


def _expect(node: ConfigNode, key: str, kind: type, path: str, default=_REQUIRED):
    if key not in node.values:
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"missing required key {key!r}", node.line, path)
    value, line = node.values[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{key!r} must be an integer", line, f"{path}.{key}")
    if not isinstance(value, kind):
        raise ConfigError(
            f"{key!r} must be of type {kind.__name__}, got {type(value).__name__}",
            line, f"{path}.{key}")
    return value


def _int_list(node: ConfigNode, key: str, path: str, default=None) -> tuple[int, ...]:
    if key not in node.values:
        if default is not None:
            return tuple(default)
        raise ConfigError(f"missing required key {key!r}", node.line, path)
    value, line = node.values[key]
    if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{key!r} must be a list of integers", line, f"{path}.{key}")
    return tuple(value)


def _float_list(node: ConfigNode, key: str, path: str, default=None) -> tuple[float, ...]:
    if key not in node.values:
        if default is not None:
            return tuple(default)
        raise ConfigError(f"missing required key {key!r}", node.line, path)
    value, line = node.values[key]
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{key!r} must be a list of numbers", line, f"{path}.{key}")
    return tuple(float(v) for v in value)


def _check_keys(node: ConfigNode, allowed: set[str], path: str) -> None:
    unknown = node.keys() - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", node.line, path)


def _parse_matrix(raw, line: int, path: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ConfigError("matrix must be a list of rows", line, path)
    rows = []
    for r, row in enumerate(raw):
        out_row = []
        for c, cell in enumerate(row):
            if isinstance(cell, bool) or not isinstance(cell, (int, float, complex)):
                raise ConfigError(f"entry ({r},{c}) is not a number", line, path)
            out_row.append(complex(cell))
        rows.append(out_row)
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(
            f"matrix must be square, got {len(rows)} rows of widths "
            f"{sorted({len(r) for r in rows})}", line, path)
    return np.array(rows, dtype=np.complex128)


def _parse_shell(node: ConfigNode, index: int, local_dim: int, lattice_dim: int) -> ShellSpec:
    path = f"model.shell[{index}]"
    _check_keys(node, {"level", "sites", "matrix"}, path)
    level = _expect(node, "level", int, path)
    if level < 0:
        raise ConfigError("level must be >= 0", node.line, f"{path}.level")
    raw_sites, sites_line = node.values.get("sites", (None, node.line))
    if not isinstance(raw_sites, list) or not raw_sites:
        raise ConfigError("sites must be a non-empty list of site coordinate lists",
                          sites_line, f"{path}.sites")
    sites: list[Site] = []
    for s in raw_sites:
        if not isinstance(s, list) or len(s) != lattice_dim or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in s):
            raise ConfigError(f"site {s!r} is not a list of {lattice_dim} integers",
                              sites_line, f"{path}.sites")
        sites.append(tuple(s))
    if len(set(sites)) != len(sites):
        raise ConfigError("duplicate sites", sites_line, f"{path}.sites")
    allowed = set(shell_sites(level, lattice_dim))
    stray = [s for s in sites if s not in allowed]
    if stray:
        raise ConfigError(
            f"sites {stray} are not on shell {level} "
            f"(allowed: {sorted(allowed)})", sites_line, f"{path}.sites")
    raw_matrix, matrix_line = node.values.get("matrix", (None, node.line))
    matrix = _parse_matrix(raw_matrix, matrix_line, f"{path}.matrix")
    want = local_dim ** len(sites)
    if matrix.shape != (want, want):
        raise ConfigError(
            f"matrix side {matrix.shape[0]} does not match {len(sites)} site(s) of "
            f"local dim {local_dim} (expected {want})", matrix_line, f"{path}.matrix")
    return ShellSpec(level=level, sites=tuple(sites), matrix=matrix)


def _is_geometric(counts: tuple[int, ...]) -> bool:
    if len(counts) < 2:
        return False
    return all(counts[k + 1] * counts[0] == counts[k] * counts[1]
               for k in range(len(counts) - 1)) and counts[1] > counts[0]


def _parse_study(node: ConfigNode) -> StudySpec:
    path = "study"
    _check_keys(node, {"type", "t_final", "step_counts", "times", "levels",
                       "observables", "negative_control"}, path)
    kind = _expect(node, "type", str, path)
    if kind not in STUDY_TYPES:
        raise ConfigError(f"type must be one of {STUDY_TYPES}, got {kind!r}",
                          node.line, f"{path}.type")
    t_final = _expect(node, "t_final", float, path, default=1.0)
    if t_final <= 0:
        raise ConfigError("t_final must be positive", node.line, f"{path}.t_final")
    step_counts = _int_list(node, "step_counts", path, default=(256,))
    times = _float_list(node, "times", path, default=(0.1, 0.3, 1.0))
    levels = _int_list(node, "levels", path, default=())
    observables = _expect(node, "observables", int, path, default=3)
    negative_control = _expect(node, "negative_control", bool, path, default=False)
    if any(k < 1 for k in step_counts):
        raise ConfigError("step_counts must be positive", node.line, f"{path}.step_counts")
    if observables < 1:
        raise ConfigError("observables must be >= 1", node.line, f"{path}.observables")
    if kind == "convergence":
        if len(step_counts) < 3 or not _is_geometric(step_counts):
            raise ConfigError(
                "convergence studies need >= 3 step counts in increasing geometric "
                f"progression, got {list(step_counts)}", node.line, f"{path}.step_counts")
    if kind == "compatibility":
        if len(levels) < 2 or sorted(set(levels)) != list(levels):
            raise ConfigError(
                f"compatibility studies need >= 2 strictly increasing levels, got "
                f"{list(levels)}", node.line, f"{path}.levels")
    if kind == "cp_sweep" and (not times or any(t < 0 for t in times)):
        raise ConfigError("cp_sweep needs a list of non-negative times",
                          node.line, f"{path}.times")
    return StudySpec(kind=kind, t_final=t_final, step_counts=step_counts, times=times,
                     levels=levels, observables=observables,
                     negative_control=negative_control)


def parse_model(text: str) -> ModelSpec:
    """Parse and validate a config document into a :class:`ModelSpec`."""
    root = parse_config_text(text)
    if root.values:
        key = next(iter(root.values))
        raise ConfigError(f"top level only holds sections, found key {key!r}",
                          root.values[key][1])
    models = root.subsections("model")
    studies = root.subsections("study")
    extra = [s.name for s in root.sections if s.name not in ("model", "study")]
    if extra:
        raise ConfigError(f"unknown top-level sections {extra}", root.sections[0].line)
    if len(models) != 1:
        raise ConfigError(f"expected exactly one model section, found {len(models)}", 1)
    if len(studies) != 1:
        raise ConfigError(f"expected exactly one study section, found {len(studies)}", 1)

    model = models[0]
    _check_keys(model, {"local_dim", "lattice_dim", "flavor", "shell"}, "model")
    local_dim = _expect(model, "local_dim", int, "model", default=2)
    lattice_dim = _expect(model, "lattice_dim", int, "model", default=1)
    if local_dim < 2:
        raise ConfigError("local_dim must be >= 2", model.line, "model.local_dim")
    if lattice_dim < 1:
        raise ConfigError("lattice_dim must be >= 1", model.line, "model.lattice_dim")
    flavor = _expect(model, "flavor", str, "model", default="algebra_form")
    if flavor not in FLAVORS:
        raise ConfigError(f"flavor must be one of {FLAVORS}, got {flavor!r}",
                          model.line, "model.flavor")
    shells = tuple(_parse_shell(node, idx, local_dim, lattice_dim)
                   for idx, node in enumerate(model.subsections("shell")))
    if not shells:
        raise ConfigError("at least one shell is required", model.line, "model")
    if len({s.level for s in shells}) != len(shells):
        raise ConfigError("duplicate shell levels", model.line, "model")

    study = _parse_study(studies[0])
    spec = ModelSpec(local_dim=local_dim, lattice_dim=lattice_dim, flavor=flavor,
                     shells=shells, study=study)
    max_level = max(s.level for s in shells)
    if study.kind == "compatibility" and study.levels and max(study.levels) > max_level:
        raise ConfigError(
            f"study levels {list(study.levels)} exceed the largest shell level "
            f"{max_level}", studies[0].line, "study.levels")
    return spec


def load_model(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_model(handle.read())


def build_shell_family(spec: ModelSpec, cap: int | None = DEFAULT_DIM_CAP) -> ShellFamily:
    """Realise the configured shells as operators on their level windows."""
    shells = []
    for shell in spec.shells:
        window = make_window(shell.level, spec.lattice_dim, spec.local_dim, cap)
        weight = embed_block(shell.matrix, shell.sites, window, spec.local_dim)
        shells.append((shell.level, weight))
    return make_shell_family(shells, local_dim=spec.local_dim, dim=spec.lattice_dim)


def schema_text() -> str:
    """The shipped schema document."""
    return resources.files("spinqds").joinpath("config_schema.txt").read_text("utf-8")
