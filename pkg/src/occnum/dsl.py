"""Parser and canonical serializer for ``.occ`` model files.

Line-oriented grammar, ``#`` starts a comment::

    model <ident>
    mode <ident>
    omega <mode> <real>
    jump <real> * <factor> {<factor>}

    factor := create(<mode>[,<int>]) | destroy(<mode>[,<int>])

The jump coefficient is the monomial coefficient ``lam``; the induced rate is
``2 lam^2`` times the matrix-element factor.
"""

from __future__ import annotations

import re

from .model import CREATE, DESTROY, Factor, JumpOperator, ModelError, ModelSpec, validate

FORMAT_HEADER = (
    "# occnum model file\n"
    "# jump <lam> * <factors>: lam is the monomial coefficient; rate = 2 lam^2 |<n+d|R|n>|^2\n"
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<real>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[*(),])
    """,
    re.VERBOSE,
)
_INT = re.compile(r"\d+")


class ParseError(ModelError):
    """Syntax or semantic error located at ``line``:``column`` (both 1-based)."""

    def __init__(self, message, line, column, errors=()):
        super().__init__(f"line {line}, column {column}: {message}", errors or [message])
        self.line = line
        self.column = column


def _tokenize(text, lineno):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _Line:
    def __init__(self, tokens, lineno, length):
        self.tokens = tokens
        self.i = 0
        self.lineno = lineno
        self.end_col = length + 1

    def error(self, message, col=None):
        if col is None:
            col = self.tokens[self.i][2] if self.i < len(self.tokens) else self.end_col
        return ParseError(message, self.lineno, col)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, kind, value=None, what=None):
        tok = self.peek()
        if tok is None or tok[0] != kind or (value is not None and tok[1] != value):
            want = what or (repr(value) if value is not None else kind)
            found = "end of line" if tok is None else repr(tok[1])
            raise self.error(f"expected {want}, found {found}")
        self.i += 1
        return tok

    def done(self):
        if self.i < len(self.tokens):
            raise self.error(f"unexpected {self.tokens[self.i][1]!r}")


def parse_model(text: str) -> ModelSpec:
    """Parse ``.occ`` text into a validated :class:`ModelSpec`."""
    name = None
    modes: list[str] = []
    omegas: dict[int, float] = {}
    jumps: list[JumpOperator] = []
    jump_lines: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        tokens = _tokenize(body, lineno)
        if not tokens:
            continue
        ln = _Line(tokens, lineno, len(body))
        kw = ln.take("ident", what="keyword")[1]
        if kw == "model":
            if name is not None:
                raise ln.error("duplicate model declaration", tokens[0][2])
            name = ln.take("ident", what="model name")[1]
        elif kw == "mode":
            _, mode, col = ln.take("ident", what="mode name")
            if mode in modes:
                raise ln.error(f"duplicate mode {mode!r}", col)
            modes.append(mode)
        elif kw == "omega":
            idx = _mode_ref(ln, modes)
            omegas[idx] = float(ln.take("real", what="frequency")[1])
        elif kw == "jump":
            _, value, col = ln.take("real", what="coefficient")
            coefficient = float(value)
            if coefficient <= 0:
                raise ln.error("non-positive coefficient", col)
            ln.take("punct", "*")
            factors = [_factor(ln, modes)]
            while ln.peek() is not None:
                factors.append(_factor(ln, modes))
            jumps.append(JumpOperator(coefficient, tuple(factors)))
            jump_lines.append(lineno)
        else:
            raise ln.error(f"unknown keyword {kw!r}", tokens[0][2])
        ln.done()

    freqs = None
    if omegas:
        freqs = tuple(omegas.get(i, 0.0) for i in range(len(modes)))
    spec = ModelSpec(name or "model", tuple(modes), tuple(jumps), freqs)
    errors = validate(spec)
    if errors:
        line = 1
        m = re.match(r"jump (\d+):", errors[0])
        if m:
            line = jump_lines[int(m.group(1))]
        raise ParseError(errors[0], line, 1, errors)
    return spec


def _mode_ref(ln, modes):
    _, mode, col = ln.take("ident", what="mode name")
    if mode not in modes:
        raise ln.error(f"unknown mode {mode!r}", col)
    return modes.index(mode)


def _factor(ln, modes):
    kind = ln.take("ident", what="create(...) or destroy(...)")
    if kind[1] not in (CREATE, DESTROY):
        raise ln.error(f"expected create or destroy, found {kind[1]!r}", kind[2])
    ln.take("punct", "(")
    idx = _mode_ref(ln, modes)
    power = 1
    tok = ln.peek()
    if tok is not None and tok[1] == ",":
        ln.i += 1
        _, value, col = ln.take("real", what="integer exponent")
        if not _INT.fullmatch(value) or int(value) < 1:
            raise ln.error("exponent must be a positive integer", col)
        power = int(value)
    ln.take("punct", ")")
    return Factor(idx, kind[1], power)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def serialize_model(spec: ModelSpec) -> str:
    """Canonical text: header, model, modes in index order, omegas, jumps in order."""
    lines = [FORMAT_HEADER.rstrip("\n"), f"model {spec.name}"]
    lines += [f"mode {m}" for m in spec.modes]
    if spec.frequencies is not None:
        lines += [f"omega {m} {_fmt(w)}" for m, w in zip(spec.modes, spec.frequencies)]
    for op in spec.jumps:
        parts = []
        for f in op.factors:
            arg = spec.modes[f.mode] if f.power == 1 else f"{spec.modes[f.mode]},{f.power}"
            parts.append(f"{f.kind}({arg})")
        lines.append(f"jump {_fmt(op.coefficient)} * {' '.join(parts)}")
    return "\n".join(lines) + "\n"
