"""Case files: lexer, parser, canonical renderer and validator.

A case file declares system models, observation sequences (evidence
stories and theories), evidential statements and ``set`` options::

    model M1 {
      fields { }
      state A { }
      state B { }
      events stay, go;
      trans A -stay-> A;
      trans A -go-> B;
      init A;
    }
    seq seq1 = [(true, 3, 0, 1.0)];
    theory T1 = [$, (event == "go", 1, 0, 0.9)];
    evidence E = { seq1 };

:func:`parse_case` raises :class:`CaseError` carrying every error
diagnostic; warnings are obtained from :func:`validate`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping

from .model import (
    INF,
    WILDCARD,
    And,
    Cmp,
    Const,
    EventIs,
    EvidentialStatement,
    ModelError,
    Not,
    Observation,
    ObservationError,
    ObservationSequence,
    Or,
    PropertyExpr,
    SystemModel,
    Transition,
    Value,
    kind_of,
    schema_problems,
    walk,
)

# diagnostic codes
LEXICAL = "E001"
SYNTAX = "E002"
NAME = "E003"
TYPE = "E004"
VALUE = "E005"
W_EMPTY_EVIDENCE = "W101"
W_WILDCARD_THEORY = "W102"
W_ZERO_WEIGHT = "W103"

_CODE_FOR = {"name": NAME, "type": TYPE}

RESERVED = frozenset({"true", "false", "event", "INF"})
FIELD_KINDS = ("int", "bool", "string")


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    line: int | None = None
    column: int | None = None
    hint: str | None = None

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        text = f"{where}{self.severity} {self.code}: {self.message}"
        if self.hint:
            text += f" (hint: {self.hint})"
        return text

    def sort_key(self):
        return (self.line or 0, self.column or 0, self.code, self.message)


class CaseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class CaseSpec:
    models: tuple[SystemModel, ...] = ()
    sequences: tuple[ObservationSequence, ...] = ()
    evidence: tuple[EvidentialStatement, ...] = ()
    settings: Mapping[str, object] = field(default_factory=dict)
    setting_locs: Mapping = field(default_factory=dict, compare=False, repr=False)

    def model(self, name: str) -> SystemModel:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(f"no model named {name}")

    def sequence(self, name: str) -> ObservationSequence:
        for s in self.sequences:
            if s.name == name:
                return s
        raise KeyError(f"no sequence named {name}")

    def statement(self, name: str) -> EvidentialStatement:
        for e in self.evidence:
            if e.name == name:
                return e
        raise KeyError(f"no evidence named {name}")

    def resolve(self, evidence: str) -> list[ObservationSequence]:
        """Observation sequences of evidential statement *evidence*."""
        return [self.sequence(n) for n in self.statement(evidence).sequences]

    def theories(self) -> list[ObservationSequence]:
        return [s for s in self.sequences if s.kind == "theory"]


# --------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT INT NUMBER STRING PUNCT EOF
    text: str
    line: int
    col: int

    @property
    def loc(self) -> tuple[int, int]:
        return (self.line, self.col)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<NUMBER>\d+\.\d+)
  | (?P<INT>\d+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"(?:[^"\\\n]|\\.)*")
  | (?P<PUNCT>->|==|!=|<=|>=|&&|\|\||[{}\[\](),;:=<>!$-])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


class _Failure(Exception):
    def __init__(self, diagnostic: Diagnostic) -> None:
        self.diagnostic = diagnostic


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise _Failure(Diagnostic("error", LEXICAL, "unterminated string literal", line, col))
            raise _Failure(Diagnostic("error", LEXICAL, f"unexpected character {ch!r}", line, col))
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "STRING":
            body = m.group()[1:-1]
            bad = re.search(r"\\([^nt\"\\])", body)
            if bad:
                raise _Failure(
                    Diagnostic("error", LEXICAL, f"unknown escape \\{bad.group(1)}", line, col + bad.start() + 1)
                )
            tokens.append(Token("STRING", m.group(), line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES[m.group(1)], text[1:-1])


def quote(text: str) -> str:
    body = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{body}"'


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def fail(self, message: str, tok: Token | None = None, hint: str | None = None):
        tok = tok or self.tok
        raise _Failure(Diagnostic("error", SYNTAX, message, tok.line, tok.col, hint))

    def _describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "EOF" else repr(tok.text)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("PUNCT", "IDENT") and self.tok.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            tok = self.tok
            self.i += 1
            return tok
        return None

    def expect(self, text: str) -> Token:
        tok = self.accept(text)
        if tok is None:
            self.fail(f"expected {text!r}, found {self._describe(self.tok)}")
        return tok

    def ident(self, what: str = "identifier") -> Token:
        tok = self.tok
        if tok.kind != "IDENT":
            self.fail(f"expected {what}, found {self._describe(tok)}")
        if tok.text in RESERVED:
            self.fail(f"{tok.text!r} is reserved and cannot be used as {what}")
        self.i += 1
        return tok

    def integer(self, what: str = "integer") -> Token:
        tok = self.tok
        if tok.kind != "INT":
            self.fail(f"expected {what}, found {self._describe(tok)}")
        self.i += 1
        return tok

    # -- top level ---------------------------------------------------------

    def case(self):
        items = []
        while self.tok.kind != "EOF":
            tok = self.tok
            if self.at("model"):
                items.append(("model", self.model()))
            elif self.at("seq") or self.at("theory"):
                items.append(("seq", self.seqdecl()))
            elif self.at("evidence"):
                items.append(("evidence", self.evdecl()))
            elif self.at("set"):
                items.append(("set", self.setting()))
            else:
                self.fail(
                    f"expected a declaration, found {self._describe(tok)}",
                    hint="declarations start with model, seq, theory, evidence or set",
                )
        return items

    def model(self) -> SystemModel:
        start = self.expect("model")
        name = self.ident("model name")
        locs: dict = {}
        self.expect("{")
        self.expect("fields")
        self.expect("{")
        schema: dict[str, str] = {}
        while not self.at("}"):
            ftok = self.ident("field name")
            self.expect(":")
            ktok = self.tok
            if not (ktok.kind == "IDENT" and ktok.text in FIELD_KINDS):
                self.fail(f"expected field kind int, bool or string, found {self._describe(ktok)}")
            self.i += 1
            if ftok.text in schema:
                self._defer(NAME, f"duplicate field {ftok.text}", ftok)
            schema[ftok.text] = ktok.text
            locs[("field", ftok.text)] = ftok.loc
        self.expect("}")
        states: dict[str, dict[str, Value]] = {}
        if not self.at("state"):
            self.fail(f"expected 'state', found {self._describe(self.tok)}", hint="a model declares at least one state")
        while self.at("state"):
            self.i += 1
            stok = self.ident("state name")
            valuation: dict[str, Value] = {}
            self.expect("{")
            if not self.at("}"):
                while True:
                    ftok = self.ident("field name")
                    self.expect("=")
                    value = self.literal()
                    if ftok.text in valuation:
                        self._defer(NAME, f"state {stok.text} assigns field {ftok.text} twice", ftok)
                    valuation[ftok.text] = value
                    locs[("value", stok.text, ftok.text)] = ftok.loc
                    if not self.accept(","):
                        break
            self.expect("}")
            if stok.text in states:
                self._defer(NAME, f"duplicate state {stok.text}", stok)
            states[stok.text] = valuation
            locs[("state", stok.text)] = stok.loc
        self.expect("events")
        events = []
        for etok in self._ident_list("event name"):
            if etok.text in events:
                self._defer(NAME, f"duplicate event {etok.text}", etok)
            else:
                events.append(etok.text)
        self.expect(";")
        transitions = []
        if not self.at("trans"):
            self.fail(f"expected 'trans', found {self._describe(self.tok)}", hint="a model declares at least one transition")
        while self.at("trans"):
            ttok = self.expect("trans")
            src = self.ident("state name")
            self.expect("-")
            ev = self.ident("event name")
            self.expect("->")
            dst = self.ident("state name")
            self.expect(";")
            transitions.append(Transition(src.text, ev.text, dst.text, loc=ttok.loc))
            # name errors point at the offending identifier
            for part in (src, dst):
                if part.text not in states:
                    self._defer(NAME, f"unknown state {part.text}", part)
            if ev.text not in events:
                self._defer(NAME, f"unknown event {ev.text}", ev)
        self.expect("init")
        initial = []
        for tok in self._ident_list("state name"):
            initial.append(tok.text)
            locs[("initial", tok.text)] = tok.loc
        self.expect(";")
        final = None
        if self.accept("final"):
            final = []
            for tok in self._ident_list("state name"):
                final.append(tok.text)
                locs[("final", tok.text)] = tok.loc
            self.expect(";")
        self.expect("}")
        return SystemModel(
            name.text, schema, states, tuple(events), tuple(transitions), tuple(initial),
            None if final is None else tuple(final), loc=start.loc, locs=locs,
        )

    deferred: list[Diagnostic]

    def _defer(self, code: str, message: str, tok: Token) -> None:
        self.deferred.append(Diagnostic("error", code, message, tok.line, tok.col))

    def _ident_list(self, what: str) -> list[Token]:
        out = [self.ident(what)]
        while self.accept(","):
            out.append(self.ident(what))
        return out

    def seqdecl(self):
        kw = self.tok
        self.i += 1
        name = self.ident("sequence name")
        self.expect("=")
        self.expect("[")
        observations = [self.obs()]
        while self.accept(","):
            observations.append(self.obs())
        self.expect("]")
        self.expect(";")
        return kw.text, name, observations

    def obs(self):
        start = self.tok
        if self.accept("$"):
            return ("$", start.loc)
        self.expect("(")
        prop = self.expr()
        self.expect(",")
        min_tok = self.integer("min (integer)")
        self.expect(",")
        if self.accept("INF"):
            max_value = INF
        else:
            max_value = int(self.integer("max (integer or INF)").text)
        w = None
        t = None
        w_tok = None
        if self.accept(","):
            w_tok = self.tok
            if w_tok.kind not in ("INT", "NUMBER"):
                self.fail(f"expected weight, found {self._describe(w_tok)}")
            self.i += 1
            w = Fraction(w_tok.text)
            if self.accept(","):
                t = int(self.integer("timestamp (integer)").text)
        self.expect(")")
        return ("obs", start.loc, prop, int(min_tok.text), max_value, w, t, w_tok)

    def evdecl(self) -> EvidentialStatement:
        self.expect("evidence")
        name = self.ident("evidence name")
        self.expect("=")
        self.expect("{")
        members = self._ident_list("sequence name")
        self.expect("}")
        self.expect(";")
        seen = []
        for tok in members:
            if tok.text in seen:
                self._defer(NAME, f"evidence {name.text} lists {tok.text} twice", tok)
            else:
                seen.append(tok.text)
        ev = EvidentialStatement(name.text, tuple(seen), loc=name.loc)
        self.member_locs[name.text] = {tok.text: tok.loc for tok in members}
        return ev

    member_locs: dict

    def setting(self):
        self.expect("set")
        name = self.ident("setting name")
        self.expect("=")
        tok = self.tok
        if tok.kind == "NUMBER":
            self.i += 1
            value: object = float(tok.text)
        else:
            value = self.literal()
        self.expect(";")
        return name, value

    def literal(self) -> Value:
        tok = self.tok
        if tok.kind == "INT":
            self.i += 1
            return int(tok.text)
        if self.at("-") and self.tokens[self.i + 1].kind == "INT":
            self.i += 2
            return -int(self.tokens[self.i - 1].text)
        if tok.kind == "STRING":
            self.i += 1
            return _unquote(tok.text)
        if tok.kind == "IDENT" and tok.text in ("true", "false"):
            self.i += 1
            return tok.text == "true"
        if tok.kind == "NUMBER":
            self.fail("decimal numbers are not field values", hint="fields are int, bool or string")
        self.fail(f"expected a literal, found {self._describe(tok)}")

    # -- expressions -------------------------------------------------------

    def expr(self) -> PropertyExpr:
        left = self.conj()
        while True:
            tok = self.accept("||")
            if tok is None:
                return left
            left = Or(left, self.conj(), loc=tok.loc)

    def conj(self) -> PropertyExpr:
        left = self.unary()
        while True:
            tok = self.accept("&&")
            if tok is None:
                return left
            left = And(left, self.unary(), loc=tok.loc)

    def unary(self) -> PropertyExpr:
        tok = self.accept("!")
        if tok is not None:
            return Not(self.unary(), loc=tok.loc)
        return self.atom()

    def atom(self) -> PropertyExpr:
        tok = self.tok
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "IDENT" and tok.text in ("true", "false"):
            self.i += 1
            return Const(tok.text == "true", loc=tok.loc)
        if self.accept("event"):
            if not self.at("=="):
                self.fail("event can only be compared with ==", hint='write !(event == "x") for inequality')
            self.i += 1
            stok = self.tok
            if stok.kind != "STRING":
                self.fail(f"expected an event name string, found {self._describe(stok)}")
            self.i += 1
            return EventIs(_unquote(stok.text), loc=tok.loc)
        if tok.kind == "IDENT" and tok.text not in RESERVED:
            self.i += 1
            op = self.tok
            if not (op.kind == "PUNCT" and op.text in ("==", "!=", "<", "<=", ">", ">=")):
                self.fail(f"expected a comparison operator after {tok.text}, found {self._describe(op)}")
            self.i += 1
            return Cmp(tok.text, op.text, self.literal(), loc=tok.loc)
        if tok.kind == "PUNCT" and tok.text == "$":
            self.fail("'$' is an observation, not a property", hint="use true for an always-true property")
        self.fail(f"expected a property, found {self._describe(tok)}")


def _build(items, parser: _Parser) -> tuple[CaseSpec, list[Diagnostic]]:
    diags: list[Diagnostic] = list(parser.deferred)
    models, seqs, evidence = [], [], []
    settings: dict[str, object] = {}
    setting_locs: dict[str, tuple[int, int]] = {}
    for kind, item in items:
        if kind == "set":
            name, value = item
            if name.text in settings:
                diags.append(Diagnostic("error", NAME, f"setting {name.text} given twice", name.line, name.col))
            settings[name.text] = value
            setting_locs[name.text] = name.loc
    default_w = settings.get("default_weight", 1)
    try:
        default_w = Observation(Const(True), 0, 0, default_w).w
    except ModelError:
        line, col = setting_locs["default_weight"]
        diags.append(Diagnostic("error", VALUE, "default_weight must be a number in [0, 1]", line, col))
        default_w = Fraction(1)
    for kind, item in items:
        if kind == "model":
            models.append(item)
        elif kind == "evidence":
            evidence.append(item)
        elif kind == "seq":
            seq_kind, name, raw_obs = item
            observations = []
            for raw in raw_obs:
                if raw[0] == "$":
                    observations.append(Observation(WILDCARD.prop, 0, INF, 1, None, loc=raw[1]))
                    continue
                _, loc, prop, mn, mx, w, t, w_tok = raw
                try:
                    observations.append(Observation(prop, mn, mx, default_w if w is None else w, t, loc=loc))
                except ObservationError as exc:
                    at = w_tok.loc if (exc.field == "w" and w_tok is not None) else loc
                    diags.append(Diagnostic("error", VALUE, str(exc), at[0], at[1]))
            seqs.append(ObservationSequence(name.text, tuple(observations), seq_kind, loc=name.loc))
    spec = CaseSpec(tuple(models), tuple(seqs), tuple(evidence), settings, setting_locs)
    object.__setattr__(spec, "_member_locs", parser.member_locs)
    return spec, diags


def parse_case(text: str) -> CaseSpec:
    """Parse and validate *text*; raise :class:`CaseError` on any error."""
    try:
        tokens = tokenize(text)
        parser = _Parser(tokens)
        parser.deferred = []
        parser.member_locs = {}
        items = parser.case()
    except _Failure as failure:
        raise CaseError([failure.diagnostic]) from None
    spec, diags = _build(items, parser)
    # checks already reported with a precise location during parsing
    reported = {(d.code, d.message, d.line) for d in diags}
    for d in validate(spec):
        if d.severity == "error" and (d.code, d.message, d.line) not in reported:
            diags.append(d)
    errors = sorted({d for d in diags if d.severity == "error"}, key=Diagnostic.sort_key)
    if errors:
        raise CaseError(errors)
    return spec


# --------------------------------------------------------------------------
# validation


def _diag(severity: str, code: str, message: str, loc, hint: str | None = None) -> Diagnostic:
    line, col = loc if loc else (None, None)
    return Diagnostic(severity, code, message, line, col, hint)


def field_kinds(spec: CaseSpec) -> dict[str, set[str]]:
    kinds: dict[str, set[str]] = {}
    for m in spec.models:
        for fname, kind in m.schema.items():
            kinds.setdefault(fname, set()).add(kind)
    return kinds


def sequence_problems(seq: ObservationSequence, schema: Mapping[str, str]) -> Iterator[tuple[str, str, object]]:
    for o in seq.observations:
        yield from schema_problems(o.prop, schema)


def validate(spec: CaseSpec) -> list[Diagnostic]:
    """All diagnostics for *spec*; no errors means every invariant holds."""
    out: list[Diagnostic] = []
    member_locs = spec.__dict__.get("_member_locs", {})

    for group, items in (("model", spec.models), ("sequence", spec.sequences), ("evidence", spec.evidence)):
        seen = set()
        for item in items:
            if item.name in seen:
                out.append(_diag("error", NAME, f"duplicate {group} name {item.name}", item.loc))
            seen.add(item.name)

    for m in spec.models:
        for code, message, loc in m.problems():
            out.append(_diag("error", _CODE_FOR[code], message, loc or m.loc))

    if spec.models:
        kinds = field_kinds(spec)
        for seq in spec.sequences:
            for o in seq.observations:
                for node in walk(o.prop):
                    if not isinstance(node, Cmp):
                        continue
                    loc = node.loc or o.loc or seq.loc
                    known = kinds.get(node.fieldname)
                    if not known:
                        out.append(_diag("error", NAME, f"unknown field {node.fieldname}", loc))
                        continue
                    problems = [
                        (c, msg) for kind in sorted(known)
                        for c, msg, _ in schema_problems(node, {node.fieldname: kind})
                    ]
                    if len(problems) == len(known):
                        code, message = problems[0]
                        out.append(_diag("error", _CODE_FOR[code], message, loc))

    for seq in spec.sequences:
        if not seq.timestamps_ordered():
            out.append(_diag("error", VALUE, f"sequence {seq.name}: timestamps decrease", seq.loc))
        for o in seq.observations:
            if o.w == 0:
                out.append(_diag("warning", W_ZERO_WEIGHT, "zero-credibility observation", o.loc or seq.loc))
        if seq.kind == "theory" and all(o.is_wildcard for o in seq.observations):
            out.append(_diag("warning", W_WILDCARD_THEORY, f"theory {seq.name} contains only wildcards", seq.loc))

    names = {s.name for s in spec.sequences}
    for ev in spec.evidence:
        if not ev.sequences:
            out.append(_diag("warning", W_EMPTY_EVIDENCE, f"evidence {ev.name} references no sequences", ev.loc))
        seen = set()
        for member in ev.sequences:
            loc = member_locs.get(ev.name, {}).get(member, ev.loc)
            if member in seen:
                out.append(_diag("error", NAME, f"evidence {ev.name} lists {member} twice", loc))
            seen.add(member)
            if member not in names:
                out.append(_diag("error", NAME, f"unknown sequence {member}", loc))

    for key, value in spec.settings.items():
        problem = setting_problem(key, value)
        if problem:
            out.append(_diag("error", VALUE, problem, spec.setting_locs.get(key)))
    return sorted(set(out), key=Diagnostic.sort_key)


RANK_MODES = ("sum", "product", "min")
LEVELS = ("off", "events", "full")


def setting_problem(key: str, value: object) -> str | None:
    if key == "rank" and value not in RANK_MODES:
        return f"rank must be one of {', '.join(RANK_MODES)}"
    if key == "max_len" and (kind_of_setting(value) != "int" or value < 0):
        return "max_len must be a non-negative integer"
    if key.startswith("sensor_") and key.endswith("_weight") or key == "default_weight":
        if kind_of_setting(value) not in ("int", "number") or not 0 <= value <= 1:
            return f"{key} must be a number in [0, 1]"
    if key.startswith("sensor_") and key.endswith("_level") and value not in LEVELS:
        return f"{key} must be one of {', '.join(LEVELS)}"
    return None


def kind_of_setting(value: object) -> str:
    return "number" if isinstance(value, float) else kind_of(value)


def check_against_model(seqs, model: SystemModel) -> list[Diagnostic]:
    """Errors for sequences whose fields *model* cannot type."""
    out = []
    for seq in seqs:
        for code, message, loc in sequence_problems(seq, model.schema):
            out.append(_diag("error", _CODE_FOR[code], f"{seq.name} vs model {model.name}: {message}", loc or seq.loc))
    return out


# --------------------------------------------------------------------------
# rendering

_PREC = {Or: 1, And: 2, Not: 3}


def render_literal(value: Value) -> str:
    kind = kind_of(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "string":
        return quote(value)
    return str(value)


def render_expr(expr: PropertyExpr, prec: int = 0) -> str:
    if isinstance(expr, Const):
        return "true" if expr.value else "false"
    if isinstance(expr, Cmp):
        return f"{expr.fieldname} {expr.op} {render_literal(expr.literal)}"
    if isinstance(expr, EventIs):
        return f"event == {quote(expr.name)}"
    own = _PREC[type(expr)]
    if isinstance(expr, Not):
        text = "!" + render_expr(expr.operand, own)
    else:
        op = "||" if isinstance(expr, Or) else "&&"
        # left-nested: only the right operand needs parens at equal precedence
        text = f"{render_expr(expr.left, own)} {op} {render_expr(expr.right, own + 1)}"
    return f"({text})" if own < prec else text


def render_weight(w: Fraction) -> str:
    """Exact decimal text for *w*."""
    rest, twos, fives = w.denominator, 0, 0
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        return repr(float(w))
    digits = max(twos, fives, 1)
    text = str(w.numerator * 10**digits // w.denominator).rjust(digits + 1, "0")
    return f"{text[:-digits]}.{text[-digits:]}"


def render_observation(o: Observation) -> str:
    if o.is_wildcard:
        return "$"
    mx = "INF" if o.max == INF else str(o.max)
    text = f"({render_expr(o.prop)}, {o.min}, {mx}, {render_weight(o.w)}"
    if o.t is not None:
        text += f", {o.t}"
    return text + ")"


def render_sequence(seq: ObservationSequence) -> str:
    body = ", ".join(render_observation(o) for o in seq.observations)
    return f"{seq.kind} {seq.name} = [{body}];"


def render_evidence(ev: EvidentialStatement) -> str:
    return f"evidence {ev.name} = {{ {', '.join(ev.sequences)} }};"


def render_model(m: SystemModel) -> str:
    lines = [f"model {m.name} {{"]
    fields = " ".join(f"{f}: {k}" for f, k in m.schema.items())
    lines.append(f"  fields {{ {fields} }}" if fields else "  fields { }")
    for sname, valuation in m.states.items():
        body = ", ".join(f"{f} = {render_literal(v)}" for f, v in valuation.items())
        lines.append(f"  state {sname} {{ {body} }}" if body else f"  state {sname} {{ }}")
    lines.append(f"  events {', '.join(m.events)};")
    for tr in m.transitions:
        lines.append(f"  trans {tr.src} -{tr.event}-> {tr.dst};")
    lines.append(f"  init {', '.join(m.initial)};")
    if m.final is not None:
        lines.append(f"  final {', '.join(m.final)};")
    lines.append("}")
    return "\n".join(lines)


def render_setting(key: str, value: object) -> str:
    text = repr(value) if isinstance(value, float) else render_literal(value)
    return f"set {key} = {text};"


def render_case(spec: CaseSpec) -> str:
    """Canonical text; ``parse_case(render_case(s)) == s``."""
    parts = []
    if spec.settings:
        parts.append("\n".join(render_setting(k, v) for k, v in spec.settings.items()))
    parts.extend(render_model(m) for m in spec.models)
    if spec.sequences:
        parts.append("\n".join(render_sequence(s) for s in spec.sequences))
    if spec.evidence:
        parts.append("\n".join(render_evidence(e) for e in spec.evidence))
    return "\n\n".join(parts) + "\n"
