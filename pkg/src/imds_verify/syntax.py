"""Lexer, recursive-descent parser and pretty-printer for ``.imds`` text."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import (ActionRule, BinOp, ConstBinding, Decl, Diagnostic, MessageInit,
                    MessagePattern, Name, Num, Range, Ref, Replicator, ServerInit,
                    ServerType, SourceSpan, StatePattern, SystemDecl)

KEYWORDS = frozenset({"server", "services", "states", "actions", "servers", "agents", "init"})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n\f\v]+)
  | (?P<comment>//[^\n]*)
  | (?P<define>\#DEFINE\b)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>->|\.\.|[{}()\[\],;.:=<>+\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "kw", "punct", "define", "eof"
    text: str
    span: SourceSpan


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan, expected=()):
        self.message = message
        self.span = span
        self.expected = frozenset(expected)
        super().__init__(f"{span.line}:{span.column}: {message}")

    @property
    def diagnostic(self) -> Diagnostic:
        return Diagnostic("error", self.message, self.span)


@dataclass
class ParseResult:
    decl: SystemDecl
    warnings: list = field(default_factory=list)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        span = SourceSpan(pos, line, pos - line_start + 1, 1)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        lexeme = m.group()
        span = SourceSpan(pos, line, pos - line_start + 1, len(lexeme))
        if kind == "ident" and lexeme in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, lexeme, span))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(n, line, n - line_start + 1, 0)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("punct", "kw", "define") and t.text == text

    def error(self, expected):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        exp = ", ".join(sorted(repr(e) for e in expected))
        raise ParseError(f"expected {exp}, got {got}", t.span, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error({text})
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "ident":
            self.error({"identifier"})
        self.i += 1
        return t

    def integer(self) -> Token:
        t = self.tok
        if t.kind != "int":
            self.error({"integer"})
        self.i += 1
        return t

    # expressions

    def term(self):
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return Num(int(t.text), t.span)
        if t.kind == "ident":
            self.i += 1
            return Name(t.text, t.span)
        self.error({"integer", "identifier"})

    def expr(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok
            self.i += 1
            left = BinOp(op.text, left, self.term(), op.span)
        return left

    def ref(self, ranges: bool = False) -> Ref:
        name = self.ident()
        indices = []
        if self.accept("["):
            while True:
                start = self.tok.span
                e = self.expr()
                if self.at(".."):
                    if not ranges:
                        self.error({"]", ","})
                    self.i += 1
                    e = Range(e, self.expr(), start)
                indices.append(e)
                if not self.accept(","):
                    break
            self.expect("]")
        return Ref(name.text, tuple(indices), name.span)

    def dotted(self) -> list[Ref]:
        parts = [self.ref()]
        while self.accept("."):
            parts.append(self.ref())
        return parts

    def message(self) -> MessagePattern:
        start = self.tok.span
        parts = self.dotted()
        if len(parts) != 3:
            raise ParseError("expected agent.server.service", start, {"message"})
        return MessagePattern(*parts, start)

    def state(self) -> StatePattern:
        start = self.tok.span
        parts = self.dotted()
        if len(parts) != 2:
            raise ParseError("expected server.state", start, {"state"})
        return StatePattern(*parts, start)

    # declarations

    def decl_list(self, closer: str) -> list[Decl]:
        """``IDENT ["[" expr "]"] {"," ...} [","]`` up to (not including) ``closer``."""
        out = []
        while not self.at(closer):
            name = self.ident()
            size = None
            if self.accept("["):
                size = self.expr()
                self.expect("]")
            out.append(Decl(name.text, size, name.span))
            if not self.accept(","):
                break
        return out

    def replicators(self) -> tuple:
        reps = []
        while self.at("<"):
            start = self.expect("<").span
            var = self.ident()
            self.expect("=")
            lo = self.expr()
            self.expect("..")
            hi = self.expr()
            self.expect(">")
            reps.append(Replicator(var.text, lo, hi, start))
        return tuple(reps)

    def rule(self) -> ActionRule:
        start = self.tok.span
        reps = self.replicators()
        self.expect("{")
        in_msg = self.message()
        self.expect(",")
        in_state = self.state()
        self.expect("}")
        self.expect("->")
        self.expect("{")
        first_start = self.tok.span
        parts = self.dotted()
        if len(parts) == 3:
            out_msg = MessagePattern(*parts, first_start)
            self.expect(",")
            out_state = self.state()
        elif len(parts) == 2:
            out_msg, out_state = None, StatePattern(*parts, first_start)
        else:
            raise ParseError("expected agent.server.service or server.state",
                             first_start, {"message", "state"})
        self.expect("}")
        self.accept(",")
        return ActionRule(reps, in_msg, in_state, out_msg, out_state, start)

    def server_type(self) -> ServerType:
        start = self.expect("server").span
        self.expect(":")
        name = self.ident()
        self.expect("(")
        self.expect("agents")
        formal_agents = self.decl_list(";")
        self.expect(";")
        self.expect("servers")
        formal_servers = self.decl_list(")")
        self.expect(")")
        self.accept(",")
        self.expect("services")
        self.expect("{")
        services = self.decl_list("}")
        self.expect("}")
        self.accept(",")
        self.expect("states")
        self.expect("{")
        states = self.decl_list("}")
        self.expect("}")
        self.accept(",")
        self.expect("actions")
        self.expect("{")
        rules = []
        while not self.at("}"):
            if not (self.at("<") or self.at("{")):
                self.error({"<", "{", "}"})
            rules.append(self.rule())
        self.expect("}")
        self.accept(",")
        return ServerType(name.text, tuple(formal_agents), tuple(formal_servers),
                          tuple(services), tuple(states), tuple(rules), start)

    def init_item(self):
        start = self.tok.span
        reps = self.replicators()
        head = self.ref()
        if self.accept("("):
            actuals = []
            while not self.at(")"):
                actuals.append(self.ref(ranges=True))
                if not self.accept(","):
                    break
            self.expect(")")
            self.expect(".")
            state = self.ref()
            item = ServerInit(reps, head, tuple(actuals), state, start)
        else:
            parts = [head]
            while self.accept("."):
                parts.append(self.ref())
            if len(parts) != 3:
                raise ParseError("expected server binding or agent.server.service",
                                 start, {"(", "message"})
            item = MessageInit(reps, MessagePattern(*parts, start), start)
        self.accept(",")
        return item

    def spec(self) -> SystemDecl:
        constants = []
        while self.at("#DEFINE"):
            start = self.expect("#DEFINE").span
            name = self.ident()
            value = self.integer()
            constants.append(ConstBinding(name.text, int(value.text), start))
        types = []
        while self.at("server"):
            types.append(self.server_type())
        self.expect("servers")
        servers = self.decl_list(";")
        self.expect(";")
        self.expect("agents")
        agents = self.decl_list(";")
        self.expect(";")
        self.expect("init")
        self.expect("->")
        self.expect("{")
        init = []
        while not self.at("}"):
            if not (self.at("<") or self.tok.kind == "ident"):
                self.error({"<", "identifier", "}"})
            init.append(self.init_item())
        self.expect("}")
        self.expect(".")
        if self.tok.kind != "eof":
            self.error({"end of input"})
        return SystemDecl(tuple(constants), tuple(types), tuple(servers),
                          tuple(agents), tuple(init))


def parse(text: str) -> ParseResult:
    """Parse ``.imds`` source; raises :class:`ParseError` on the first error."""
    return ParseResult(_Parser(text).spec())


# --- pretty printing -------------------------------------------------------

def _terms(expr, sign=1):
    if isinstance(expr, BinOp):
        yield from _terms(expr.left, sign)
        yield from _terms(expr.right, sign if expr.op == "+" else -sign)
    else:
        yield sign, expr


def format_expr(expr) -> str:
    if isinstance(expr, Range):
        return f"{format_expr(expr.lo)}..{format_expr(expr.hi)}"
    out = []
    for k, (sign, t) in enumerate(_terms(expr)):
        text = str(t.value) if isinstance(t, Num) else t.id
        if k == 0:
            if sign < 0:
                # no unary minus in the grammar
                text = f"0-{text}"
            out.append(text)
        else:
            out.append(("+" if sign > 0 else "-") + text)
    return "".join(out)


def format_ref(ref: Ref) -> str:
    if not ref.indices:
        return ref.name
    return f"{ref.name}[{','.join(format_expr(e) for e in ref.indices)}]"


def _decls(decls) -> str:
    return ",".join(d.name if d.size is None else f"{d.name}[{format_expr(d.size)}]"
                    for d in decls)


def _reps(reps) -> str:
    return "".join(f"<{r.var}={format_expr(r.lo)}..{format_expr(r.hi)}> " for r in reps)


def format_message(m: MessagePattern) -> str:
    return f"{format_ref(m.agent)}.{format_ref(m.server)}.{format_ref(m.service)}"


def format_state(p: StatePattern) -> str:
    return f"{format_ref(p.server)}.{format_ref(p.state)}"


def format_rule(rule: ActionRule) -> str:
    lhs = f"{{{format_message(rule.in_message)}, {format_state(rule.in_state)}}}"
    if rule.out_message is None:
        rhs = f"{{{format_state(rule.out_state)}}}"
    else:
        rhs = f"{{{format_message(rule.out_message)}, {format_state(rule.out_state)}}}"
    return f"{_reps(rule.replicators)}{lhs} -> {rhs},"


def pretty_print(decl: SystemDecl) -> str:
    lines = [f"#DEFINE {c.name} {c.value}" for c in decl.constants]
    if lines:
        lines.append("")
    for st in decl.server_types:
        lines.append(f"server: {st.name}(agents {_decls(st.formal_agents)};"
                     f"servers {_decls(st.formal_servers)}),")
        lines.append(f"services {{{_decls(st.services)}}},")
        lines.append(f"states {{{_decls(st.states)}}},")
        lines.append("actions {")
        lines.extend("  " + format_rule(r) for r in st.rules)
        lines.append("}")
        lines.append("")
    lines.append(f"servers {_decls(decl.servers)};")
    lines.append(f"agents {_decls(decl.agents)};")
    lines.append("")
    lines.append("init -> {")
    for item in decl.init:
        if isinstance(item, ServerInit):
            actuals = ",".join(format_ref(a) for a in item.actuals)
            body = f"{format_ref(item.instance)}({actuals}).{format_ref(item.state)}"
        else:
            body = format_message(item.message)
        lines.append(f"  {_reps(item.replicators)}{body},")
    lines.append("}.")
    return "\n".join(lines) + "\n"
