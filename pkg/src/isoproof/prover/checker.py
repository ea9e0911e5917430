"""Goal-tag proof checker behind the mock prover.

Semantics, in brief: every identifier of two or more characters inside a
quoted statement is a *tag*. A lemma's goal is the tag set of its statement;
a fact covers the tags of its own statement (a definition ``c_def`` covers the
tags of its defining equation). A proof succeeds when the facts it applies
jointly cover the goal. Errors are reported with Isabelle's phrasing so the
downstream classifier sees realistic text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from .. import lexer
from ..errors import CorpusError
from ..lexer import CARTOUCHE, IDENT, NAT, STRING, SYM
from ..parsing import LEMMA_KEYWORDS, STATEMENT_KEYWORDS, _commands, lemma_header, parse_theory
from .base import TimedOut

_ESCAPE = re.compile(r"\\<\^?[A-Za-z_]+>")
_WORD = re.compile(r"[A-Za-z][A-Za-z0-9_']*")

# words inside terms that never count as tags
TAG_STOP = frozenset("""
if then else let in case of and or not True False undefined set fst snd Suc
ALL EX SOME THE id map length hd tl rev
""".split())

KNOWN_METHODS = frozenset("""
simp simp_all clarsimp auto force fastforce blast fast best slow metis meson iprover
rule erule drule frule intro elim intro_classes standard assumption safe clarify
arith linarith presburger argo fact this insert subst unfold fold split
cases case_tac induct induct_tac induction ind_cases rule_tac erule_tac drule_tac frule_tac
subgoal_tac rename_tac rotate_tac cut_tac thin_tac wp wpsimp wpc wp_once wpfix corres
eval normalization rewrite atomize elim_format mock_sleep succeed fail
""".split())

# methods whose bare arguments are terms, not facts
TERM_METHODS = frozenset({"cases", "case_tac", "induct", "induct_tac", "induction", "ind_cases",
                          "subgoal_tac", "rename_tac", "rotate_tac", "thin_tac", "mock_sleep"})
# attributes whose arguments are facts
FACT_ATTRIBUTES = frozenset({"OF", "THEN", "unfolded", "folded", "simplified", "trans", "sym"})
TERM_MODIFIERS = frozenset({"arbitrary", "taking"})

GOAL_COMMANDS = frozenset({"have", "show", "hence", "thus", "obtain"})
PROOF_COMMANDS = frozenset("""
apply apply_end by done proof qed using unfolding including supply
have show hence thus then from with note next fix assume presume let case obtain define
moreover ultimately also finally sorry oops defer prefer back subgoal
""".split())


def term_tags(term):
    text = _ESCAPE.sub(" ", term)
    return frozenset(w for w in _WORD.findall(text) if len(w) >= 2 and w not in TAG_STOP)


def tags_of_tokens(toks):
    out = set()
    for t in toks:
        if t.kind in (STRING, CARTOUCHE):
            out |= term_tags(lexer.unquote(t))
    return frozenset(out)


class ProofError(Exception):
    def __init__(self, message, tok=None, command=None, goal=None):
        self.message = message
        self.tok = tok
        self.command = command
        self.goal = None if goal is None else frozenset(goal)
        super().__init__(message)


@dataclass
class CheckResult:
    ok: bool
    message: str = ""
    facts: dict = field(default_factory=dict)


def _format_goal(tags):
    return "goal (1 subgoal):\n 1. " + (" ".join(sorted(tags)) or "False")


# ---------------------------------------------------------------------------
# method expressions

@dataclass
class MethodUse:
    methods: list
    facts: list  # (name, token)
    sleeps: list


def parse_method_args(toks, known=KNOWN_METHODS, max_methods=None, min_methods=0):
    """Read the method expression(s) following ``apply``/``by``/``proof``/``qed``.

    At depth 0 every identifier is its own method; a bare identifier that is
    not a method name is taken as a fact (``by lem_a``).
    """
    methods, facts, sleeps = [], [], []
    top = 0
    # stack of modes for bracketed regions: "method" | "facts" | "terms" | "attr"
    stack = []
    mode = "facts"
    expect_method = True
    i = 0
    n = len(toks)
    while i < n:
        t = toks[i]
        nxt = toks[i + 1] if i + 1 < n else None
        if t.kind == SYM:
            if t.text == "(":
                if not stack:
                    top += 1
                stack.append((mode, "("))
                expect_method = True
            elif t.text == "[":
                stack.append((mode, "["))
                mode = "attr"
            elif t.text in (")", "]"):
                if not stack or stack[-1][1] != ("(" if t.text == ")" else "["):
                    raise ProofError("Outer syntax error: unbalanced parentheses", t)
                mode = stack.pop()[0]
                expect_method = False
            elif t.text in (",", ";", "|") and stack:
                expect_method = stack[-1][1] == "("
                if stack[-1][1] == "[":
                    mode = "attr"
            elif t.text in ("+", "?", "-", "=", "!", ":", "_", "<", ">"):
                if t.text == "-" and not stack and top == 0 and expect_method:
                    top += 1
                    methods.append("-")
                    expect_method = False
            elif t.text == ".":
                raise ProofError("Outer syntax error: method expected", t)
            i += 1
            continue
        if t.kind in (STRING, CARTOUCHE, NAT):
            if not stack and t.kind != NAT:
                raise ProofError("Outer syntax error: method expected", t)
            i += 1
            continue
        if t.kind != IDENT:
            i += 1
            continue
        w = t.text
        if not stack:
            # top level: one method (or fact) per identifier
            top += 1
            if w in known:
                methods.append(w)
            else:
                facts.append((w, t))
            i += 1
            continue
        if expect_method and stack[-1][1] == "(":
            if w not in known:
                raise ProofError(f'Undefined method: "{w}"', t)
            methods.append(w)
            expect_method = False
            mode = "terms" if w in TERM_METHODS or w.endswith("_tac") else "facts"
            if w == "mock_sleep" and nxt is not None and nxt.kind == NAT:
                sleeps.append(int(nxt.text))
            i += 1
            continue
        if mode == "attr":
            mode = "facts" if w in FACT_ATTRIBUTES else "terms"
            i += 1
            continue
        if nxt is not None and nxt.kind == SYM and nxt.text == ":":
            mode = "terms" if w in TERM_MODIFIERS else "facts"
            i += 2
            continue
        if w == "in" and mode == "terms":
            mode = "facts"
            i += 1
            continue
        if mode == "facts" and w not in ("_", "this") and not w.startswith("?"):
            facts.append((w, t))
        i += 1
    if stack:
        raise ProofError("Outer syntax error: unbalanced parentheses", toks[-1] if toks else None)
    if top < min_methods or (max_methods is not None and top > max_methods):
        raise ProofError("Outer syntax error: bad method expression", toks[0] if toks else None)
    return MethodUse(methods, facts, sleeps)


# ---------------------------------------------------------------------------
# Isar state machine

@dataclass
class _Prove:
    remaining: set
    chained: set
    label: str | None = None
    stmt_tags: frozenset = frozenset()
    is_show: bool = False
    in_block: bool = False


@dataclass
class _Block:
    goal: frozenset
    shown: bool = False
    facts: dict = field(default_factory=dict)
    last: frozenset | None = None
    pending: frozenset | None = None
    collected: list = field(default_factory=list)


def _split_commands(toks):
    out = []
    depth = 0
    for t in toks:
        starts = depth == 0 and ((t.kind == IDENT and t.text in PROOF_COMMANDS)
                                 or (t.kind == SYM and t.text in (".", "..")))
        if starts or not out:
            out.append([t])
        else:
            out[-1].append(t)
        if t.kind == SYM and t.text in ("(", "["):
            depth += 1
        elif t.kind == SYM and t.text in (")", "]"):
            depth = max(0, depth - 1)
    return out


class TheoryChecker:
    def __init__(self, name, text, scope, deadline=None):
        self.name = name
        self.text = text
        self.scope = dict(scope)
        self.deadline = deadline
        self.lines = lexer.LineIndex(text)

    def where(self, tok):
        line = tok.line if tok is not None else 1
        return f'(line {line} of "{self.name}")'

    def lookup(self, name, tok, blocks, lemma_local):
        for b in reversed(blocks):
            if name in b.facts:
                return b.facts[name]
        if name in lemma_local:
            return lemma_local[name]
        base = name.split("[", 1)[0]
        if base in self.scope:
            return self.scope[base]
        raise ProofError(f'Undefined fact: "{name}"', tok)

    def _sleep(self, seconds):
        if self.deadline is None:
            return
        if self.deadline.sleep(seconds):
            raise TimedOut()

    # -- statements

    def statement(self, toks):
        """Validate a lemma statement; return (goal tags, local facts)."""
        if not any(t.kind in (STRING, CARTOUCHE) for t in toks):
            raise ProofError("Outer syntax error: proposition expected", toks[0] if toks else None)
        goal, assms = set(), set()
        local = {}
        section = "shows"
        has_assumes = any(t.kind == IDENT and t.text == "assumes" for t in toks)
        if has_assumes:
            section = None
        label = None
        for k, t in enumerate(toks):
            prev = toks[k - 1] if k else None
            nxt = toks[k + 1] if k + 1 < len(toks) else None
            if t.kind == IDENT:
                if t.text in STATEMENT_KEYWORDS:
                    if t.text in ("assumes", "shows", "fixes", "obtains", "for"):
                        section = t.text
                    continue
                if nxt is not None and nxt.text in (":", "["):
                    label = t.text
                    continue
                if section in ("fixes", "for") or (prev is not None and prev.text in ("[", ",")):
                    continue
                raise ProofError(f"Outer syntax error: command expected,\nbut identifier {t.text} was found", t)
            if t.kind in (STRING, CARTOUCHE):
                tags = term_tags(lexer.unquote(t))
                if section == "assumes":
                    assms |= tags
                    if label:
                        local[label] = frozenset(local.get(label, frozenset()) | tags)
                elif section in ("shows", "obtains") or section is None:
                    goal |= tags
                continue
            if t.kind == SYM and t.text in (":", "::", "(", ")", "[", "]", ",", "="):
                continue
            if t.kind == NAT and prev is not None and prev.text in ("[", ","):
                continue
            raise ProofError(f"Outer syntax error: command expected,\nbut {t.text} was found", t)
        if has_assumes:
            local["assms"] = frozenset(assms)
        return frozenset(goal), local

    def goal_statement(self, toks, block, cmd):
        """Parse ``[label:] "stmt" | ?thesis`` after have/show."""
        label = None
        i = 0
        if len(toks) >= 2 and toks[0].kind == IDENT and toks[1].text in (":", "["):
            label = toks[0].text
            i = 1
            if toks[i].text == "[":
                while i < len(toks) and toks[i].text != "]":
                    i += 1
                i += 1
            if i < len(toks) and toks[i].text == ":":
                i += 1
        tags = set()
        seen = False
        section = "stmt"
        for t in toks[i:]:
            if t.kind in (STRING, CARTOUCHE):
                if section == "stmt":
                    tags |= term_tags(lexer.unquote(t))
                seen = True
            elif t.kind == IDENT and t.text in ("?thesis", "?case"):
                tags |= block.goal
                seen = True
            elif t.kind == IDENT and t.text in ("if", "for", "and", "is", "where"):
                section = "for" if t.text == "for" else section
            elif t.kind == SYM and t.text in ("(", ")"):
                continue
            elif section == "for" and t.kind == IDENT:
                continue
            else:
                raise ProofError(f"Outer syntax error: proposition expected,\nbut {t.text} was found", t, cmd)
        if not seen:
            raise ProofError("Outer syntax error: proposition expected", cmd, cmd)
        return label, frozenset(tags)

    # -- proofs

    def run_proof(self, toks, goal, lemma_local):
        """Check a proof; returns the index just past the consumed tokens."""
        stack = [_Prove(set(goal), set())]
        blocks = []
        commands = _split_commands(toks)
        used = 0
        for ci, cmd in enumerate(commands):
            if self.deadline is not None and self.deadline.expired():
                raise TimedOut()
            if not stack:
                raise ProofError("Outer syntax error: command expected,\nbut "
                                 f"{cmd[0].text} was found", cmd[0])
            head = cmd[0]
            args = cmd[1:]
            kw = head.text
            if head.kind != IDENT and kw not in (".", ".."):
                raise ProofError(f"Outer syntax error: command expected,\nbut {kw} was found", head)
            used += len(cmd)
            top = stack[-1]
            try:
                if isinstance(top, _Prove):
                    self._prove_step(kw, head, args, stack, blocks, lemma_local)
                else:
                    self._block_step(kw, head, args, stack, blocks, lemma_local)
            except ProofError as e:
                if e.command is None:
                    e.command = head
                raise
        if stack:
            raise ProofError("Failed to finish proof", toks[-1] if toks else None,
                             toks[-1] if toks else None, goal=stack[-1].remaining if isinstance(stack[-1], _Prove)
                                 else blocks[-1].goal)
        return used

    def _facts_tags(self, facts, blocks, lemma_local):
        out = set()
        for name, tok in facts:
            out |= self.lookup(name, tok, blocks, lemma_local)
        return out

    def _apply(self, frame, use, blocks, lemma_local, head, must_progress):
        for s in use.sleeps:
            self._sleep(s)
        provided = self._facts_tags(use.facts, blocks, lemma_local) | frame.chained
        if use.facts or frame.chained:
            if must_progress and frame.remaining and not (provided & frame.remaining):
                raise ProofError("Failed to apply proof method", head, goal=frame.remaining)
            frame.remaining -= provided
        frame.chained = set()

    def _solved(self, stack, blocks):
        frame = stack.pop()
        if not frame.in_block:
            return
        block = blocks[-1]
        if frame.label:
            block.facts[frame.label] = frame.stmt_tags
        block.last = frame.stmt_tags
        if frame.is_show:
            if not frame.stmt_tags >= block.goal and block.goal:
                raise ProofError("Failed to refine any pending goal", None)
            block.shown = True

    def _prove_step(self, kw, head, args, stack, blocks, lemma_local):
        frame = stack[-1]
        if kw in ("using", "unfolding"):
            names = [(t.text, t) for t in args if t.kind == IDENT and t.text not in ("and",)]
            if not names:
                raise ProofError("Outer syntax error: fact expected", head)
            frame.chained |= self._facts_tags(names, blocks, lemma_local)
        elif kw == "apply":
            use = parse_method_args(args, min_methods=1, max_methods=1)
            self._apply(frame, use, blocks, lemma_local, head, must_progress=True)
        elif kw == "by":
            use = parse_method_args(args, min_methods=1, max_methods=2)
            self._apply(frame, use, blocks, lemma_local, head, must_progress=False)
            if frame.remaining:
                raise ProofError("Failed to finish proof", head, goal=frame.remaining)
            self._solved(stack, blocks)
        elif kw in ("done", "."):
            if args:
                raise ProofError(f"Outer syntax error: command expected,\nbut {args[0].text} was found", args[0])
            if kw == ".":
                frame.remaining -= frame.chained
            if frame.remaining:
                raise ProofError("Failed to finish proof", head, goal=frame.remaining)
            self._solved(stack, blocks)
        elif kw == "..":
            frame.remaining -= frame.chained
            if frame.remaining:
                raise ProofError("Failed to finish proof", head, goal=frame.remaining)
            self._solved(stack, blocks)
        elif kw == "proof":
            use = parse_method_args(args, max_methods=1)
            if use.methods != ["-"]:
                self._apply(frame, use, blocks, lemma_local, head, must_progress=False)
            chained = frozenset(frame.chained)
            frame.chained = set()
            blocks.append(_Block(goal=frozenset(frame.remaining), pending=chained or None))
            stack.append(blocks[-1])
        elif kw == "sorry":
            self._solved(stack, blocks)
        elif kw == "oops":
            stack.clear()
        elif kw in ("defer", "prefer", "back", "supply", "including"):
            pass
        else:
            raise ProofError("Illegal application of proof command in \"prove\" mode", head)

    def _block_step(self, kw, head, args, stack, blocks, lemma_local):
        block = stack[-1]
        if kw in GOAL_COMMANDS:
            chained = set()
            if kw in ("hence", "thus"):
                chained |= block.last or frozenset()
            if block.pending is not None:
                chained |= block.pending
            block.pending = None
            stmt = [t for t in args]
            if kw == "obtain":
                # obtain x where "..." : variables before 'where' are not part of the claim
                if any(t.text == "where" for t in stmt):
                    k = next(i for i, t in enumerate(stmt) if t.text == "where")
                    stmt = stmt[k + 1:]
            label, tags = self.goal_statement(stmt, block, head)
            stack.append(_Prove(set(tags), chained, label=label, stmt_tags=tags,
                                is_show=kw in ("show", "thus"), in_block=True))
        elif kw == "then":
            if args:
                raise ProofError(f"Outer syntax error: command expected,\nbut {args[0].text} was found", args[0])
            if block.last is None:
                raise ProofError("Illegal application of proof command: no facts to chain", head)
            block.pending = block.last
        elif kw in ("from", "with"):
            names = [(t.text, t) for t in args if t.kind == IDENT and t.text not in ("and", "this")]
            tags = set(self._facts_tags(names, blocks, lemma_local))
            if kw == "with" or any(t.text == "this" for t in args):
                tags |= block.last or frozenset()
            block.pending = frozenset(tags)
        elif kw == "note":
            if len(args) < 3 or args[1].text != "=":
                raise ProofError("Outer syntax error: fact expected", head)
            names = [(t.text, t) for t in args[2:] if t.kind == IDENT]
            block.facts[args[0].text] = frozenset(self._facts_tags(names, blocks, lemma_local))
            block.last = block.facts[args[0].text]
        elif kw in ("assume", "presume"):
            label, tags = self.goal_statement(args, block, head)
            if label:
                block.facts[label] = tags
            block.last = tags
        elif kw in ("moreover", "also"):
            if block.last is not None:
                block.collected.append(block.last)
        elif kw in ("ultimately", "finally"):
            acc = set()
            for c in block.collected + ([block.last] if block.last else []):
                acc |= c
            block.collected = []
            block.pending = frozenset(acc)
        elif kw in ("fix", "let", "case", "define", "next"):
            if kw == "next":
                block.last = None
        elif kw == "qed":
            use = parse_method_args(args, max_methods=1)
            for s in use.sleeps:
                self._sleep(s)
            blocks.pop()
            stack.pop()
            if not block.shown and block.goal:
                raise ProofError("Failed to finish proof", head, goal=block.goal)
            self._solved(stack, blocks)
        else:
            raise ProofError("Illegal application of proof command in \"state\" mode", head)

    # -- theory level

    def check(self):
        """Check the whole theory; returns CheckResult with exported facts."""
        try:
            theory = parse_theory(self.text, id=self.name)
        except CorpusError as e:
            return CheckResult(False, f"Outer syntax error: {e}")
        tokens = lexer.tokenize(self.text, self.lines)
        body, commands = _commands(theory, tokens)
        exported = {}
        try:
            sig_body = [t for t in body if t.kind != lexer.COMMENT]
            if commands and sig_body and sig_body[0].start < body[commands[0][0]].start:
                raise ProofError(f"Outer syntax error: command expected,\nbut {sig_body[0].text} was found", sig_body[0])
            if not commands and sig_body:
                raise ProofError(f"Outer syntax error: command expected,\nbut {sig_body[0].text} was found", sig_body[0])
            for s, e, _depth in commands:
                toks = [t for t in body[s:e] if t.kind != lexer.COMMENT]
                self.command(toks, exported)
        except ProofError as err:
            return CheckResult(False, self.render(err), exported)
        return CheckResult(True, "", exported)

    def render(self, err):
        msg = err.message
        syntax = msg.startswith("Outer syntax error")
        if err.tok is not None:
            first, _, rest = msg.partition("\n")
            if syntax:
                msg = f"Outer syntax error {self.where(err.tok)}" + msg[len("Outer syntax error"):]
            elif err.goal is not None:
                msg = f"{first} {self.where(err.tok)}:\n{_format_goal(err.goal)}"
            else:
                msg = f"{first} {self.where(err.tok)}" + (f"\n{rest}" if rest else "")
        cmd = err.command or err.tok
        if cmd is not None and not syntax:
            msg += f'\nAt command "{cmd.text}" {self.where(cmd)}'
        return msg

    def command(self, toks, exported):
        kw = toks[0].text
        self.scope.update(exported)
        if kw in LEMMA_KEYWORDS or kw in ("corollary", "proposition", "schematic_goal"):
            self.lemma(toks, exported)
        elif kw == "definition":
            self.definition(toks, exported)
        elif kw in ("fun", "primrec", "function"):
            names = [t.text for t in toks[1:] if t.kind == IDENT][:1]
            if names:
                exported[names[0] + ".simps"] = tags_of_tokens(toks) | {names[0]}
        elif kw in ("lemmas", "theorems"):
            if len(toks) < 4 or toks[2].text != "=":
                raise ProofError("Outer syntax error: fact expected", toks[0])
            names = [(t.text, t) for t in toks[3:] if t.kind == IDENT]
            exported[toks[1].text] = frozenset(self._facts_tags(names, [], {}))

    def definition(self, toks, exported):
        idents = [t for t in toks[1:] if t.kind == IDENT and t.text not in ("where", "is")]
        strings = [t for t in toks if t.kind in (STRING, CARTOUCHE)]
        if not strings:
            raise ProofError("Outer syntax error: proposition expected", toks[0])
        eq = strings[-1]
        if idents:
            name = idents[0].text
        else:
            # "definition "c x == ..."": the constant is the head of the equation
            words = _WORD.findall(lexer.unquote(eq))
            name = words[0] if words else None
        if name:
            exported[name + "_def"] = term_tags(lexer.unquote(eq)) | {name}

    def lemma(self, toks, exported):
        head = lemma_header(self.text, toks)
        if head is None:
            raise ProofError("Outer syntax error: unbalanced parentheses", toks[0])
        stop = head.proof_index if head.proof_index is not None else len(toks)
        goal, local = self.statement(toks[head.statement_index:stop])
        if head.proof_index is None:
            last = toks[-1]
            raise ProofError("Failed to finish proof", last, toks[0], goal=goal)
        proof = toks[head.proof_index:]
        used = self.run_proof(proof, goal, local)
        if used < len(proof):
            extra = proof[used]
            raise ProofError(f"Outer syntax error: command expected,\nbut {extra.text} was found", extra)
        if head.name and not any(t.text == "oops" for t in proof):
            exported[head.name] = goal


def check_theory(name, text, scope, deadline=None):
    return TheoryChecker(name, text, scope, deadline).check()


def normalize_scope(facts_in_scope):
    """Accept either ``{name: tags}`` or a bare iterable of fact names."""
    if isinstance(facts_in_scope, Mapping):
        return {k: frozenset(v) for k, v in facts_in_scope.items()}
    return {name: frozenset() for name in facts_in_scope or ()}
