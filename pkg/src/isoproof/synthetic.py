"""Generator for a small multi-session corpus in ROOT/theory syntax.

The corpus is built so the mock prover can check it: every constant is a
predicate whose name doubles as a goal tag, lemma statements mention a set of
such constants, and proofs apply definitions or earlier lemmas that cover
exactly those tags. The generator labels every lemma itself (category, style,
line count, redundant proof lines), which gives tests an oracle that does not
depend on the parser or the prover under test.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path

SESSION_NAMES = ["SynLib", "SynSpec", "SynInvs", "SynRefine", "SynImpl", "SynCorres"]
SESSION_DIRS = ["lib", "spec", "invs", "refine", "impl", "corres"]
THEORY_STEMS = {
    "SynLib": ["Lib_Words", "Lib_Lists", "Lib_Monads", "Lib_Hoare", "Lib_Misc"],
    "SynSpec": ["Spec_Types", "Spec_Objects", "Spec_Kernel", "Spec_Sched", "Spec_Ipc"],
    "SynInvs": ["Invs_Base", "Invs_Objects", "Invs_Tcb", "Invs_Untyped", "Invs_Ipc"],
    "SynRefine": ["Refine_Base", "Refine_Corres", "Refine_Tcb", "Refine_Sched", "Refine_Ipc"],
}
ADJECTIVES = ["valid", "aligned", "wf", "live", "idle", "active", "bound", "distinct", "sane",
              "tidy", "safe", "fresh", "sound", "ready", "clean", "mapped", "owned", "kept"]
NOUNS = ["cap", "obj", "slot", "ref", "tcb", "ntfn", "ep", "irq", "asid", "pde", "pte", "frame",
         "page", "cnode", "untyped", "domain", "prio", "badge", "rights", "queue", "thread",
         "reply", "mask", "bits", "ptr", "word", "list", "heap", "state", "sched"]
VARIABLES = ["x", "s", "p", "n", "w"]
FILLERS = ["apply clarsimp", "apply safe", "apply simp", "apply (cases s)", "apply wpsimp"]
P_METHODS = ["simp add: {}", "clarsimp simp: {}", "auto simp: {}", "wp {}", "rule {}",
             "fastforce simp: {}", "unfold {}", "erule {}", "frule {}"]
BY_METHODS = ["simp add: {}", "clarsimp simp: {}", "auto simp: {}", "fastforce simp: {}",
              "metis {}", "blast intro: {}", "force simp: {}"]
CONNECTIVES = [" \\<and> ", " \\<longrightarrow> ", " \\<and> ", " = "]

EXCLUDED_KINDS = ("oops", "sorry", "context", "in_locale", "long_procedural", "long_declarative")
# planted once each, after the regular lemmas of some theory
PLANTED_KINDS = EXCLUDED_KINDS + ("anon",)


@dataclass
class SyntheticParams:
    sessions: int = 4
    theories_per_session: int = 4
    lemmas_per_theory: int = 7
    seed: int = 0

    def __post_init__(self):
        if min(self.sessions, self.theories_per_session, self.lemmas_per_theory) < 1:
            raise ValueError("synthetic corpus sizes must be >= 1")
        if self.sessions > len(SESSION_NAMES):
            raise ValueError(f"at most {len(SESSION_NAMES)} sessions supported")


@dataclass
class Fact:
    name: str
    tags: frozenset
    theory: str  # session-qualified theory id that declares it


@dataclass
class GoldenLemma:
    id: str
    name: str
    theory_id: str
    category: str
    style: str
    proof_line_count: int
    in_locale: bool
    terminator: str
    attributes: list
    facts: list  # fact names the groundtruth applies
    redundant_lines: list  # 1-based proof lines whose deletion keeps the proof valid


@dataclass
class _Theory:
    session: str
    name: str
    directory: str
    imports: list  # import strings as written
    closure: set  # theory ids visible (including itself)
    text: str = ""

    @property
    def id(self):
        return f"{self.session}.{self.name}"


class Generator:
    def __init__(self, params: SyntheticParams):
        self.p = params
        self.rng = random.Random(params.seed)
        self.facts_by_theory = {}  # theory id -> list of Fact (in declaration order)
        self.used_names = set()
        self.golden = []
        self.theories = []
        self.anon_count = {}

    # -- naming

    def fresh_constant(self):
        for _ in range(1000):
            name = f"{self.rng.choice(ADJECTIVES)}_{self.rng.choice(NOUNS)}"
            if name not in self.used_names:
                self.used_names.add(name)
                return name
        k = len(self.used_names)
        name = f"pred_{k}"
        self.used_names.add(name)
        return name

    def fresh_lemma_name(self, tags):
        base = self.rng.choice(sorted(tags))
        suffixes = ["lift", "inv", "imp", "helper", "eq", "step", "mono", "simp", "cases", "split",
                    "weak", "strong", "intro", "elim", "pres", "ex"]
        for _ in range(200):
            name = f"{base}_{self.rng.choice(suffixes)}"
            if name not in self.used_names:
                self.used_names.add(name)
                return name
        k = 2
        while f"{base}_{k}" in self.used_names:
            k += 1
        self.used_names.add(f"{base}_{k}")
        return f"{base}_{k}"

    # -- structure

    def sessions(self):
        out = []
        for i in range(self.p.sessions):
            name = SESSION_NAMES[i]
            parent = SESSION_NAMES[i - 1] if i else "HOL"
            imported = [SESSION_NAMES[j] for j in range(i - 2, -1, -1)] if i >= 2 else []
            stems = THEORY_STEMS.get(name, [f"{name[3:]}_T{k}" for k in range(8)])
            theories = [stems[k] if k < len(stems) else f"{name[3:]}_Extra{k}"
                        for k in range(self.p.theories_per_session)]
            out.append((name, SESSION_DIRS[i], parent, imported, theories))
        return out

    def visible_facts(self, theory):
        facts = []
        for tid in sorted(theory.closure):
            if tid != theory.id:
                facts.extend(self.facts_by_theory.get(tid, []))
        facts.extend(self.facts_by_theory.get(theory.id, []))
        return facts

    # -- text pieces

    def statement(self, tags, var):
        tags = list(tags)
        self.rng.shuffle(tags)
        parts = [f"{t} {var}" for t in tags]
        text = parts[0]
        for k, part in enumerate(parts[1:], 1):
            sep = self.rng.choice(CONNECTIVES)
            if k % 4 == 0:
                sep = sep.rstrip() + "\n     "
            text += sep + part
        return f'"{text}"'

    def definition(self, theory):
        c = self.fresh_constant()
        visible = [f for f in self.visible_facts(theory) if f.name.endswith("_def")]
        tags = {c}
        rhs = f"{self.rng.randint(1, 9)} < x"
        if visible and self.rng.random() < 0.35:
            other = self.rng.choice(visible)
            base = other.name[:-4]
            rhs = f"{base} x \\<and> {rhs}"
            tags.add(base)
        text = (f'definition {c} :: "nat \\<Rightarrow> bool" where\n'
                f'  "{c} x \\<equiv> {rhs}"')
        return text, Fact(f"{c}_def", frozenset(tags), theory.id)

    def cover(self, theory, size):
        """Pick facts with pairwise disjoint tag sets; the goal is their union.

        Disjointness makes every fact essential: dropping one leaves its tags
        uncovered.
        """
        pool = self.visible_facts(theory)
        defs = {f.name[:-4]: f for f in pool if f.name.endswith("_def")}
        if not defs:
            return None
        seeds = self.rng.sample(sorted(defs), min(size, len(defs)))
        chosen, covered = [], set()
        for t in seeds:
            if t in covered:
                continue
            lemmas = [f for f in pool if t in f.tags and not f.name.endswith("_def")
                      and len(f.tags) >= 2 and not f.tags & covered]
            if lemmas and self.rng.random() < 0.45:
                pick = self.rng.choice(lemmas)
            elif not defs[t].tags & covered:
                pick = defs[t]
            else:
                continue
            chosen.append(pick)
            covered |= pick.tags
        if not chosen:
            return None
        return frozenset(covered), chosen

    # -- proofs

    def procedural_lines(self, chosen, n_lines, final_by):
        """Spread the chosen facts over apply lines, pad with fact-free fillers."""
        groups = [[f] for f in chosen]
        while len(groups) > 1 and len(groups) + 1 > n_lines:
            a = groups.pop()
            groups[-1].extend(a)
        lines = []
        essential = []
        budget = n_lines - len(groups) - (0 if final_by else 1)
        for k, group in enumerate(groups):
            names = " ".join(f.name for f in group)
            last = final_by and k == len(groups) - 1
            if last:
                meth = self.rng.choice(BY_METHODS).format(names)
                lines.append(f"  by ({meth})")
            else:
                tmpl = self.rng.choice(P_METHODS)
                if tmpl in ("rule {}", "erule {}", "frule {}") and len(group) > 1:
                    tmpl = "simp add: {}"
                if tmpl == "unfold {}" and not all(f.name.endswith("_def") for f in group):
                    tmpl = "clarsimp simp: {}"
                meth = tmpl.format(names)
                if len(group) >= 2 and budget > 0 and self.rng.random() < 0.3:
                    budget -= 1
                    head, tail = group[0].name, " ".join(f.name for f in group[1:])
                    lines.append(f"  apply ({tmpl.format(head)}")
                    lines.append(f"         {tail})")
                    essential += [len(lines) - 1, len(lines)]
                    continue
                lines.append(f"  apply ({meth})")
            essential.append(len(lines))
        if not final_by:
            lines.append("  done")
            essential.append(len(lines))
        # fillers never go after the terminator
        slots = len(lines) - 1
        while len(lines) < n_lines:
            pos = self.rng.randint(0, slots)
            lines.insert(pos, "  " + self.rng.choice(FILLERS))
            slots += 1
        redundant = [i + 1 for i, l in enumerate(lines) if l.strip() in FILLERS]
        return lines, redundant

    def declarative_lines(self, chosen, goal, var, target_lines):
        lines = ["proof -"]
        labels = []
        n_split = max(0, target_lines - len(chosen) - 3)
        split_at = set(self.rng.sample(range(len(chosen)), min(n_split, len(chosen))))
        style = self.rng.choice(["labels", "labels", "moreover"])
        if len(chosen) < 2:
            style = "labels"
        for k, f in enumerate(chosen):
            stmt = self.statement(sorted(f.tags), var)
            meth = self.rng.choice(BY_METHODS).format(f.name)
            split = k in split_at
            if style == "moreover":
                prefix = "have" if k == 0 else "moreover have"
                head = f"  {prefix} {stmt}"
            else:
                label = f"h{k + 1}"
                labels.append(label)
                head = f"  have {label}: {stmt}"
            if split:
                lines.append(head)
                lines.append(f"    by ({meth})")
            else:
                lines.append(f"{head} by ({meth})")
        if style == "moreover":
            lines.append("  ultimately show ?thesis by simp")
        elif self.rng.random() < 0.5:
            lines.append(f"  show ?thesis using {' '.join(labels)} by simp")
        else:
            lines.append(f"  show ?thesis by (simp add: {' '.join(labels)})")
        lines.append("qed")
        return lines, []

    def long_declarative(self, chosen, var):
        lines = ["proof -"]
        labels = []
        for k in range(22):
            f = chosen[k % len(chosen)]
            label = f"h{k + 1}"
            labels.append(label)
            lines.append(f"  have {label}: {self.statement(sorted(f.tags), var)} by (simp add: {f.name})")
        lines.append(f"  show ?thesis using {' '.join(labels)} by simp")
        lines.append("qed")
        return lines

    # -- lemmas

    def lemma(self, theory, kind):
        """Emit one lemma of ``kind`` (a category or an excluded kind); None if the pool is too small."""
        sizes = {"P1": (1, 3), "anon": (1, 2), "P2": (1, 4), "P3": (4, 10), "D": (2, 5),
                 "long_procedural": (3, 8)}
        lo, hi = sizes.get(kind, (2, 5))
        got = self.cover(theory, self.rng.randint(lo, hi))
        if got is None:
            return None
        goal, chosen = got
        if kind == "P3" and len(chosen) < 2:
            return None
        if kind == "D" and len(chosen) < 1:
            return None
        var = self.rng.choice(VARIABLES)
        name = self.fresh_lemma_name(goal) if kind != "anon" else None
        keyword = "theorem" if self.rng.random() < 0.1 else "lemma"
        attrs = self.rng.choice([[], [], [], ["simp"], ["wp"], ["intro"]])
        attr_text = f"[{', '.join(attrs)}]" if attrs else ""
        stmt = self.statement(sorted(goal), var)
        in_locale = False
        terminator = None
        redundant = []
        exported = True
        if kind in ("P1", "anon"):
            names = " ".join(f.name for f in chosen)
            if len(chosen) == 1 and not chosen[0].name.endswith("_def") and self.rng.random() < 0.5:
                lines = [f"  by (rule {names})"]
            else:
                lines = [f"  by ({self.rng.choice(BY_METHODS).format(names)})"]
            style, category, terminator = "procedural", "P1", "by"
        elif kind in ("P2", "P3", "long_procedural", "oops"):
            if kind == "P2":
                n = self.rng.randint(2, 6)
            elif kind == "P3":
                n = self.rng.randint(7, max(7, min(20, 2 * len(chosen) + 4)))
            elif kind == "long_procedural":
                n = self.rng.randint(21, 24)
            else:
                n = self.rng.randint(2, 4)
            final_by = kind in ("P2", "P3") and self.rng.random() < 0.3
            lines, redundant = self.procedural_lines(chosen, n, final_by)
            if kind == "oops":
                lines[-1] = "  oops"
                exported = False
            style = "procedural"
            terminator = "oops" if kind == "oops" else ("by" if final_by else "done")
            category = kind if kind in ("P2", "P3") else "excluded"
        elif kind == "D":
            target = self.rng.randint(len(chosen) + 3, min(20, 2 * len(chosen) + 3))
            lines, redundant = self.declarative_lines(chosen, goal, var, target)
            style, category, terminator = "declarative", "D", "qed"
        elif kind == "long_declarative":
            lines = self.long_declarative(chosen, var)
            style, category, terminator = "declarative", "excluded", "qed"
        elif kind == "sorry":
            lines = ["  sorry"]
            style, category, terminator = "procedural", "excluded", "sorry"
            exported = False
        elif kind in ("context", "in_locale"):
            names = " ".join(f.name for f in chosen)
            lines = [f"  by (simp add: {names})"]
            style, category, terminator = "procedural", "excluded", "by"
            in_locale = True
            exported = False
        else:
            raise ValueError(kind)
        locale = _locale_name(theory)
        if name is None:
            head = f"{keyword} {stmt}"
            attrs = []
            self.anon_count[theory.id] = self.anon_count.get(theory.id, 0) + 1
            name = f"anon#{self.anon_count[theory.id]}"
            exported = False
        elif kind == "in_locale":
            head = f"{keyword} (in {locale}) {name}{attr_text}: {stmt}"
        else:
            head = f"{keyword} {name}{attr_text}: {stmt}"
        text = head + "\n" + "\n".join(lines)
        if kind == "context":
            text = f"context {locale}\nbegin\n\n" + text + "\n\nend"
        if exported:
            self.facts_by_theory.setdefault(theory.id, []).append(Fact(name, goal, theory.id))
        count = sum(1 for l in "\n".join(lines).splitlines() if l.strip())
        self.golden.append(GoldenLemma(
            id=f"{theory.id}.{name}", name=name, theory_id=theory.id, category=category,
            style=style, proof_line_count=count, in_locale=in_locale, terminator=terminator,
            attributes=attrs, facts=[f.name for f in chosen], redundant_lines=redundant))
        return text

    # -- theories

    def theory_text(self, theory, excluded_here):
        rng = self.rng
        chunks = []
        header_imports = theory.imports or ["Main"]
        if len(header_imports) > 1 and rng.random() < 0.5:
            imports = "imports\n" + "\n".join(f"  {_quote(i)}" for i in header_imports)
            header = f"theory {theory.name}\n{imports}\nbegin"
        else:
            header = f"theory {theory.name}\n  imports {' '.join(_quote(i) for i in header_imports)}\nbegin"
        chunks.append(header)
        chunks.append(f"section \\<open>{theory.name.replace('_', ' ')}\\<close>")
        if rng.random() < 0.5:
            chunks.append("(* lemma decoy_in_comment: \"False\" by simp *)")
        pending_defs = rng.randint(3, 5)

        def emit_definition():
            text, fact = self.definition(theory)
            self.facts_by_theory.setdefault(theory.id, []).append(fact)
            chunks.append(text)

        # definitions are interleaved with the first lemmas
        for _ in range(2):
            emit_definition()
            pending_defs -= 1
        if "context" in excluded_here or "in_locale" in excluded_here:
            chunks.append(f'locale {_locale_name(theory)} =\n  fixes bound :: "nat"\n  assumes bound_pos: "0 < bound"')
        kinds = self.lemma_kinds()
        for k, kind in enumerate(kinds):
            if pending_defs and k % 2 == 1:
                emit_definition()
                pending_defs -= 1
            text = self.lemma(theory, kind)
            if text is None:
                text = self.lemma(theory, "P1")
            if text is not None:
                chunks.append(text)
        for _ in range(pending_defs):
            emit_definition()
        for kind in excluded_here:
            text = self.lemma(theory, kind)
            if text is not None:
                chunks.append(text)
        if rng.random() < 0.3:
            chunks.append("text \\<open>A lemma mentioned in prose: lemma not_real: \"True\" by simp.\\<close>")
        chunks.append("end")
        return "\n\n".join(chunks) + "\n"

    def lemma_kinds(self):
        n = self.p.lemmas_per_theory
        base = ["P1", "P2", "P3", "D"]
        kinds = [base[k % 4] for k in range(n)]
        self.rng.shuffle(kinds)
        # weight towards the smaller categories like real corpora
        return [("P1" if k in ("P3",) and self.rng.random() < 0.3 else k) for k in kinds]

    def generate(self):
        sessions = self.sessions()
        last_theory = {}
        ids = {}
        all_theories = []
        excluded_plan = {}
        # spread the excluded kinds over the corpus deterministically
        slots = [(s, t) for s in range(len(sessions)) for t in range(self.p.theories_per_session)]
        for k, kind in enumerate(PLANTED_KINDS):
            slot = slots[(k * 5 + 2) % len(slots)]
            excluded_plan.setdefault(slot, []).append(kind)
        for si, (sname, sdir, parent, imported, theories) in enumerate(sessions):
            visible_sessions = [parent] + imported
            for ti, tname in enumerate(theories):
                imports = []
                closure = set()
                if ti == 0:
                    if parent in last_theory:
                        imports.append(f"{parent}.{last_theory[parent].name}")
                        closure |= last_theory[parent].closure
                    for other in imported:
                        if other in last_theory and self.rng.random() < 0.5:
                            th = self.rng.choice([t for t in all_theories if t.session == other])
                            imports.append(th.name if self.rng.random() < 0.5 else f"{other}.{th.name}")
                            closure |= th.closure
                else:
                    prev = ids[(sname, theories[ti - 1])]
                    imports.append(prev.name)
                    closure |= prev.closure
                    if ti >= 2 and self.rng.random() < 0.5:
                        extra = ids[(sname, theories[self.rng.randint(0, ti - 2)])]
                        imports.append(extra.name)
                        closure |= extra.closure
                    ancestors = [t for t in all_theories if t.session in visible_sessions]
                    if ancestors and self.rng.random() < 0.4:
                        th = self.rng.choice(ancestors)
                        if th.id not in closure:
                            imports.append(f"{th.session}.{th.name}")
                            closure |= th.closure
                th = _Theory(sname, tname, sdir, imports, closure | {f"{sname}.{tname}"})
                ids[(sname, tname)] = th
                all_theories.append(th)
                th.text = self.theory_text(th, excluded_plan.get((si, ti), []))
            last_theory[sname] = ids[(sname, theories[-1])]
        self.theories = all_theories
        return sessions, all_theories


def _locale_name(theory):
    return f"{theory.name.lower()}_ctx"


def _quote(name):
    return f'"{name}"' if "." in name or "/" in name else name


def root_texts(sessions, theories):
    """ROOT files: the library session gets its own file, the rest share the top one."""
    files = {}
    top = []
    for name, sdir, parent, imported, entries in sessions:
        entry = entries if name != "SynSpec" else entries[-1:]
        body = [f"session {name} = {parent} +"]
        if name == "SynRefine":
            body.append('  description "Refinement layer of the synthetic corpus."')
        if imported:
            body.append("  sessions\n" + "\n".join(f"    {s}" for s in imported))
        body.append("  theories\n" + "\n".join(f"    {t}" for t in entry))
        if name == SESSION_NAMES[0]:
            files[f"{sdir}/ROOT"] = "\n".join(body) + "\n"
        else:
            body[0] = f"session {name} in {sdir} = {parent} +"
            top.append("\n".join(body) + "\n")
    files["ROOT"] = "chapter Synthetic\n\n" + "\n".join(top)
    return files


def generate_corpus(out_dir, params: SyntheticParams | None = None):
    """Write the corpus under ``out_dir`` and return the golden lemma list."""
    params = params or SyntheticParams()
    gen = Generator(params)
    sessions, theories = gen.generate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rel, text in root_texts(sessions, theories).items():
        (out / rel).parent.mkdir(parents=True, exist_ok=True)
        (out / rel).write_text(text, encoding="utf-8")
    for th in theories:
        path = out / th.directory / f"{th.name}.thy"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(th.text, encoding="utf-8")
    counts = {}
    for g in gen.golden:
        counts[g.category] = counts.get(g.category, 0) + 1
    golden = {"params": asdict(params), "counts": dict(sorted(counts.items())),
              "sessions": [s[0] for s in sessions], "theories": [th.id for th in theories],
              "lemmas": [asdict(g) for g in sorted(gen.golden, key=lambda g: g.id)]}
    (out / "golden.json").write_text(json.dumps(golden, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return golden


def load_golden(corpus_dir):
    return json.loads((Path(corpus_dir) / "golden.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# scripted model replies for offline end-to-end runs

FIXTURE_OUTCOMES = (
    # (outcome, weight)
    ("groundtruth", 40),
    ("undefined_then_fixed", 15),
    ("unfinished_then_fixed", 10),
    ("unfinished_twice", 8),
    ("refusal", 6),
    ("sorry", 6),
    ("syntax", 7),
    ("too_long", 8),
)


def fixture_reply(outcome, lemma):
    """(first-round reply, fixing-round reply) for one scripted outcome."""
    gt = lemma.proof_text.strip("\n")
    ghost = f"by (simp add: {lemma.name.split('#')[0]}_aux_def)"
    if outcome == "groundtruth":
        return gt, gt
    if outcome == "undefined_then_fixed":
        return ghost, gt
    if outcome == "unfinished_then_fixed":
        return "by simp", gt
    if outcome == "unfinished_twice":
        return "by simp", "by auto"
    if outcome == "refusal":
        return "Sorry, I cannot assist with this request.", gt
    if outcome == "sorry":
        return "apply auto\n  sorry", gt
    if outcome == "syntax":
        return "by (simp add:", "by (simp add: )"
    if outcome == "too_long":
        return "apply simp\n" + " ".join(["apply (simp)"] * 1100), gt
    raise ValueError(outcome)


def fixture_script(lemmas, seed=0):
    """Scripted endpoint replies keyed by lemma name; deterministic in ``seed``.

    Returns ``(script, outcomes)`` where ``outcomes`` maps lemma id to the
    planted outcome. Lemmas whose key is shared by several lemmas are left
    to the fallback entry (an empty reply).
    """
    from .evaluation.endpoint import script_key

    rng = random.Random(f"fixture:{seed}")
    names, weights = zip(*FIXTURE_OUTCOMES)
    keys = {}
    for lem in sorted(lemmas, key=lambda l: l.id):
        keys.setdefault(script_key(lem.statement), []).append(lem)
    script, outcomes = {}, {}
    for key, group in sorted(keys.items()):
        outcome = rng.choices(names, weights)[0]
        if len(group) > 1:
            continue
        first, fixing = fixture_reply(outcome, group[0])
        script[key] = {"first": [first], "fixing": [fixing]}
        outcomes[group[0].id] = outcome
    return script, outcomes
