"""Exception hierarchy shared across the toolkit."""


class IsoproofError(Exception):
    pass


class CorpusError(IsoproofError):
    """Problems in the corpus itself (parse failures, bad references)."""


class MalformedStanza(CorpusError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"malformed session stanza at line {line}" + (f": {detail}" if detail else ""))


class MissingHeader(CorpusError):
    pass


class UnterminatedTheory(CorpusError):
    pass


class UnterminatedProof(CorpusError):
    def __init__(self, line, theory_id=None):
        self.line = line
        self.theory_id = theory_id
        where = f"{theory_id}:" if theory_id else "line "
        super().__init__(f"unterminated proof for lemma starting at {where}{line}")


class UnresolvedImport(CorpusError):
    def __init__(self, name, site):
        self.name = name
        self.site = site
        super().__init__(f"unresolved import {name!r} in {site}")


class UnresolvedSession(CorpusError):
    def __init__(self, name, site):
        self.name = name
        self.site = site
        super().__init__(f"unresolved session {name!r} referenced by {site}")


class DependencyCycle(CorpusError):
    def __init__(self, path):
        self.path = list(path)
        super().__init__("dependency cycle: " + " -> ".join(self.path))


class UnknownTheory(IsoproofError, KeyError):
    def __init__(self, theory_id):
        self.theory_id = theory_id
        IsoproofError.__init__(self, f"unknown theory {theory_id!r}")

    def __str__(self):
        return self.args[0]


class LemmaExcluded(IsoproofError):
    pass


class TheoryNotInGraph(IsoproofError):
    pass


class MissingPlaceholder(IsoproofError):
    pass


class SpliceCollision(IsoproofError):
    pass


class ExecutableNotFound(IsoproofError):
    pass


class EmptyQuery(IsoproofError, ValueError):
    pass


class NoCandidate(IsoproofError):
    pass


class EndpointError(IsoproofError):
    pass


class AuthError(EndpointError):
    pass


class TransportError(EndpointError):
    pass


class ResponseMalformed(EndpointError):
    pass


class ConfigError(IsoproofError):
    pass
