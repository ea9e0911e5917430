"""Turn an Isabelle-style proof corpus into an isolated-lemma benchmark and
evaluate LLM proof generation on it."""

__version__ = "0.1.0"
