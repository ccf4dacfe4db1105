"""Key element extraction: LLM-backed with a deterministic rule-based fallback.

The fallback is intentionally simple (English stopword and verb-suffix
heuristics); the LLM path is the quality path. Both always return exactly
``n`` elements, padding with the full prompt when the text is too short.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

from .errors import BackendUnavailable, EmptyElement, EmptyPrompt

_STOPWORDS = {
    "a", "an", "the", "this", "that", "these", "those", "some", "any",
    "and", "or", "but", "nor", "so", "yet", "of", "in", "on", "at", "by",
    "to", "from", "with", "without", "into", "onto", "over", "under",
    "through", "across", "between", "against", "about", "around", "near",
    "is", "are", "was", "were", "be", "been", "being", "am",
    "has", "have", "had", "do", "does", "did", "will", "would", "can",
    "could", "shall", "should", "may", "might", "must",
    "he", "she", "it", "they", "we", "you", "i", "his", "her", "its",
    "their", "our", "your", "my", "while", "as", "for", "very", "not",
    "there", "here", "where", "when", "who", "which", "whose",
}

_VERB_SUFFIXES = ("ing", "ed", "es")


@dataclass(frozen=True)
class KeyElement:
    index: int
    phrase: str
    source: str  # "llm" | "fallback" | "user"


@dataclass(frozen=True)
class ExtractionRequest:
    prompt: str
    n: int = 3
    backend: "LlmBackend | None" = None


class LlmBackend(Protocol):
    def complete(self, instruction: str) -> str: ...


def _instruction(prompt: str, n: int) -> str:
    return (
        f"Extract the {n} key visual elements from the following text, "
        "most important first. Reply with a numbered list only, one short "
        f"phrase per line.\n\nText: {prompt}"
    )


_NUMBERED = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


def parse_numbered_list(text: str) -> list[str] | None:
    """Parse a strict numbered list; None if any non-blank line deviates."""
    phrases = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _NUMBERED.match(line)
        if not m:
            return None
        phrases.append(m.group(1))
    return phrases or None


def _tokenize(prompt: str) -> list[str]:
    return re.findall(r"[A-Za-z][A-Za-z'-]*", prompt)


def fallback_elements(prompt: str, n: int) -> list[str]:
    """Deterministic noun-ish phrase extraction.

    Consecutive capitalized tokens merge into one name. Candidates are
    ranked capitalized-first, then by position; short prompts pad with the
    whole prompt text.
    """
    tokens = _tokenize(prompt)
    candidates = []  # (capitalized, position, phrase)
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok[0].isupper():
            j = i
            while j + 1 < len(tokens) and tokens[j + 1][0].isupper():
                j += 1
            candidates.append((0, i, " ".join(tokens[i:j + 1])))
            i = j + 1
            continue
        low = tok.lower()
        if low not in _STOPWORDS and not low.endswith(_VERB_SUFFIXES):
            candidates.append((1, i, tok))
        i += 1

    ranked = [phrase for _, _, phrase in sorted(candidates, key=lambda c: (c[0], c[1]))]
    ranked = ranked[:n]
    while len(ranked) < n:
        ranked.append(prompt.strip())
    return ranked


def extract_elements(req: ExtractionRequest) -> list[KeyElement]:
    """Extract exactly ``req.n`` elements, ordered by importance."""
    prompt = req.prompt.strip()
    if not prompt:
        raise EmptyPrompt("prompt must be non-empty")
    if req.n < 1:
        raise ValueError("n must be >= 1")

    phrases = None
    source = "fallback"
    if req.backend is not None:
        phrases = _ask_llm(req.backend, prompt, req.n)
        if phrases is not None:
            source = "llm"
    if phrases is None:
        phrases = fallback_elements(prompt, req.n)

    phrases = [p for p in phrases if p.strip()][:req.n]
    elements = [KeyElement(index=i, phrase=p.strip(), source=source) for i, p in enumerate(phrases)]
    # pad via the fallback when the LLM under-delivers
    if len(elements) < req.n:
        pad = fallback_elements(prompt, req.n)
        for i in range(len(elements), req.n):
            elements.append(KeyElement(index=i, phrase=pad[i], source="fallback"))
    return elements


def _ask_llm(backend: LlmBackend, prompt: str, n: int) -> list[str] | None:
    # one reprompt on malformed output, then give up to the fallback
    for _ in range(2):
        try:
            reply = backend.complete(_instruction(prompt, n))
        except BackendUnavailable:
            return None
        phrases = parse_numbered_list(reply)
        if phrases is not None:
            return phrases
    return None


def override_elements(elements: list) -> list[KeyElement]:
    """Adopt user-specified elements verbatim; N becomes len(elements)."""
    if not elements:
        raise EmptyElement("need at least one element")
    out = []
    for i, phrase in enumerate(elements):
        if not str(phrase).strip():
            raise EmptyElement(f"element {i} is empty")
        out.append(KeyElement(index=i, phrase=str(phrase).strip(), source="user"))
    return out
