"""Name and address pools, from the bundled offline corpus or an LLM chat endpoint.

Pools are keyed by tuples of strings:

* ``("given_names", (ethnicity, sex, language))``
* ``("surnames", (ethnicity, "*", language))``
* ``("addresses", (region,))``

Fetched pools are cached on disk as JSON so reruns are reproducible offline.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

POOL_KINDS = ("given_names", "surnames", "addresses")
DEFAULT_MIN_ENTRIES = 40

LANGUAGE_NAMES = {"en": "English", "es": "Spanish", "fr": "French", "de": "German", "it": "Italian"}

_NAME_RE = re.compile(r"^[^\W\d_]+(?:[ '\-][^\W\d_]+)*$")
_ADDRESS_RE = re.compile(r"^\d{1,4} .+, .+$")
_LIST_PREFIX = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


class PoolError(RuntimeError):
    pass


@dataclass(frozen=True)
class TextPool:
    kind: str
    key: tuple[str, ...]
    entries: tuple[str, ...]
    provenance: str  # "llm" or "offline_corpus"

    def __post_init__(self):
        if not self.entries:
            raise PoolError(f"empty pool {self.kind} {self.key}")
        if len(set(self.entries)) != len(self.entries):
            raise PoolError(f"pool {self.kind} {self.key} has duplicates")

    def __len__(self) -> int:
        return len(self.entries)


def dedupe(entries) -> list[str]:
    seen, out = set(), []
    for e in entries:
        e = e.strip()
        if e and e not in seen:
            seen.add(e)
            out.append(e)
    return out


class OfflineCorpus:
    """names.csv (ethnicity,sex,language,given,surname) + addresses.csv (region,line)."""

    provenance = "offline_corpus"

    def __init__(self, directory: str | Path | None = None):
        if directory is None:
            base = resources.files("idsynth") / "data"
            names_text = (base / "names.csv").read_text()
            addr_text = (base / "addresses.csv").read_text()
        else:
            directory = Path(directory)
            names_text = (directory / "names.csv").read_text()
            addr_text = (directory / "addresses.csv").read_text()
        self.names = list(csv.DictReader(names_text.splitlines()))
        self.addresses = list(csv.DictReader(addr_text.splitlines()))

    def fetch(self, kind: str, key: tuple[str, ...]) -> list[str]:
        if kind == "given_names":
            eth, sex, lang = key
            return [r["given"] for r in self.names if (r["ethnicity"], r["sex"], r["language"]) == (eth, sex, lang)]
        if kind == "surnames":
            eth, _, lang = key
            return [r["surname"] for r in self.names if (r["ethnicity"], r["language"]) == (eth, lang)]
        if kind == "addresses":
            (region,) = key
            return [r["line"] for r in self.addresses if r["region"] == region]
        raise PoolError(f"unknown pool kind {kind!r}")

    def ethnicities(self) -> list[str]:
        return sorted({r["ethnicity"] for r in self.names})


def build_prompt(kind: str, key: tuple[str, ...], count: int = 50) -> str:
    if kind == "given_names":
        eth, sex, lang = key
        sex_word = {"M": "male", "F": "female"}.get(sex, sex)
        return f"Please generate {count} distinct {LANGUAGE_NAMES.get(lang, lang)} first names for {eth} {sex_word}"
    if kind == "surnames":
        eth, _, lang = key
        return f"Please generate {count} distinct {LANGUAGE_NAMES.get(lang, lang)} last names for {eth} families"
    if kind == "addresses":
        (region,) = key
        return (
            f"Please generate {count} fictional {region} addresses. First, the city name was generated based on "
            "the state and postal code. Second, a street name was generated in the previously generated city. "
            "Third, a random number was generated with one, two, three, or four digits as the street number. "
            'Lastly, combine the above information in the format "{street number} {street name}, {city}, '
            '{state} {postal code}". Answer with one address per line and nothing else.'
        )
    raise PoolError(f"unknown pool kind {kind!r}")


def parse_completion(kind: str, content: str) -> list[str]:
    """Parse a JSON list or a newline list (numbered/bulleted) and validate every entry."""
    content = content.strip()
    items = None
    if content.startswith("["):
        try:
            items = json.loads(content)
        except json.JSONDecodeError:
            items = None
        if items is not None and not all(isinstance(i, str) for i in items):
            raise PoolError("JSON completion must be a list of strings")
    if items is None:
        items = [_LIST_PREFIX.sub("", line).strip().strip('"') for line in content.splitlines()]
        items = [i for i in items if i]
    pattern = _ADDRESS_RE if kind == "addresses" else _NAME_RE
    bad = [i for i in items if len(i) > 80 or not pattern.match(i)]
    if bad:
        raise PoolError(f"invalid {kind} entries in completion: {bad[:3]}")
    return items


class HttpProvider:
    """Minimal chat-completion client; endpoint/key default to IDGEN_LLM_ENDPOINT / IDGEN_LLM_API_KEY."""

    provenance = "llm"

    def __init__(self, endpoint: str | None = None, api_key: str | None = None, model: str = "gpt-3.5-turbo",
                 fallback: OfflineCorpus | None = None, timeout: float = 30.0):
        self.endpoint = endpoint or os.environ.get("IDGEN_LLM_ENDPOINT")
        self.api_key = api_key or os.environ.get("IDGEN_LLM_API_KEY")
        self.model = model
        self.fallback = fallback
        self.timeout = timeout

    def request(self, prompt: str) -> str:
        if not self.endpoint:
            raise PoolError("no LLM endpoint configured (IDGEN_LLM_ENDPOINT)")
        body = json.dumps({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode())
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise PoolError("unexpected chat-completion response shape") from None

    def fetch(self, kind: str, key: tuple[str, ...]) -> list[str]:
        return parse_completion(kind, self.request(build_prompt(kind, key)))


def _cache_path(cache_dir: Path, kind: str, key: tuple[str, ...]) -> Path:
    slug = "__".join(re.sub(r"[^A-Za-z0-9_-]+", "-", k) for k in key)
    return cache_dir / f"{kind}__{slug}.json"


def fetch_text_pool(provider, kind: str, key, cache_dir: str | Path | None = None,
                    min_entries: int = DEFAULT_MIN_ENTRIES) -> TextPool:
    key = tuple(str(k) for k in key)
    if kind not in POOL_KINDS:
        raise PoolError(f"unknown pool kind {kind!r}")
    cache_file = _cache_path(Path(cache_dir), kind, key) if cache_dir is not None else None
    if cache_file is not None and cache_file.is_file():
        cached = json.loads(cache_file.read_text())
        return TextPool(kind, key, tuple(cached["entries"]), cached["provenance"])

    provenance = provider.provenance
    try:
        entries = provider.fetch(kind, key)
    except (PoolError, urllib.error.URLError, OSError, ValueError) as e:
        fallback = getattr(provider, "fallback", None)
        if fallback is None:
            raise PoolError(f"provider unreachable for {kind} {key}: {e}") from e
        log.warning("LLM provider failed for %s %s (%s); using offline corpus", kind, key, e)
        entries, provenance = fallback.fetch(kind, key), fallback.provenance

    entries = dedupe(entries)
    if len(entries) < min_entries:
        raise PoolError(f"pool {kind} {key} has {len(entries)} distinct entries, need {min_entries}")
    pool = TextPool(kind, key, tuple(entries), provenance)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(json.dumps({"kind": kind, "key": list(key), "provenance": provenance,
                                          "entries": list(entries)}, indent=1))
    return pool


class PoolSet:
    """Lazily fetched, memoized pools; safe to share between threads."""

    def __init__(self, provider=None, cache_dir: str | Path | None = None, min_entries: int = DEFAULT_MIN_ENTRIES):
        self.provider = provider if provider is not None else OfflineCorpus()
        self.cache_dir = cache_dir
        self.min_entries = min_entries
        self._pools: dict = {}
        self._lock = threading.Lock()

    def get(self, kind: str, key) -> TextPool:
        key = tuple(str(k) for k in key)
        with self._lock:
            if (kind, key) not in self._pools:
                self._pools[(kind, key)] = fetch_text_pool(self.provider, kind, key, self.cache_dir, self.min_entries)
            return self._pools[(kind, key)]

    def given_names(self, ethnicity: str, sex: str, language: str) -> TextPool:
        return self.get("given_names", (ethnicity, sex, language))

    def surnames(self, ethnicity: str, language: str) -> TextPool:
        return self.get("surnames", (ethnicity, "*", language))

    def addresses(self, region: str) -> TextPool:
        return self.get("addresses", (region,))
