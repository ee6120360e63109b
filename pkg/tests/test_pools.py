import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from idsynth.pools import (HttpProvider, OfflineCorpus, PoolError, PoolSet, TextPool, build_prompt,
                           fetch_text_pool, parse_completion)

NAMES = [f"Name{chr(97 + i // 26)}{chr(97 + i % 26)}" for i in range(50)]


class _Stub(BaseHTTPRequestHandler):
    reply = "\n".join(f"{i + 1}. {n}" for i, n in enumerate(NAMES))
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append((body, self.headers.get("Authorization")))
        out = json.dumps({"choices": [{"message": {"content": self.reply}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub():
    _Stub.seen = []
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def test_offline_given_names():
    pool = fetch_text_pool(OfflineCorpus(), "given_names", ("hispanic", "F", "es"))
    assert len(pool) >= 40 and pool.provenance == "offline_corpus"
    assert len(set(pool.entries)) == len(pool.entries)


def test_offline_corpus_covers_every_key():
    corpus = OfflineCorpus()
    pools = PoolSet(corpus)
    for eth in corpus.ethnicities():
        for sex in "MF":
            assert len(pools.given_names(eth, sex, "en")) >= 40
        assert len(pools.surnames(eth, "en")) >= 40


def test_prompt_placeholders():
    p = build_prompt("given_names", ("asian", "F", "en"), 50)
    assert "50" in p and "asian" in p and "female" in p and "English" in p
    assert "AZ" in build_prompt("addresses", ("AZ",))
    with pytest.raises(PoolError):
        build_prompt("pets", ("x",))


def test_parse_completion_formats():
    assert parse_completion("given_names", '["Ana", "Bea"]') == ["Ana", "Bea"]
    assert parse_completion("given_names", "1. Ana\n- Bea\n\n* Cy") == ["Ana", "Bea", "Cy"]
    assert parse_completion("addresses", "12 Oak St, Mesa, AZ 85201") == ["12 Oak St, Mesa, AZ 85201"]
    with pytest.raises(PoolError):
        parse_completion("given_names", "Ana\nDrop table; --")
    with pytest.raises(PoolError):
        parse_completion("given_names", "[1, 2]")


def test_http_provider_and_cache(stub, tmp_path, monkeypatch):
    monkeypatch.setenv("IDGEN_LLM_API_KEY", "test-key")
    provider = HttpProvider(endpoint=stub)
    pool = fetch_text_pool(provider, "given_names", ("white", "M", "en"), cache_dir=tmp_path)
    assert pool.provenance == "llm" and list(pool.entries) == NAMES
    body, auth = _Stub.seen[0]
    assert auth == "Bearer test-key"
    assert "white male" in body["messages"][0]["content"]
    # second fetch is served from disk without a request
    again = fetch_text_pool(HttpProvider(endpoint="http://127.0.0.1:9/none"), "given_names",
                            ("white", "M", "en"), cache_dir=tmp_path)
    assert again == pool and len(_Stub.seen) == 1


def test_unreachable_falls_back(tmp_path):
    provider = HttpProvider(endpoint="http://127.0.0.1:9/none", fallback=OfflineCorpus(), timeout=2)
    pool = fetch_text_pool(provider, "surnames", ("white", "*", "en"))
    assert pool.provenance == "offline_corpus" and len(pool) >= 40


def test_unreachable_without_fallback():
    with pytest.raises(PoolError, match="unreachable"):
        fetch_text_pool(HttpProvider(endpoint="http://127.0.0.1:9/none", timeout=2), "surnames", ("white", "*", "en"))
    with pytest.raises(PoolError):
        fetch_text_pool(HttpProvider(endpoint=None), "surnames", ("white", "*", "en"))


def test_too_few_entries(stub):
    _Stub.reply = "Ana\nBea\nAna"
    try:
        with pytest.raises(PoolError, match="need 40"):
            fetch_text_pool(HttpProvider(endpoint=stub), "given_names", ("white", "F", "en"))
    finally:
        _Stub.reply = "\n".join(NAMES)


def test_text_pool_invariants():
    with pytest.raises(PoolError):
        TextPool("surnames", ("a",), (), "offline_corpus")
    with pytest.raises(PoolError):
        TextPool("surnames", ("a",), ("X", "X"), "offline_corpus")
