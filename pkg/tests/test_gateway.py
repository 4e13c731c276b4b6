import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaprobe.errors import (
    GatewayExhaustedError,
    InputError,
    MockScriptError,
    NonRetryableProviderError,
    TransportError,
)
from qaprobe.gateway import (
    ChatRequest,
    ChatResponse,
    EmbeddingVector,
    FileCache,
    Gateway,
    HashingEmbedder,
    MockChatProvider,
    MockRule,
    cosine,
)

from helpers import mock_gateway


class TestChatRequest:
    def test_rejects_empty_prompt(self):
        with pytest.raises(InputError):
            ChatRequest(prompt="", model_id="m")

    def test_rejects_zero_samples(self):
        with pytest.raises(InputError):
            ChatRequest(prompt="p", model_id="m", sample_count=0)


class TestMockProvider:
    def test_scripted_single_response(self):
        provider = MockChatProvider([MockRule(contains="hello", responses=["A"])])
        resp = provider.complete(ChatRequest(prompt="say hello", model_id="m"))
        assert resp.texts == ("A",)

    def test_sample_count_replication_and_lists(self):
        provider = MockChatProvider(
            [MockRule(contains="", responses=["x", ["a", "b", "c"]])]
        )
        first = provider.complete(ChatRequest(prompt="p", model_id="m", sample_count=3))
        assert first.texts == ("x", "x", "x")
        second = provider.complete(ChatRequest(prompt="p", model_id="m", sample_count=3))
        assert second.texts == ("a", "b", "c")
        # sequence exhausted: last entry repeats
        third = provider.complete(ChatRequest(prompt="p", model_id="m", sample_count=3))
        assert third.texts == ("a", "b", "c")

    def test_wrong_sample_count_is_a_script_error(self):
        provider = MockChatProvider([MockRule(contains="", responses=[["a", "b"]])])
        with pytest.raises(MockScriptError):
            provider.complete(ChatRequest(prompt="p", model_id="m", sample_count=5))

    def test_unmatched_prompt_fails_loudly(self):
        provider = MockChatProvider([MockRule(contains="xyz", responses=["A"])])
        with pytest.raises(MockScriptError):
            provider.complete(ChatRequest(prompt="nope", model_id="m"))


class TestCache:
    def test_round_trip_bit_exact(self, tmp_path):
        cache = FileCache(tmp_path)
        key = FileCache.key({"a": 1, "b": "x"})
        blob = b'{"texts": ["caf\xc3\xa9", "\\u00e9"]}'
        cache.store(key, blob)
        assert cache.load(key) == blob

    def test_identical_parts_identical_key(self):
        assert FileCache.key({"b": 2, "a": 1}) == FileCache.key({"a": 1, "b": 2})

    def test_second_call_served_from_cache(self, tmp_path):
        cache = FileCache(tmp_path)
        gw = mock_gateway(rules=[("", [["one"]])], cache=cache)
        req = ChatRequest(prompt="p", model_id="m")
        assert gw.complete(req).texts == ("one",)
        assert gw.complete(req).texts == ("one",)
        assert gw.stats.chat_network_calls == 1
        assert gw.stats.chat_cache_hits == 1
        assert gw.chat_provider.call_count == 1


class FlakyProvider:
    name = "flaky"

    def __init__(self, fail_times, exc=TransportError):
        self.fail_times = fail_times
        self.exc = exc
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise self.exc("boom")
        return ChatResponse(texts=("ok",) * request.sample_count)


class TestRetries:
    def _gateway(self, provider, retries=2):
        return Gateway(
            chat_provider=provider,
            embedding_provider=HashingEmbedder(),
            cache=None,
            max_retries=retries,
            retry_base_delay=0.0,
        )

    def test_transient_errors_retried_within_bound(self):
        provider = FlakyProvider(fail_times=2)
        gw = self._gateway(provider, retries=2)
        assert gw.complete(ChatRequest(prompt="p", model_id="m")).texts == ("ok",)
        assert provider.calls == 3

    def test_exhaustion_carries_attempt_count(self):
        provider = FlakyProvider(fail_times=10)
        gw = self._gateway(provider, retries=2)
        with pytest.raises(GatewayExhaustedError) as exc_info:
            gw.complete(ChatRequest(prompt="p", model_id="m"))
        assert exc_info.value.attempts == 3
        assert provider.calls == 3

    def test_auth_errors_never_retried(self):
        provider = FlakyProvider(fail_times=10, exc=NonRetryableProviderError)
        gw = self._gateway(provider, retries=5)
        with pytest.raises(NonRetryableProviderError):
            gw.complete(ChatRequest(prompt="p", model_id="m"))
        assert provider.calls == 1


class TestCosine:
    def test_identical(self):
        v = EmbeddingVector(values=(1.0, 2.0, 3.0), model_id="m")
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_opposite(self):
        a = EmbeddingVector(values=(1.0, 2.0), model_id="m")
        b = EmbeddingVector(values=(-1.0, -2.0), model_id="m")
        assert cosine(a, b) == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal(self):
        a = EmbeddingVector(values=(1.0, 0.0), model_id="m")
        b = EmbeddingVector(values=(0.0, 1.0), model_id="m")
        assert cosine(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_dimension_mismatch(self):
        a = EmbeddingVector(values=(1.0,), model_id="m")
        b = EmbeddingVector(values=(1.0, 0.0), model_id="m")
        with pytest.raises(InputError):
            cosine(a, b)

    def test_zero_norm(self):
        a = EmbeddingVector(values=(0.0, 0.0), model_id="m")
        b = EmbeddingVector(values=(1.0, 0.0), model_id="m")
        with pytest.raises(InputError):
            cosine(a, b)

    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=2, max_size=8),
        st.lists(st.floats(min_value=-10, max_value=10), min_size=2, max_size=8),
    )
    @settings(max_examples=200)
    def test_symmetry(self, xs, ys):
        size = min(len(xs), len(ys))
        a = EmbeddingVector(values=tuple(xs[:size]), model_id="m")
        b = EmbeddingVector(values=tuple(ys[:size]), model_id="m")
        try:
            left = cosine(a, b)
        except InputError:
            return  # zero-norm draw
        assert left == pytest.approx(cosine(b, a), abs=1e-12)
        assert -1.0 <= left <= 1.0


class TestHashingEmbedder:
    def test_deterministic(self):
        emb = HashingEmbedder()
        assert emb.embed("the quick fox").values == emb.embed("the quick fox").values

    def test_self_similarity(self):
        emb = HashingEmbedder()
        assert cosine(emb.embed("x y z"), emb.embed("x y z")) == pytest.approx(1.0, abs=1e-6)

    def test_surface_variants_collapse(self):
        emb = HashingEmbedder()
        assert cosine(emb.embed("yes"), emb.embed("Yes.")) == pytest.approx(1.0, abs=1e-6)

    def test_empty_text_rejected(self):
        with pytest.raises(InputError):
            HashingEmbedder().embed("   ")

    def test_vectors_finite_and_declared_dimension(self):
        emb = HashingEmbedder(dimension=64)
        vec = emb.embed("hello world")
        assert len(vec.values) == 64
        assert all(math.isfinite(v) for v in vec.values)


class TestLimits:
    def test_token_bucket_paces_acquisitions(self):
        import time
        from qaprobe.gateway import TokenBucket

        bucket = TokenBucket(rate_per_s=50.0, capacity=1.0)
        started = time.monotonic()
        for _ in range(6):
            bucket.acquire()
        elapsed = time.monotonic() - started
        # five refills at 50/s is at least 0.1s
        assert elapsed >= 0.08

    def test_concurrent_callers_are_safe(self, tmp_path):
        from concurrent.futures import ThreadPoolExecutor

        gw = mock_gateway(rules=[("", ["reply"])], cache=FileCache(tmp_path))

        def call(i):
            req = ChatRequest(prompt=f"prompt {i % 4}", model_id="m")
            return gw.complete(req).texts[0]

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(call, range(64)))
        assert results == ["reply"] * 64
        assert gw.stats.chat_calls == 64
        # four distinct prompts; every other call is a cache hit
        assert gw.stats.chat_network_calls >= 4
        assert gw.stats.chat_network_calls + gw.stats.chat_cache_hits == 64


def test_gateway_embed_empty_is_input_error():
    gw = mock_gateway()
    with pytest.raises(InputError):
        gw.embed("")


def test_gateway_embed_deterministic_and_cached(tmp_path):
    gw = mock_gateway(cache=FileCache(tmp_path))
    first = gw.embed("Paris")
    second = gw.embed("Paris")
    assert first.values == second.values
    assert gw.stats.embed_cache_hits == 1
