"""Shared builders for scripted gateways used across the test modules."""

from qaprobe.gateway import Gateway, HashingEmbedder, MockChatProvider, MockRule


def mock_gateway(rules=None, default=None, embedder=None, cache=None) -> Gateway:
    provider = MockChatProvider(
        [MockRule(contains=c, responses=list(r)) for c, r in (rules or [])],
        default=default,
    )
    return Gateway(
        chat_provider=provider,
        embedding_provider=embedder or HashingEmbedder(),
        cache=cache,
        max_retries=2,
        retry_base_delay=0.0,
    )
