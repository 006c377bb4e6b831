from .llm import DeterministicStubBackend, HttpChatBackend, LlmSource
from .relational import RelationalSource
from .user import PromptPending, UserSource
from .vector import VectorSource
from .web import FixtureFetcher, HttpFetcher, WebSource

__all__ = [
    "RelationalSource",
    "VectorSource",
    "LlmSource",
    "DeterministicStubBackend",
    "HttpChatBackend",
    "UserSource",
    "PromptPending",
    "WebSource",
    "FixtureFetcher",
    "HttpFetcher",
]
