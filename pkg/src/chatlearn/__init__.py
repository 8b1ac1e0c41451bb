"""chatlearn: a two-party chat service with AI translation support and
expression review for language learners.

The package splits into:

* core: sessions, messages, configuration
* gateway: prompt templates, model providers, embeddings
* assist: comprehension, the expression explorer, the expression builder
* review: the captured-expression store and review card retrieval
* metrics: the behavioral event log, session reports, recall validation
* protocol / engine / server: the wire protocol and its dispatchers
* replay: the headless script runner
"""

from .core import Condition, Message, Sender, Session, SessionConfig, SessionState
from .engine import SessionEngine, SessionRuntime
from .errors import ChatLearnError
from .gateway import Gateway, HttpProvider, MockProvider, TemplateName, render
from .metrics import EventKind, RecallSubmission, compute_report, validate_recall
from .replay import LogicalClock, load_script, run_script
from .review import CaptureSource, ReviewStore, TriggerKind, cosine_similarity

__version__ = "0.1.0"

__all__ = [
    "CaptureSource",
    "ChatLearnError",
    "Condition",
    "EventKind",
    "Gateway",
    "HttpProvider",
    "LogicalClock",
    "Message",
    "MockProvider",
    "RecallSubmission",
    "ReviewStore",
    "Sender",
    "Session",
    "SessionConfig",
    "SessionEngine",
    "SessionRuntime",
    "SessionState",
    "TemplateName",
    "TriggerKind",
    "compute_report",
    "cosine_similarity",
    "load_script",
    "render",
    "run_script",
    "validate_recall",
    "__version__",
]
