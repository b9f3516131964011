"""Hierarchical Verilog generation with weighted code reuse and DSE."""

__version__ = "0.1.0"

from .config import GenerationConfig
from .library import CodeLibrary, LibraryPolicy, embed
from .llm import LlmParams, MockBackend, RemoteBackend, ReplayBackend
from .metrics import pass_at_k, token_savings
from .model import CodeBlock, DesignHierarchy, HierarchicalPrompt, ModuleSpec, hash_block, validate_hierarchy
from .orchestrator import GenerationSession, Orchestrator, SessionStatus

__all__ = [
    "CodeBlock",
    "CodeLibrary",
    "DesignHierarchy",
    "GenerationConfig",
    "GenerationSession",
    "HierarchicalPrompt",
    "LibraryPolicy",
    "LlmParams",
    "MockBackend",
    "ModuleSpec",
    "Orchestrator",
    "RemoteBackend",
    "ReplayBackend",
    "SessionStatus",
    "embed",
    "hash_block",
    "pass_at_k",
    "token_savings",
    "validate_hierarchy",
    "__version__",
]
