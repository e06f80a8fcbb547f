"""LLM-driven orchestration engine for music-processing workflows."""

from .gateway import ChatResult, Config, MusicAgent
from .registry import Adapter, SelectionPolicy, ToolDescriptor
from .taxonomy import Modality, TaskCategory, TaskSpec

__all__ = [
    "Adapter",
    "ChatResult",
    "Config",
    "Modality",
    "MusicAgent",
    "SelectionPolicy",
    "TaskCategory",
    "TaskSpec",
    "ToolDescriptor",
]

__version__ = "0.1.0"
