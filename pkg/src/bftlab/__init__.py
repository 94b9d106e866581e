"""bftlab: deterministic replay and bounded exploration of speculative BFT
view-change bugs (Zyzzyva safety, FaB liveness)."""

from .core import quorum_config  # noqa: F401

__version__ = "0.1.0"
