"""External scorer service for the KBQA engine's wire protocol."""

from .protocol import PROTOCOL_VERSION, Responder, serve_stream

__all__ = ["PROTOCOL_VERSION", "Responder", "serve_stream"]
