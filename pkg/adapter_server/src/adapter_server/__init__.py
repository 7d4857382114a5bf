"""Reference backend server for the pobf wire protocol.

Stub mode answers every endpoint deterministically from (request, seed); real
mode exposes hook points for wiring actual captioning/inpainting/grounding/
embedding models. The engine package is intentionally not a dependency: the
only shared surface is the wire protocol, locked by the conformance fixture.
"""

__version__ = "0.1.0"
