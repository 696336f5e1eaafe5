"""Pluggable inference backends: the annotation oracle and the subprocess adapter."""

from beetscan.backends.adapter import (
    AdapterConfig,
    AdapterError,
    AdapterProtocolError,
    AdapterTimeoutError,
    ExternalAdapter,
)
from beetscan.backends.base import (
    BackendContractError,
    Backends,
    ImageRef,
    InstanceOutput,
    InstanceSegmenter,
    MarkerDetector,
    MarkerOutput,
    PatchSegmenter,
)
from beetscan.backends.oracle import OracleBackend, UnknownImageError

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "AdapterProtocolError",
    "AdapterTimeoutError",
    "BackendContractError",
    "Backends",
    "ExternalAdapter",
    "ImageRef",
    "InstanceOutput",
    "InstanceSegmenter",
    "MarkerDetector",
    "MarkerOutput",
    "OracleBackend",
    "PatchSegmenter",
    "UnknownImageError",
]
