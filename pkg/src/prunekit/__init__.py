"""prunekit: structured filter pruning for CNN14-style audio tagging networks.

Submodules
----------
graph       layer-graph specs, shape inference, CNN14 preset
engine      numpy forward/backward for every layer kind
complexity  analytical parameter and MAC accounting
importance  per-layer filter importance scoring and ranking
pruning     structural pruning with channel rewiring
training    desk-scale fine-tuning with mixup / spectrogram masking
metrics     multi-label average precision
storage     checkpoint and dataset formats
cli         command-line pipeline entry point

Submodules load lazily so the CLI can pin BLAS thread counts before numpy
is imported.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("cli", "complexity", "engine", "errors", "graph", "importance",
               "metrics", "pruning", "storage", "training")

__all__ = list(_SUBMODULES) + ["ModelSpec", "build_cnn14_preset", "build_toy_cnn",
                               "__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in ("ModelSpec", "build_cnn14_preset", "build_toy_cnn"):
        from . import graph
        return getattr(graph, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
