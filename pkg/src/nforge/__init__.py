"""nforge: a small numpy neural-network framework for numeral recognition.

Submodules:

* ``tensor``   float64 arrays, matmul, Jacobi symmetric eigensolver
* ``dataio``   IDX/PNM corpora, inversion, splitting, batch serving
* ``augment``  ZCA whitening and random affine augmentation
* ``features`` shadow/octant features for the MLP baseline
* ``network``  layers, activations, softmax/cross-entropy, checkpoints
* ``optim``    Adadelta and SGD update rules
* ``train``    training loop, evaluation, confusion matrix, grad checks
* ``synthetic`` font-rendered stand-in numeral corpus
* ``cli``      the ``nforge`` command-line interface

Submodules import numpy; they are loaded lazily here so the CLI can cap
BLAS thread counts before numpy initializes.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("tensor", "dataio", "augment", "features", "network",
               "optim", "train", "synthetic", "cli", "errors")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
