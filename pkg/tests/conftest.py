import numpy as np
import pytest

from nforge import dataio
from nforge.synthetic import generate_corpus

CORPUS_SEED = 7
SPLIT_SEED = 0


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """The 3000-image synthetic numeral corpus as an IDX pair on disk."""
    d = tmp_path_factory.mktemp("corpus")
    ds = generate_corpus(count=3000, seed=CORPUS_SEED)
    dataio.write_idx(ds, d / "images-idx", d / "labels-idx")
    return d


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    """Preprocessed desk-scale corpus: inverted, split 2500/500."""
    ds = dataio.load_idx(corpus_dir / "images-idx", corpus_dir / "labels-idx")
    return dataio.split(dataio.invert(ds), 2500, seed=SPLIT_SEED)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
