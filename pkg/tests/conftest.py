import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from glyphrec.corpus import GlyphAlphabet


@pytest.fixture(scope="session")
def alphabet():
    return GlyphAlphabet.generate(n_symbols=10, glyph_size=8, master_seed=0)


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)
