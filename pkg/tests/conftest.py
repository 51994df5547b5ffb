import numpy as np
import pytest

from hemoseg.phantom import BlobSpec, PhantomSpec, generate
from hemoseg.preprocess import BrainExtract
from hemoseg.volume import LabelMask, Volume3D


@pytest.fixture
def one_blob_phantom():
    spec = PhantomSpec(seed=3, blobs=(
        BlobSpec(center=(36.0, 34.0, 32.0), intensity_mean=75.0,
                 intensity_std=4.0, axes=(5.0, 5.0, 5.0), n_voxels=600),))
    return generate(spec)


@pytest.fixture
def healthy_phantom():
    return generate(PhantomSpec(seed=4))


def make_brain(dims=(20, 20, 20), base=30.0, noise=2.0, seed=0,
               patches=()):
    """Small synthetic BrainExtract for unit tests, bypassing preprocess.

    patches: iterable of (slices, value) applied to the interior box.
    """
    rng = np.random.default_rng(seed)
    data = np.zeros(dims, dtype=np.float32)
    mask = np.zeros(dims, dtype=bool)
    inner = tuple(slice(1, n - 1) for n in dims)
    mask[inner] = True
    data[mask] = base + noise * rng.standard_normal(int(mask.sum()))
    for sl, value in patches:
        data[sl] = value
    data[~mask] = 0.0
    vol = Volume3D(data=np.clip(data, 0.0, 100.0), spacing=(1.0, 1.0, 1.0))
    return BrainExtract(volume=vol, brain_mask=LabelMask(mask))
