import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    """A small materialized synthetic sequence shared by IO-level tests."""
    from trailseg.synthetic import materialize_corpus

    out = tmp_path_factory.mktemp("corpus")
    manifest = materialize_corpus(out, n_frames=12, seed=7, size=32)
    return manifest.parent


@pytest.fixture(scope="session")
def tiny_manifest(tiny_corpus_dir):
    return tiny_corpus_dir / "manifest.jsonl"


def random_camera(rng, max_side=256):
    from trailseg.geometry import CameraModel

    w = int(rng.integers(8, max_side))
    h = int(rng.integers(8, max_side))
    fx = float(rng.uniform(0.3, 3.0)) * w
    fy = float(rng.uniform(0.3, 3.0)) * h
    cx = float(rng.uniform(0.2, 0.8)) * w
    cy = float(rng.uniform(0.2, 0.8)) * h
    skew = float(rng.uniform(-0.01, 0.01)) * fx
    k = np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    return CameraModel(intrinsics=k, width=w, height=h)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
