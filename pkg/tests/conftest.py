import numpy as np
import pytest

from afvit.harness.shifts import synth_image
from afvit.model import ModelConfig, init_weights


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def bandlimited(rng, shape, cutoff=0.25):
    """Random real signal with no energy at or above ``cutoff`` cycles/sample."""
    x = rng.standard_normal(shape)
    spec = np.fft.fft2(x)
    mask = (np.abs(np.fft.fftfreq(shape[-2]))[:, None] < cutoff) & (np.abs(np.fft.fftfreq(shape[-1]))[None, :] < cutoff)
    return np.fft.ifft2(spec * mask).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_cfg():
    return ModelConfig.desk("poly", image_size=16, patch_size=4, dim=16, depth=1, heads=2, ca_depth=1)


@pytest.fixture(scope="session")
def desk_models():
    out = {}
    for act in ("poly", "gelu"):
        for variant in ("aft", "baseline_vit", "aps_vit"):
            cfg = ModelConfig.desk(act, variant)
            out[act, variant] = (cfg, init_weights(cfg, 0))
    return out


@pytest.fixture(scope="session")
def desk_images():
    return [synth_image(s, 64, 3, 0.25) for s in range(1, 21)]


ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str):
    line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
