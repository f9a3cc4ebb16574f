import pytest

from modsep.dataio import SynthConfig, gen_synthetic
from modsep.trainer import TrainConfig, run

# the synthetic end-to-end benchmark used by the acceptance suite
BENCH = SynthConfig(k=10, d_v=64, n_per_domain=500, rotation_deg=15.0,
                    translation_norm=0.3, modality_offset_norm=0.4,
                    noise_sigma=0.15, seed=8)

SMALL = SynthConfig(k=5, d_v=16, n_per_domain=80, rotation_deg=15.0,
                    translation_norm=0.3, modality_offset_norm=0.4,
                    noise_sigma=0.15, seed=3)


@pytest.fixture(scope="session")
def bench_dataset():
    return gen_synthetic(BENCH)


@pytest.fixture(scope="session")
def small_dataset():
    return gen_synthetic(SMALL)


@pytest.fixture(scope="session")
def bench_uda_runs(bench_dataset):
    """The three 60-epoch UDA trainings shared by the acceptance criteria."""
    import time
    out = {}
    t0 = time.monotonic()
    for seed in (0, 1, 2):
        report, _ = run(bench_dataset,
                        TrainConfig(mode="uda", max_epoch=60, seed=seed))
        out[seed] = report
    out["elapsed"] = time.monotonic() - t0
    return out
