"""Regenerate the bundled test fixtures under tests/data/."""

from pathlib import Path

from srdetect.spectral import SrConfig
from srdetect.synth import InjectionParams, generate_base, inject
from srdetect.timeseries import write_csv

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def main():
    cfg = SrConfig.for_granularity("hour")
    base = generate_base("seasonal", 400, seed=11, granularity="hour", series_id="sine_spike")
    # ceil(0.002 * 400) == 1 injection
    labeled, idx = inject(base, InjectionParams(ratio=0.002, seed=5, r_range=(3.0, 3.0)), cfg)
    DATA.mkdir(parents=True, exist_ok=True)
    write_csv(labeled, DATA / "sine_spike.csv")
    print(f"sine_spike.csv: injected index {idx.tolist()}")


if __name__ == "__main__":
    main()
