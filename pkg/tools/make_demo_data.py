"""Regenerate the bundled demo feeder under src/evhost/data/demo."""
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from evhost import data_io

OUT = Path(__file__).resolve().parents[1] / "src" / "evhost" / "data" / "demo"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    feeder = data_io.demo_feeder()
    # three decimals keep the file small; the rounded values are the demo data
    feeder = [replace(t, profiles=tuple(replace(p, kw=np.round(p.kw, 3)) for p in t.profiles))
              for t in feeder]
    data_io.write_ami_csv(feeder, OUT / "ami.csv", OUT / "metadata.csv")
    data_io.write_trips_csv(data_io.synth_trips(5000, seed=1), OUT / "trips.csv")
    config = {
        "ami": "ami.csv",
        "metadata": "metadata.csv",
        "trips": "trips.csv",
        "months": [3, 7],
        "powers_kw": [7.2, 11.5],
        "n_scenarios": 100,
        "master_seed": 42,
        "time_limit": 60.0,
    }
    with open(OUT / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
