"""
A complete experiment in a few minutes
======================================

The staged runner fetches (here: generates) prices, prepares datasets,
grid-searches, trains several seeds, evaluates and writes report tables.
The same config runs from the shell with

    nemforecast run --config demos/small_experiment.json

and a second invocation skips every stage that is already done.
"""

import csv
from pathlib import Path

from nemforecast.experiment import Experiment, ExperimentConfig

config = ExperimentConfig.load(Path(__file__).with_name("small_experiment.json"))
print("config hash", config.config_hash())

exp = Experiment(config)
exp.run()
print("failed cells:", [(r.stage, r.key) for r in exp.ledger.failed(exp.hash)])

with open(exp.root / "report" / "table_overall.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(f"{row['region']:8s} {row['model']:13s} MAE {row['mae']:>8s}  rMAE {row['rmae']:>6s} {row['rmae_flag']}")

# the report figures are drawn from these CSVs and nothing else
print(sorted(p.name for p in (exp.root / "report").iterdir()))
