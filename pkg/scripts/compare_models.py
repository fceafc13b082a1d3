"""Leave-one-speaker-out comparison of all five models on a synthetic corpus.

Prints one row per model with WAR, UAR, genome length and training time.
The GA models take a few minutes each at the default settings; use
``--generations`` to shorten the search.
"""

import argparse
import time

from qnesn.data import SynthSpec, synth_dataset
from qnesn.experiment import ExperimentConfig, run_experiment, thread_count
from qnesn.trainer import GaConfig

MODELS = ["esn", "esn_ga", "nesn", "qesn", "qnesn"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", default=",".join(MODELS))
    ap.add_argument("--generations", type=int, default=200)
    ap.add_argument("--population", type=int, default=50)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--noise", type=float, default=SynthSpec.noise)
    ap.add_argument("--structure", default="state_plus_input", choices=["state_plus_input", "state_only"])
    args = ap.parse_args()

    frames = synth_dataset(SynthSpec(noise=args.noise))
    ga = GaConfig(population_size=args.population, max_generations=args.generations)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    print(f"{'model':<8} {'WAR':>7} {'UAR':>7} {'theta':>7} {'seconds':>8}   (workers: {thread_count()})")
    for model in args.models.split(","):
        real = model in ("esn", "esn_ga", "nesn")
        cfg = ExperimentConfig(
            model=model,
            # Real models get four real units per quaternion unit.
            n_units=32 if real else 8,
            reduce_dim=None if model == "esn" else 16 if real else 8,
            structure=args.structure,
            seeds=seeds,
            ga=ga,
        )
        start = time.perf_counter()
        report = run_experiment(frames, cfg, jobs=thread_count())
        length = report.theta_length if report.theta_length is not None else "-"
        print(f"{model:<8} {report.war:7.4f} {report.uar:7.4f} {length:>7} {time.perf_counter() - start:8.1f}", flush=True)


if __name__ == "__main__":
    main()
