"""State-constrained fit with the accelerated and the unaccelerated rule."""

import argparse
import os

from nlpdhgm.cli import FULL_SCALE, execute_run
from nlpdhgm.experiments import ExperimentConfig, build_state_constraint_problem


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results/fig3")
    parser.add_argument("--full-scale", action="store_true")
    args = parser.parse_args()
    sizes = FULL_SCALE if args.full_scale else {"mesh_n": 200, "n_max": 2000}
    os.makedirs(args.out_dir, exist_ok=True)
    base = ExperimentConfig(experiment="state_constraint", **sizes)
    z_d = build_state_constraint_problem(base).z_d
    print(f"max z^d = {z_d.max():.4f} against the bound c = {base.c}")
    for label, gamma in (("accelerated", 0.5), ("unaccelerated", 0.0)):
        cfg = ExperimentConfig(experiment="state_constraint", rule="accelerated",
                               gammaG_tilde=gamma, **sizes)
        stem = os.path.join(args.out_dir, f"state_constraint_{label}")
        power = execute_run(cfg, stem + ".csv", stem + ".json")["fits"]["power"]
        print(f"{label:>14}: slope {power['slope']:.3f} on {power['window']}")


if __name__ == "__main__":
    main()
