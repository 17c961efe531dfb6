"""Complex-plane toy: accelerated O(1/N^2) run and a linear-rate run.

The linear-rate run uses the largest step admitted by the toy's analysis
parameters, since ``tau = 1/L~`` lies outside them.
"""

import argparse
import os

from nlpdhgm.cli import execute_run
from nlpdhgm.experiments import TOY_ANALYSIS, ExperimentConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results/toy")
    parser.add_argument("--n-max", type=int, default=10_000)
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    stem = os.path.join(args.out_dir, "toy_accelerated")
    summary = execute_run(ExperimentConfig(n_max=args.n_max), stem + ".csv", stem + ".json")
    print(f"accelerated: slope {summary['fits']['power']['slope']:.3f}, "
          f"final err_x_sq {summary['final']['err_x_sq']:.3e}")

    tau = TOY_ANALYSIS.linear_rate_tau_max(0.5, 1.0)
    stem = os.path.join(args.out_dir, "toy_linear")
    fits = execute_run(ExperimentConfig(rule="linear", tau=tau, n_max=3000),
                       stem + ".csv", stem + ".json")["fits"]
    print(f"linear (tau={tau:.4f}): fitted ratio {fits['linear']['ratio']:.4f}, "
          f"theory {fits['theoretical_ratio']:.4f}")


if __name__ == "__main__":
    main()
