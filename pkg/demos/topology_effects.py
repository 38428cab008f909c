"""How network structure changes the convergence speed.

First an exponential graph is paired with a switching ER(50%) graph on the
same costs and initial states.  Then links are removed from a static
ER(30%) graph at increasing rates, and the fitted decay rate is set against
the algebraic connectivity of each damaged graph.
"""

import sys

from npgt import default_config, run_experiment


def main(horizon=30.0):
    pair = run_experiment(default_config("exponential-vs-er", horizon=horizon))
    print("topology      final gap   fitted rate  predicted rate")
    for row in pair.table:
        print(f"{row['topology']:<12} {row['final_gap']:.3e}  {row['fitted_rate']:>10.4f}  "
              f"{row['predicted_rate']:>13.5f}")

    sweep = run_experiment(default_config("link-failure", horizon=horizon))
    print("\nremoval  connectivity  fitted rate")
    for row in sweep.table:
        if "removal_rate" in row:
            print(f"{row['removal_rate']:>7.1f}  {row['algebraic_connectivity']:>12.4f}  {row['fitted_rate']:>11.4f}")
        else:
            print(f"Spearman(connectivity, |rate|) = {row['spearman_connectivity_vs_rate']:.2f}")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 30.0)
