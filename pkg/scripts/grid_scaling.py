"""Mean MSE of the 2D estimators as the observation grid grows.

Uses the desk config with the side length replaced by each value of --sides.
"""

import argparse

from levydecon.studyctl import StudyConfig, load_config, run_study


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/table2_desk.json")
    p.add_argument("--sides", type=int, nargs="+", default=[25, 50, 100])
    p.add_argument("--threads", type=int)
    args = p.parse_args()

    base = load_config(args.config).to_dict()
    print("side,estimator,l,mean_mse,sd_mse")
    for side in args.sides:
        grid = {**base["grid"], "shape": [side, side], "origin": [-(side // 2)] * 2}
        res = run_study(StudyConfig.from_dict({**base, "grid": grid}), args.threads)
        for r in res.rows:
            print(f"{side},{r.estimator},{r.l},{r.mean_mse:.6g},{r.sd_mse:.6g}", flush=True)


if __name__ == "__main__":
    main()
