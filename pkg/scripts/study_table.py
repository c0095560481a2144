"""Run a study config and print its mean-MSE table in markdown.

    python scripts/study_table.py configs/table1.json
    python scripts/study_table.py configs/table2_desk.json --full
"""

import argparse
import logging

from levydecon.studyctl import load_config, run_study, write_study


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--full", action="store_true", help="apply the config's full-scale section")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (default: config output_dir)")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    cfg = load_config(args.config)
    if args.full:
        cfg = cfg.at_full_scale()
    res = run_study(cfg, args.threads)
    out = write_study(res, cfg, args.out or cfg.output_dir)

    ls = sorted({r.l for r in res.rows})
    print(f"\n{cfg.name}: {cfg.replications} replications, grid {cfg.grid.shape_str()}\n")
    print("| estimator | " + " | ".join(f"l = {l}" for l in ls) + " |")
    print("|---" * (len(ls) + 1) + "|")
    for name in ("tilde", "hat"):
        cells = {r.l: f"{r.mean_mse:.4f} ({r.sd_mse:.4f})" for r in res.rows if r.estimator == name}
        print(f"| {name} | " + " | ".join(cells[l] for l in ls) + " |")
    print(f"\nmean MSE (sd) over replications; files in {out}")


if __name__ == "__main__":
    main()
