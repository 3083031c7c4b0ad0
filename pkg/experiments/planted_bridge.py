"""
Planted-bridge experiment: does support verification help when the
answer can only be linked to the question through another sentence?

Two settings over three generator seeds:
    bridges in C_k      SBC vs DAR                 (DAR should win by >= 10 points P@1)
    bridges withheld    DAR vs DAR over retrieval  (DAR-DPR should win by >= 5 points P@1)

Usage:
    python experiments/planted_bridge.py
    python experiments/planted_bridge.py --quick
    python experiments/planted_bridge.py --setting withheld --seeds 0 1 2
    python experiments/planted_bridge.py --calibrate

`--calibrate` trains every model once on the frozen generator seed at full
size and records the measured test P@1 per model in
experiments/planted_bridge_floors.json. Later full-size runs must reach
those floors (less FLOOR_SLACK) on top of the minimum gains.

Every run writes its corpus, checkpoints, prediction dumps and reports
under results/planted_bridge/<setting>/seed<N>/.
"""

import argparse
import json
import logging
import time
from pathlib import Path

from dar_rerank import pipeline
from dar_rerank.config import ExperimentConfig
from dar_rerank.synthetic import SyntheticSpec, generate_synthetic


# ── Configuration ────────────────────────────────────────────────────────────

SEEDS = (0, 1, 2)
MIN_GAIN = {"inline": 0.10, "withheld": 0.05}
CALIBRATION_SEED = 0
FLOOR_SLACK = 0.03
FLOORS_FILE = Path(__file__).with_name("planted_bridge_floors.json")
OUTPUT_DIR = Path("results") / "planted_bridge"

ENCODER = {"layers": 1, "heads": 2, "d": 32, "ff": 64, "max_len": 48}
TRAINING = {"epochs": 10, "patience": 3, "batch_size": 16, "optimizer.lr": 2e-3}


def _spec(seed: int, withheld: float, quick: bool) -> SyntheticSpec:
    sizes = {"train": 200, "dev": 40, "test": 40} if quick else {"train": 2000, "dev": 200, "test": 200}
    return SyntheticSpec(k=8, withheld=withheld, seed=seed, **sizes)


def _config(model: str, run_dir: Path, seed: int, **paths) -> ExperimentConfig:
    cfg = ExperimentConfig(model=model, k=7, seed=seed)
    cfg.apply({f"encoder.{k}": v for k, v in ENCODER.items()})
    cfg.apply(TRAINING)
    cfg.apply({
        "paths.train": str(run_dir / "data" / "train.jsonl"),
        "paths.dev": str(run_dir / "data" / "dev.jsonl"),
        "paths.test": str(run_dir / "data" / "test.jsonl"),
        "paths.passages": str(run_dir / "data" / "passages.jsonl"),
        "paths.vocab": str(run_dir / "vocab.txt"),
        "paths.checkpoint": str(run_dir / f"{model}.ckpt"),
        "paths.out_dir": str(run_dir / model),
        **{f"paths.{k}": v for k, v in paths.items()},
    })
    cfg.validate()
    return cfg


def _train_and_evaluate(cfg: ExperimentConfig, baseline: str | None = None):
    started = time.perf_counter()
    pipeline.train(cfg)
    report = pipeline.evaluate(cfg, baseline=baseline)
    return report, time.perf_counter() - started


def run_inline(seed: int, quick: bool) -> dict:
    run_dir = OUTPUT_DIR / "inline" / f"seed{seed}"
    generate_synthetic(_spec(seed, 0.0, quick)).write(run_dir / "data")

    sbc, t_sbc = _train_and_evaluate(_config("sbc", run_dir, seed))
    dar, t_dar = _train_and_evaluate(_config("dar", run_dir, seed),
                                     baseline=str(run_dir / "sbc" / "report.json"))
    sig = pipeline.compare_dumps(run_dir / "dar" / "predictions.tsv", run_dir / "sbc" / "predictions.tsv")
    return {"seed": seed, "base": sbc, "model": dar, "p_value": sig.p_value, "seconds": t_sbc + t_dar}


def run_withheld(seed: int, quick: bool) -> dict:
    run_dir = OUTPUT_DIR / "withheld" / f"seed{seed}"
    generate_synthetic(_spec(seed, 1.0, quick)).write(run_dir / "data")
    retrieval = {
        "dpr_checkpoint": str(run_dir / "dpr.ckpt"),
        "index": str(run_dir / "passages.index"),
        "supports": str(run_dir / "supports.jsonl"),
    }
    started = time.perf_counter()

    pipeline.train(_config("dpr", run_dir, seed, **retrieval))
    cfg = _config("dar-dpr", run_dir, seed, **retrieval)
    pipeline.index(cfg)
    pipeline.retrieve(cfg, [cfg.paths.train, cfg.paths.dev, cfg.paths.test])

    dar, _ = _train_and_evaluate(_config("dar", run_dir, seed))
    dpr, _ = _train_and_evaluate(cfg, baseline=str(run_dir / "dar" / "report.json"))
    sig = pipeline.compare_dumps(run_dir / "dar-dpr" / "predictions.tsv", run_dir / "dar" / "predictions.tsv")
    return {"seed": seed, "base": dar, "model": dpr, "p_value": sig.p_value,
            "seconds": time.perf_counter() - started}


def load_floors() -> dict:
    """Recorded P@1 per setting and model, or {} before calibration."""
    if not FLOORS_FILE.exists():
        return {}
    return json.loads(FLOORS_FILE.read_text())["p_at_1"]


def calibrate() -> dict:
    inline = run_inline(CALIBRATION_SEED, quick=False)
    withheld = run_withheld(CALIBRATION_SEED, quick=False)
    floors = {
        "seed": CALIBRATION_SEED,
        "p_at_1": {
            "inline": {inline["base"].model: inline["base"].p_at_1, inline["model"].model: inline["model"].p_at_1},
            "withheld": {withheld["base"].model: withheld["base"].p_at_1,
                         withheld["model"].model: withheld["model"].p_at_1},
        },
    }
    FLOORS_FILE.write_text(json.dumps(floors, indent=2) + "\n")
    print(f"Floors recorded in {FLOORS_FILE}")
    for setting, models in floors["p_at_1"].items():
        for model, p in models.items():
            print(f"  {setting:<9} {model:<8} P@1 {p:.4f}")
    return floors


def _print_table(setting: str, rows: list[dict], floors: dict) -> bool:
    need = MIN_GAIN[setting]
    print(f"\n{setting}: {rows[0]['base'].model} vs {rows[0]['model'].model} (gain needed {need:+.2f})")
    if floors:
        print("floors: " + ", ".join(f"{m} >= {p - FLOOR_SLACK:.4f}" for m, p in floors.items()))
    print(f"{'Seed':<6} {'P@1 base':<10} {'P@1 model':<10} {'Gain':<8} {'RER':<9} {'p-value':<9} {'Time':<8}")
    print("-" * 64)
    ok = True
    for r in rows:
        gain = r["model"].p_at_1 - r["base"].p_at_1
        ok &= gain >= need
        for report in (r["base"], r["model"]):
            if report.model in floors:
                ok &= report.p_at_1 >= floors[report.model] - FLOOR_SLACK
        rer = r["model"].rer
        print(f"{r['seed']:<6} {r['base'].p_at_1:<10.4f} {r['model'].p_at_1:<10.4f} {gain:<+8.4f} "
              f"{'-' if rer is None else f'{rer:+.2f}%':<9} {r['p_value']:<9.5f} {r['seconds']:<8.0f}")
    print("STATUS:", "PASS" if ok else "BELOW THRESHOLD")
    return ok


def main():
    parser = argparse.ArgumentParser(description="Planted-bridge support-verification experiment")
    parser.add_argument("--setting", choices=["inline", "withheld", "both"], default="both")
    parser.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    parser.add_argument("--quick", action="store_true", help="Small corpus for a smoke run")
    parser.add_argument("--calibrate", action="store_true",
                        help=f"Record the P@1 floors on seed {CALIBRATION_SEED} and exit")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.calibrate:
        calibrate()
        return

    # floors hold for the full-size corpus only
    floors = {} if args.quick else load_floors()
    if not floors and not args.quick:
        print(f"No recorded floors in {FLOORS_FILE}; checking gains only (run --calibrate once)")

    runners = {"inline": run_inline, "withheld": run_withheld}
    settings = list(runners) if args.setting == "both" else [args.setting]
    summary = {}
    for setting in settings:
        rows = [runners[setting](seed, args.quick) for seed in args.seeds]
        summary[setting] = {
            "passed": _print_table(setting, rows, floors.get(setting, {})),
            "runs": [{"seed": r["seed"], "base_p_at_1": r["base"].p_at_1, "model_p_at_1": r["model"].p_at_1,
                      "p_value": r["p_value"], "seconds": r["seconds"]} for r in rows],
        }
    OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
    (OUTPUT_DIR / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"\nSummary saved to {OUTPUT_DIR / 'summary.json'}")


if __name__ == "__main__":
    main()
