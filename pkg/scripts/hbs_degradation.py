"""Forest recall under each HBS mechanism, averaged over seeds.

    python3 scripts/hbs_degradation.py --seeds 1 2 3 4 5 --model forest
"""

import argparse
import json

import numpy as np

from bypassdet.features import extract, label_vector
from bypassdet.learn import evaluate, fit_pipeline, split
from bypassdet.synth import HbsConfig, ScenarioConfig, generate

VARIANTS = {
    "off": {},
    "migration": {"migration": True},
    "rotation": {"rotation": True},
    "mimicry": {"service_mimicry": True},
    "family": {"family_lists": True},
    "full": {"migration": True, "rotation": True, "service_mimicry": True, "family_lists": True},
}


def scenario(seed: int, hbs: HbsConfig, args) -> ScenarioConfig:
    return ScenarioConfig(seed=seed, days=args.days, n_subscribers=args.subscribers, n_simboxes=args.boxes,
                          sims_per_box=args.sims_per_box, channels_per_box=args.channels,
                          shared_device_fraction=args.shared, business_fraction=args.business, hbs=hbs)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--model", default="forest")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--subscribers", type=int, default=1000)
    p.add_argument("--boxes", type=int, default=5)
    p.add_argument("--sims-per-box", type=int, default=10)
    p.add_argument("--channels", type=int, default=10, help="IMEIs per box (0: one per four SIMs)")
    p.add_argument("--shared", type=float, default=0.1, help="share of subscribers on shared handsets")
    p.add_argument("--business", type=float, default=0.05, help="share of heavy business callers")
    p.add_argument("--mimic-rate", type=float, default=2.0)
    p.add_argument("--json", default=None, help="also write results here")
    args = p.parse_args()

    results = {}
    for name, flags in VARIANTS.items():
        recalls, fps = [], []
        for seed in args.seeds:
            world = generate(scenario(seed, HbsConfig(mimic_events_per_day=args.mimic_rate, **flags), args))
            m = extract(world.dataset)
            y = label_vector(m, world.truth.labels)
            sp = split(y, 2 / 3, seed)
            pipe = fit_pipeline(args.model, m.rows(sp.train), y[sp.train], seed=seed)
            r = evaluate(pipe.predict(m.rows(sp.test)), y[sp.test])
            recalls.append(r.recall)
            fps.append(r.fp)
        results[name] = {"recall": recalls, "mean_recall": float(np.mean(recalls)), "false_positives": fps}
        print(f"{name:<10} mean recall {np.mean(recalls):.3f}  per seed {[round(x, 3) for x in recalls]}  fp {fps}",
              flush=True)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
