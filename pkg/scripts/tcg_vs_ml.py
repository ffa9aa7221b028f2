"""TCG detection against ML recall as anti-spam blocking grows.

    python3 scripts/tcg_vs_ml.py --block 0 0.5 0.9 1.0 --seeds 20
"""

import argparse

import numpy as np

from bypassdet.features import extract, label_vector
from bypassdet.learn import evaluate, fit_pipeline, split
from bypassdet.synth import AntiSpamConfig, HbsConfig, ScenarioConfig, generate
from bypassdet.tcg import ProbeCampaign, run_campaign


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=20, help="campaign seeds per blocking level")
    p.add_argument("--block", type=float, nargs="+", default=[0.0, 0.5, 0.9, 1.0])
    p.add_argument("--probes-per-sim", type=int, default=10)
    p.add_argument("--hbs", action="store_true", help="enable every HBS mechanism")
    args = p.parse_args()

    hbs = HbsConfig.all_on(mimic_events_per_day=2) if args.hbs else HbsConfig()
    cfg = ScenarioConfig(seed=args.seed, days=30, n_subscribers=1000, n_simboxes=5, sims_per_box=10,
                         channels_per_box=10, shared_device_fraction=0.1, business_fraction=0.05, hbs=hbs)
    world = generate(cfg)
    m = extract(world.dataset)
    y = label_vector(m, world.truth.labels)
    sp = split(y, 2 / 3, args.seed)
    test = m.rows(sp.test)
    for kind in ("forest", "svm", "mlp"):
        pipe = fit_pipeline(kind, m.rows(sp.train), y[sp.train], seed=args.seed)
        r = evaluate(pipe.predict(test), y[sp.test])
        print(f"{kind:<7} recall {r.recall:.3f}  false positives {r.fp}")

    n_probes = args.probes_per_sim * len(world.truth.fraud_sims)
    for block in args.block:
        rates = [run_campaign(world, ProbeCampaign(n_probes, seed=s), AntiSpamConfig(True, block, 0.0)).detection_rate
                 for s in range(args.seeds)]
        print(f"tcg     block_prob {block:.2f}  detection {np.mean(rates):.3f} +- {np.std(rates):.3f}  "
              f"probes {n_probes}  false positives 0")


if __name__ == "__main__":
    main()
