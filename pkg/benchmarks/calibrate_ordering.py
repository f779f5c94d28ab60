"""Calibration sweep for the mode-ordering experiment.

Trains the three modes on the same overlapping synthetic dataset across a
grid of noise levels and seeds, reporting held-out LDA and Recall@1 per
mode.  Used to pick the dataset constants baked into the acceptance test.
"""

import argparse
import time


from hdc.data import SamplerConfig, SynthConfig, synth_clusters, train_eval_split
from hdc.evaluate import evaluate_model
from hdc.model import CascadeConfig, init_model
from hdc.training import TrainConfig, train


def run_mode(mode, dataset, seed, iterations, lr=0.01):
    config = CascadeConfig(
        levels=3,
        input_dim=dataset.dim,
        block_layers=((64,), (64,), (64,)),
        embed_dims=(16, 16, 16),
        level_weights=(1.0, 1.0, 1.0),
        hard_fractions=(100.0, 50.0, 20.0),
        margin=1.0,
        seed=seed,
    )
    model = init_model(config)
    tc = TrainConfig(iterations=iterations, lr_initial=lr, lr_decay_every=800,
                     lr_decay_factor=0.1, momentum=0.9, mode=mode, seed=seed)
    train(model, dataset, tc, SamplerConfig(10, 10, seed=seed))
    return model


def ordering_trial(noise, scale, hard_mix, seed, iterations):
    data = synth_clusters(SynthConfig(10, 50, 32, centroid_scale=scale,
                                      noise_sigma=noise, hard_fraction_mix=hard_mix,
                                      seed=seed))
    train_set, heldout = train_eval_split(data, 20)
    results = {}
    for mode in ("hdc", "hard_single", "plain_contrastive"):
        model = run_mode(mode, train_set, seed, iterations)
        level = None if mode == "hdc" else model.config.levels
        report = evaluate_model(model, heldout.features, heldout.labels, ks=(1,), level=level)
        results[mode] = (report.lda, report.recall_at[1])
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--noises", default="0.35,0.5,0.65")
    parser.add_argument("--scale", type=float, default=1.0)
    parser.add_argument("--hard-mix", type=float, default=0.15)
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--iterations", type=int, default=2000)
    args = parser.parse_args()

    for noise in [float(v) for v in args.noises.split(",")]:
        for seed in [int(v) for v in args.seeds.split(",")]:
            t0 = time.perf_counter()
            res = ordering_trial(noise, args.scale, args.hard_mix, seed, args.iterations)
            dt = time.perf_counter() - t0
            lda = {m: res[m][0] for m in res}
            rec = {m: res[m][1] for m in res}
            ok_lda = lda["hdc"] > lda["hard_single"] > lda["plain_contrastive"]
            ok_rec = rec["hdc"] >= rec["plain_contrastive"] + 0.03
            print(
                f"noise={noise:.2f} seed={seed} "
                f"lda: hdc={lda['hdc']:.3f} hard={lda['hard_single']:.3f} "
                f"plain={lda['plain_contrastive']:.3f} | "
                f"r@1: hdc={rec['hdc']:.3f} hard={rec['hard_single']:.3f} "
                f"plain={rec['plain_contrastive']:.3f} | "
                f"lda_order={'Y' if ok_lda else 'n'} recall_gap={'Y' if ok_rec else 'n'} "
                f"({dt:.1f}s)"
            )


if __name__ == "__main__":
    main()
