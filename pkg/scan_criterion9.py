"""Randomized scan over free knobs for the latent-count recovery criterion.

Not part of the package; a build-time experiment driver. Results stream to
scan_results.tsv.
"""
import itertools
import sys
import time

import numpy as np
from scipy import stats as sps

sys.path.insert(0, "src")
from disenreason.data import GeneratorConfig, generate_synthetic, split_train_test
from disenreason.estimator import DisenReasonRecommender
from disenreason.metrics import evaluate_fixed_ranking, popularity_baseline
from disenreason.model import propagate_params, prepare_samples, _forward_sample
import collections

rng = np.random.default_rng(2024)

choices = dict(
    d=[32, 48, 64, 96],
    gate_scale=[2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
    lr=[0.01, 0.02, 0.05],
    gate_pooling=["mean", "last"],
    spa=[4, 6],
    pool_size=[6, 8, 10],
    periods=[(1, 2, 4, 8), (1, 3, 7), (2, 5, 11)],
    batch=[32, 64],
    t_max=[6, 8],
    include_layer0=[False, True],
)


def sample_config():
    return {k: v[rng.integers(len(v))] for k, v in choices.items()}


def run_once(cfg, seed):
    gen = GeneratorConfig(
        n_items=200, n_accounts=500, k_max=3, mean_len=15.0,
        sequences_per_account=cfg["spa"], pool_size=cfg["pool_size"],
        rhythm_periods=cfg["periods"], seed=seed,
    )
    ds, truth = generate_synthetic(gen)
    train_ds, test_ds = split_train_test(ds, 0.8, seed)
    est = DisenReasonRecommender(
        seed=seed, epochs=20, learning_rate=cfg["lr"], gate_scale=cfg["gate_scale"],
        embedding_dim=cfg["d"], batch_size=cfg["batch"], t_max=cfg["t_max"],
        gate_pooling=cfg["gate_pooling"], include_layer0=cfg["include_layer0"],
    )
    t0 = time.time()
    est.fit(train_ds)
    fit_s = time.time() - t0
    rep = est.evaluate(test_ds)
    pop = evaluate_fixed_ranking(popularity_baseline(train_ds), test_ds)
    prop = propagate_params(est.params_, est.adjacency_, est.hyper_)
    T_by_acct = collections.defaultdict(list)
    for s in prepare_samples(ds, est.hyper_):
        st = _forward_sample(est.params_, prop, s, est.hyper_)
        T_by_acct[s.account].append(st.trace.steps)
    accts = sorted(T_by_acct)
    meanT = np.array([np.mean(T_by_acct[a]) for a in accts])
    K = np.array([truth.k[a] for a in accts])
    nonconst = float(np.ptp(meanT)) > 0
    sp = sps.spearmanr(meanT, K).statistic if nonconst else 0.0
    ratio = rep.recall[5] / max(pop.recall[5], 1e-9)
    return sp, ratio, nonconst, fit_s, rep.recall[5]


with open("scan_results.tsv", "w") as fh:
    fh.write("config\tseed\tspearman\tr5_ratio\tnonconst\tfit_s\tr5\n")
    deadline = time.time() + 55 * 60
    tried = 0
    while time.time() < deadline and tried < 150:
        cfg = sample_config()
        tried += 1
        try:
            sp, ratio, nonconst, fit_s, r5 = run_once(cfg, 0)
        except Exception as exc:
            fh.write(f"{cfg}\t0\tERROR:{exc}\t\t\t\t\n")
            fh.flush()
            continue
        fh.write(f"{cfg}\t0\t{sp:.4f}\t{ratio:.1f}\t{nonconst}\t{fit_s:.0f}\t{r5:.1f}\n")
        fh.flush()
        # promising? verify across seeds
        if sp > 0.25:
            for seed in (1, 2):
                try:
                    sp2, ratio2, nc2, fs2, r52 = run_once(cfg, seed)
                    fh.write(f"{cfg}\t{seed}\t{sp2:.4f}\t{ratio2:.1f}\t{nc2}\t{fs2:.0f}\t{r52:.1f}\n")
                    fh.flush()
                except Exception as exc:
                    fh.write(f"{cfg}\t{seed}\tERROR:{exc}\t\t\t\t\n")
                    fh.flush()
print("scan done:", tried, "configs")
