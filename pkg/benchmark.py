import time

from mlsvm.dataset import apply_normalization, normalize_features, stratified_split
from mlsvm.engine import MultilevelConfig, predict_final, train_flat, train_multilevel
from mlsvm.coarsening import CoarseningConfig
from mlsvm.synthetic import make_two_gaussians


def run_benchmark():
    # imbalanced two-Gaussian data, large enough for a few levels
    N_POINTS = 6000
    ds = make_two_gaussians(N_POINTS, d=8, r_imb=0.85, separation=2.0, seed=11)
    train_set, test_set = stratified_split(ds, 0.2, seed=11)
    train_set, norm = normalize_features(train_set, "minmax")
    test_set = apply_normalization(test_set, norm)
    print(f"Training on {len(train_set)} points ({train_set.n_plus} positive), testing on {len(test_set)}...")

    cfg = MultilevelConfig(coarsening=CoarseningConfig(stop_size=300), q_dt=2000, seed=11)

    start_time = time.time()
    multilevel = train_multilevel(train_set, cfg)
    ml_duration = time.time() - start_time
    ml_metrics = predict_final(multilevel.model, test_set)
    print(f"Multilevel took: {ml_duration:.2f} seconds "
          f"({len(multilevel.reports)} levels, kappa={ml_metrics.kappa:.4f})")

    start_time = time.time()
    flat = train_flat(train_set, cfg)
    flat_duration = time.time() - start_time
    flat_metrics = predict_final(flat.model, test_set)
    print(f"Flat UD-tuned WSVM took: {flat_duration:.2f} seconds (kappa={flat_metrics.kappa:.4f})")

    if abs(ml_metrics.kappa - flat_metrics.kappa) <= 0.03:
        print("[v] Success: multilevel kappa is within 0.03 of the flat solver.")
    else:
        print(f"[x] Quality gap: multilevel {ml_metrics.kappa:.4f} vs flat {flat_metrics.kappa:.4f}")

    speedup = flat_duration / ml_duration if ml_duration > 0 else float('inf')
    print(f"\nSpeedup: {speedup:.2f}x faster with multilevel training!")


if __name__ == "__main__":
    run_benchmark()
