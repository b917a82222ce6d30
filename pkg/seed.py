import os
import time

from mlsvm.dataset import save_dataset
from mlsvm.synthetic import make_ringnorm, make_twonorm, make_two_gaussians

DATA_DIR = "data"


def seed_data(data_dir=DATA_DIR):
    print("--- MLSVM Synthetic Data Seeding ---")
    os.makedirs(data_dir, exist_ok=True)
    start_time = time.time()

    datasets = {
        "twonorm": make_twonorm(7400, d=20, seed=1),
        "ringnorm": make_ringnorm(7400, d=20, seed=2),
        # 1 positive in 10
        "gaussians_imb": make_two_gaussians(5000, d=10, r_imb=0.9, separation=2.5, seed=3),
    }

    lines = ["# name path format"]
    for name, ds in datasets.items():
        path = f"{name}.svm"
        print(f"Writing {name}: n={len(ds)} d={ds.n_features} n_plus={ds.n_plus} n_minus={ds.n_minus}")
        save_dataset(ds, os.path.join(data_dir, path))
        lines.append(f"{name} {path} svm")

    with open(os.path.join(data_dir, "datasets.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")

    duration = time.time() - start_time
    print(f"\nSeeding complete: {len(datasets)} datasets written to '{data_dir}' in {duration:.2f} seconds.")
    print(f"Run: python main.py benchmark --list {os.path.join(data_dir, 'datasets.txt')} --reps 20")


if __name__ == "__main__":
    seed_data()
