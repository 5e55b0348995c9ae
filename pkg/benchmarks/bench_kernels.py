"""Time the compiled kernels against the pure Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--students 367]

Prints one row per workload with the best-of-N wall time for each backend
and the speedup.  The workloads are the ones the pipeline actually runs:
GBDT training, batched Shapley attribution and betweenness centrality.
"""
import argparse
import timeit

from acadrisk import SynthSpec, TrainConfig, betweenness_centrality, explain_rows, generate, train_gbdt
from acadrisk._backend import get
from acadrisk.network import synthesize


def workloads(n_students):
    cohort, layers, _ = generate(SynthSpec(n_students=n_students, seed=0))
    graph = synthesize(layers)
    config = TrainConfig(num_trees=100)
    model = train_gbdt(cohort.X, cohort.y, config, cohort.feature_names)
    return {
        "train_gbdt (100 trees)": lambda b: train_gbdt(cohort.X, cohort.y, config, backend=b),
        "explain_rows (all students)": lambda b: explain_rows(model, cohort.X, backend=b),
        "predict (all students)": lambda b: model.raw_score(cohort.X, backend=b),
        "betweenness": lambda b: betweenness_centrality(graph, backend=b),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--students", type=int, default=367)
    args = parser.parse_args()
    try:
        get("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")

    print(f"{'workload':<30}{'cython s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in workloads(args.students).items():
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
             for b in ("cython", "python")}
        print(f"{name:<30}{t['cython']:>12.4f}{t['python']:>12.4f}{t['python'] / t['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
