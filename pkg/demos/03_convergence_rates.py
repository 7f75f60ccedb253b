"""Strong and weak averaging rates on a reduced budget.

The slow-fast solution and the averaged solution share the slow noise path, so
their difference isolates the averaging error.  Full-size runs use the CLI:

    slowfast strong-rate --config demos/configs/strong.toml

Run: python demos/03_convergence_rates.py
"""

from slowfast.experiments import ExperimentSpec, run_strong_rate, run_weak_rate

common = dict(eps_grid=(2**-4, 2**-5, 2**-6, 2**-7), replicas=500)

for runner, kind in ((run_strong_rate, "strong-rate"), (run_weak_rate, "weak-rate")):
    rep = runner(ExperimentSpec(kind=kind, **common))
    print(f"\n{kind}")
    print("   epsilon      error     stderr")
    for eps, err, se, *_ in rep.rows():
        print(f"{eps:10.6f} {err:10.3e} {se:10.1e}")
    print(f"fitted slope {rep.slope:.3f} +/- {rep.halfwidth:.3f}")
