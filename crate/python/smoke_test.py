"""End-to-end smoke test of the nimd Python extension.

Build and install first, e.g. `maturin develop --release` or
`maturin build --release && pip install target/wheels/nimd-*.whl`.
"""

import math
import os
import tempfile

import nimd


def main() -> None:
    ds = nimd.generate("example1", 2000, seed=7, alpha0=-1.7, delta=0.0)
    assert ds.n == 2000 and ds.d == 2 and 0 < ds.n_observed < ds.n
    model = nimd.ModelConfig([[0, 0], [1, 0], [0, 1]], [1])

    res = nimd.fit(ds, model)
    truth = nimd.compute_truth("example1", -1.7, draws=1_000_000, seed=1)
    assert abs(truth["tau0"] - 2.177) < 0.005, truth
    se = math.sqrt(res["sigma2_tau"] / ds.n)
    assert abs(res["tau_hat"] - truth["tau0"]) < 4 * se, (res["tau_hat"], truth["tau0"], se)
    assert res["wald_ci"]["lower"] < res["tau_hat"] < res["wald_ci"]["upper"]
    print(f"tau_hat {res['tau_hat']:.4f}  wald {res['wald_ci']['lower']:.4f}..{res['wald_ci']['upper']:.4f}")

    for form in ("squared_b2", "linearized"):
        assert nimd.fit(ds, model, h1_form=form)["tau_hat"] == res["tau_hat"]

    boot = nimd.bootstrap(ds, model, resamples=199, seed=3)
    assert boot == nimd.bootstrap(ds, model, resamples=199, seed=3)
    assert boot["n_successful"] + sum(boot["failures"].values()) == 199
    print(f"bootstrap-t {boot['lower']:.4f}..{boot['upper']:.4f}")

    pct = nimd.bootstrap(ds, model, resamples=199, seed=3, method="percentile", estimator="gmm-2")
    assert pct["lower"] <= pct["upper"]

    for est in ("proposed", "normal-plugin", "ipw", "gmm-2"):
        e = nimd.estimate(est, ds, model)
        print(f"{est:>14}: tau {e['tau_hat']:.4f} gamma {e['gamma_hat']:.3f} converged {e['converged']}")

    diag = nimd.diagnose(ds, model)
    assert 0.0 <= diag["ncv"]["p_value"] <= 1.0 and 0.0 <= diag["uss"]["p_value"] <= 1.0

    sel = nimd.generate("selection", 20000, seed=2024)
    prof = nimd.profile_gamma(sel, [1], -1.0, [-1.0], lo=-2.0, hi=6.0, step=0.05)
    assert len(prof["roots"]) == 2, prof["roots"]
    print("profile roots", [round(r, 3) for r in prof["roots"]])

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.csv")
        ds.to_csv(path)
        back = nimd.Dataset.from_csv(path)
        assert back.y == ds.y and back.r == ds.r and back.x == ds.x

    small = nimd.Dataset([1.0, None, 2.5, 0.5, None, 3.0], [[0.1], [0.4], [0.9], [-0.3], [1.2], [1.5]])
    assert small.r == [1, 0, 1, 1, 0, 1]
    assert nimd.ModelConfig.from_json(model.to_json()).to_json() == model.to_json()

    try:
        nimd.fit(ds, nimd.ModelConfig([[0, 0], [1, 0]], [1]))
    except nimd.NimdError as err:
        assert str(err).startswith("IDENTIFIABILITY"), err
    else:
        raise AssertionError("non-identifiable model was accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
