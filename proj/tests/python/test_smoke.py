"""End-to-end smoke test for the python bindings: phantom -> scores -> forest."""

import os
import tempfile

import numpy as np

import onhkit


def main():
    # Phantom generation with a rendered intensity volume.
    ph = onhkit.gen_phantom("odd", seed=1, render=True, threads=4)
    labels = ph["labels"]
    spacing = ph["spacing_mm"]
    assert labels.dtype == np.uint8 and labels.ndim == 3
    assert ph["intensity"].shape == labels.shape

    # Scores agree with the phantom's closed-form volumes.
    dr = onhkit.drusen_score(labels, spacing)
    sw = onhkit.swelling_score(labels, spacing)
    assert abs(dr - ph["analytic_drusen_mm3"]) / ph["analytic_drusen_mm3"] < 0.01
    assert abs(sw - ph["analytic_swelling_mm3"]) / ph["analytic_swelling_mm3"] < 0.01

    # Compensation: nonnegative, per-B-scan full range.
    comp = onhkit.compensate(ph["intensity"], threads=4)
    assert comp.shape == ph["intensity"].shape
    assert comp.min() >= 0.0
    assert comp.max() == 1.0

    # The BMO leaves a hole in the RPE map.
    mask = onhkit.enface_rpe_mask(labels)
    assert mask.dtype == bool
    assert 0 < mask.sum() < mask.size

    # Volume round trip through .meta/.raw.
    with tempfile.TemporaryDirectory() as td:
        stem = os.path.join(td, "vol")
        onhkit.save_volume(stem, labels, spacing)
        back = onhkit.load_volume(stem)
        assert (back["data"] == labels).all()
        assert list(back["spacing_mm"]) == list(spacing)

    # Overlap metrics.
    assert onhkit.dice(labels, labels, 8) == 1.0
    assert onhkit.jaccard(labels, labels, 8) == 1.0
    zeros = np.zeros_like(labels)
    assert onhkit.dice(zeros, zeros, 8) is None
    assert onhkit.roc_auc([0.1, 0.4, 0.8], [False, True, True]) == 1.0

    # Random forest on the simulated cohort.
    cohort = onhkit.simulate_cohort(seed=3)
    X = cohort["X"]
    y = cohort["true_class"]
    assert X.shape == (150, 2)
    assert len(y) == 150
    model = onhkit.RandomForest.train(X, y, trees=50, seed=7)
    assert model.n_trees == 50
    proba = model.predict_proba(X)
    assert proba.shape == (150, 3)
    assert np.allclose(proba.sum(axis=1), 1.0)
    pred = model.predict(X)
    train_acc = sum(p == t for p, t in zip(pred, y)) / len(y)
    assert train_acc > 0.9

    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "rf.model")
        model.save(path)
        again = onhkit.RandomForest.load(path)
        assert np.array_equal(again.predict_proba(X), proba)

    # Grouped cross-validation.
    rep = onhkit.cross_validate(X, y, cohort["subject_id"], folds=5, trees=50, seed=5)
    assert rep["folds"] == 5
    assert len(rep["fold_of_eye"]) == 150
    assert rep["accuracy"]["mean"] > 0.85

    # The simulated study reproduces and reports.
    res = onhkit.run_repro(seed=42, threads=4)
    assert res["pass"] is True
    assert '"pass": true' in res["report_json"]

    # Library failures surface as the dedicated exception type.
    try:
        onhkit.load_volume(os.path.join(tempfile.gettempdir(), "no-such-stem-xyz"))
    except onhkit.DataError:
        pass
    else:
        raise AssertionError("expected DataError for a missing volume")

    print("smoke ok")


if __name__ == "__main__":
    main()
