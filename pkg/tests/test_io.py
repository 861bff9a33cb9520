import json

import numpy as np
import pytest

from demandml.features import assemble_space
from demandml.learners import fit_model
from demandml.learners.io import from_dict, load_model, save_model, to_dict

SPECS = ["bdm", "probbuy", "logit_surplus", "logit(C)", "lasso(C)", "rf(W)"]
PARAMS = {"rf": {"n_trees": 15, "mtry": [15], "min_leaf": [1, 5]}, "lasso": {"n_folds": 3}}


@pytest.fixture(scope="module")
def fitted(small_cohort):
    out = {}
    for spec in SPECS:
        fm = assemble_space(small_cohort, "W" if spec.endswith("(W)") else "C")
        out[spec] = (fit_model(spec, fm, seed=3, params=PARAMS), fm)
    return out


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("spec", SPECS)
def test_round_trip(fitted, spec, tmp_path):
    m, fm = fitted[spec]
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back.spec == m.spec and back.columns == m.columns and back.info == m.info
    assert np.array_equal(back.predict(fm), m.predict(fm))
    # serialization is stable
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_text() == path.read_text()


def test_rejects_foreign_files(fitted):
    d = to_dict(fitted["bdm"][0])
    with pytest.raises(ValueError, match="not a demandml"):
        from_dict({**d, "format": "other"})
    with pytest.raises(ValueError, match="version"):
        from_dict({**d, "version": 99})


def test_space_mismatch_on_predict(fitted, small_cohort):
    m, _ = fitted["rf(W)"]
    with pytest.raises(ValueError, match="model/space mismatch"):
        m.predict(assemble_space(small_cohort, "C"))


def test_file_is_json(fitted, tmp_path):
    save_model(fitted["lasso(C)"][0], tmp_path / "l.json")
    d = json.loads((tmp_path / "l.json").read_text())
    assert d["model"] == "lasso(C)" and d["format"] == "demandml-model"
