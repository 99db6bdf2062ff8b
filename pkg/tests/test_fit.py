import numpy as np
import pytest

from gdcavity.dicke import render_map, sweep_spectrum
from gdcavity.fit import (
    LOWER,
    UPPER,
    DipData,
    FitProblem,
    _Objective,
    crossing_weights,
    current_values,
    extract_dips,
    fit_crystal_field,
    predict_lines,
    read_dips_csv,
    synthesize_dips,
    write_dips_csv,
)
from gdcavity.optimize import numerical_jacobian

FIELDS = np.linspace(-200, 200, 41)


@pytest.fixture(scope="module")
def dips(base_dicke):
    return synthesize_dips(base_dicke, FIELDS)


def test_synthesized_dips_follow_prediction(base_dicke, dips):
    lower, upper = predict_lines(base_dicke, FIELDS)
    assert len(dips) == 82
    np.testing.assert_allclose(dips.freqs[dips.branch == LOWER], lower)
    np.testing.assert_allclose(dips.freqs[dips.branch == UPPER], upper)
    assert np.all(upper > lower)


def test_dip_data_validation():
    with pytest.raises(ValueError):
        DipData([1.0, 1.0], [10.0, 11.0], [LOWER, LOWER])
    with pytest.raises(ValueError):
        DipData([1.0], [-10.0], [LOWER])
    with pytest.raises(ValueError):
        DipData([1.0, 2.0], [10.0], [LOWER])


def test_crossing_weights(dips):
    w = crossing_weights(dips, 72.0, window=10.0, factor=3.0)
    near = np.abs(np.abs(dips.fields) - 72.0) <= 10.0
    assert np.all(w[near] == 3.0) and np.all(w[~near] == 1.0)


def test_extract_dips_from_rendered_map(base_dicke):
    fields = np.array([-150.0, -72.0, 0.0, 72.0, 150.0])
    spec = sweep_spectrum(base_dicke, fields)
    fgrid = np.arange(17600.0, 18300.0, 0.25)
    power_db = 10 * np.log10(render_map(spec, fgrid, gamma=8.8))
    data, skipped = extract_dips(power_db, fields, fgrid, omega_c=17930.7)
    for h, f, b in zip(data.fields, data.freqs, data.branch):
        j = int(np.flatnonzero(fields == h)[0])
        assert np.min(np.abs(spec.freqs[j] - f)) < 0.5
        if np.count_nonzero(data.fields == h) == 2:
            assert f == pytest.approx(spec.freqs[j, b], abs=0.5)
    assert np.count_nonzero(np.abs(data.fields) == 72.0) == 4
    assert len(data) + len(skipped) >= fields.size


def test_extract_dips_rejects_bad_grid():
    with pytest.raises(ValueError):
        extract_dips(np.zeros((2, 3)), [0.0, 1.0], [1.0, 2.0])


def test_analytic_jacobian_matches_finite_differences(base_dicke, dips):
    prob = FitProblem(dips, base_dicke, list(current_values(base_dicke)))
    obj = _Objective(prob)
    x = np.array([prob.init[n] for n in obj.names]) / obj.scale * 1.001
    Ja = obj.jacobian(x)
    Jn = numerical_jacobian(obj.residual, x, np.full(x.size, 1e-5))
    np.testing.assert_allclose(Ja, Jn, rtol=1e-4, atol=2e-3)


def test_two_parameter_round_trip(base_dicke, dips):
    truth = current_values(base_dicke)
    prob = FitProblem(
        dips, base_dicke, ["omega_c", "gc"], init={"omega_c": 17920.0, "gc": 50.0}
    )
    res = fit_crystal_field(prob)
    assert res.success
    assert res.params["omega_c"] == pytest.approx(truth["omega_c"], rel=1e-8)
    assert res.params["gc"] == pytest.approx(truth["gc"], rel=1e-6)
    assert all(np.diff(res.history) <= 0)
    assert res.config(base_dicke).gc == pytest.approx(res.params["gc"])


def test_fit_is_deterministic(base_dicke, dips):
    def run():
        prob = FitProblem(dips, base_dicke, ["B44", "theta"], init={"B44": -24.0, "theta": 81.0}, seed=5)
        return fit_crystal_field(prob).params

    assert run() == run()


def test_fit_problem_validation(base_dicke, dips):
    with pytest.raises(ValueError):
        FitProblem(dips, base_dicke, [])
    with pytest.raises(ValueError):
        FitProblem(dips, base_dicke, ["B99"])
    with pytest.raises(ValueError):
        FitProblem(dips, base_dicke, ["gc"], bounds={"gc": (0.0, 10.0)})
    few = dips.take(np.arange(3))
    with pytest.raises(ValueError):
        fit_crystal_field(FitProblem(few, base_dicke, ["gc", "omega_c"]))


def test_dips_csv_round_trip(tmp_path, dips):
    dips.weights = crossing_weights(dips, 72.0)
    path = tmp_path / "dips.csv"
    write_dips_csv(dips, path)
    back = read_dips_csv(path)
    np.testing.assert_allclose(back.freqs, dips.freqs, rtol=1e-8)
    np.testing.assert_array_equal(back.branch, dips.branch)
    np.testing.assert_array_equal(back.weights, dips.weights)
    (tmp_path / "bad.csv").write_text("H0_G,freq_MHz,branch,weight\n1,2,sideways,1\n")
    with pytest.raises(ValueError, match="bad.csv:2"):
        read_dips_csv(tmp_path / "bad.csv")
