import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cyclecast.datagen import CycleSeries, case_preset, generate
from cyclecast.errors import EmptyInputError, InsufficientHistoryError, ShapeError
from cyclecast.evaluation import (
    Channels,
    EvalConfig,
    MetricReport,
    Protocol,
    compare_models,
    compute_metrics,
    forecast_holdout,
    rolling_eval,
    table_from_csv,
    table_to_csv,
    table_to_text,
)
from cyclecast.forecasters import Forecaster, LinearForecaster, build_forecaster


class Oracle(Forecaster):
    """Returns the true next row by looking it up in the full series."""

    tag = "Oracle"

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def fit(self, history):
        return self

    def predict_next(self, history):
        return self.rows[len(history)]


class Spy(Forecaster):
    """Records every value it is shown."""

    tag = "Spy"

    def __init__(self):
        self.seen = []

    def fit(self, history):
        self.seen.append(np.array(history))
        return self

    def predict_next(self, history):
        self.seen.append(np.array(history))
        return np.array([-1.0, -1.0])


class Broken(Forecaster):
    tag = "Broken"

    def fit(self, history):
        raise np.linalg.LinAlgError("boom")

    def predict_next(self, history):
        raise AssertionError("unreachable")


def loop_metrics(a, p):
    n = len(a)
    abs_sum = sq_sum = 0.0
    for x, y in zip(a, p):
        abs_sum += abs(x - y)
        sq_sum += (x - y) * (x - y)
    return abs_sum / n, sq_sum / n, math.sqrt(sq_sum / n)


# -- metrics ---------------------------------------------------------------------

def test_metrics_identity():
    r = compute_metrics([1, 2, 3], [1, 2, 3])
    assert (r.mae, r.mse, r.rmse) == (0, 0, 0)


def test_metrics_arithmetic():
    r = compute_metrics([1, 2, 3], [2, 2, 2])
    assert r.mae == pytest.approx(2 / 3) and r.mse == pytest.approx(2 / 3)
    assert r.rmse == pytest.approx(0.8165, abs=1e-4)


def test_metrics_loop_oracle(rng):
    a, p = rng.normal(size=100) * 3, rng.normal(size=100) * 3
    r = compute_metrics(a, p)
    mae, mse, rmse = loop_metrics(a, p)
    assert abs(r.mae - mae) <= 1e-12 and abs(r.mse - mse) <= 1e-12 and abs(r.rmse - rmse) <= 1e-12


def test_metrics_errors():
    with pytest.raises(EmptyInputError):
        compute_metrics([], [])
    with pytest.raises(ShapeError):
        compute_metrics([1, 2], [1, 2, 3])


def test_report_rejects_inconsistent_rmse():
    # the rmse/mse pair 1.9973 / 5.0785 is not self-consistent
    with pytest.raises(ValueError):
        MetricReport(1.7, 5.0785, 1.9973, 14)


@given(hnp.arrays(float, st.integers(1, 60), elements=st.floats(-1e4, 1e4)), st.integers(0, 2**32 - 1))
def test_metric_invariants(a, seed):
    p = a + np.random.default_rng(seed).normal(size=a.size) * 5
    r = compute_metrics(a, p)
    assert abs(r.rmse - math.sqrt(r.mse)) <= 1e-9
    assert r.mae <= r.rmse * (1 + 1e-12) + 1e-12


# -- harness ---------------------------------------------------------------------

def test_oracle_is_perfect_in_rolling_mode():
    rows = generate(case_preset(3, n_cycles=60, seed=1)).to_array()
    out = rolling_eval(Oracle(rows), rows, EvalConfig(protocol="RollingOneStep"))
    assert all(r.mae == r.mse == r.rmse == 0 for r in out.values())
    assert set(out) == {"cycle", "period"}


def test_constant_series_ols_is_exact():
    s = CycleSeries.from_lengths([29] * 40, [5] * 40)
    out = rolling_eval(LinearForecaster("ols"), s)
    assert out["cycle"].mae <= 1e-6 and out["period"].mae <= 1e-6


def test_ols_matches_hand_rolled_protocol(case1_series):
    rows = case1_series.to_array()
    h, L = 14, 3
    train = rows[:-h]
    X = np.array([train[t:t + L].ravel() for t in range(len(train) - L)])
    Y = train[L:]
    A = np.column_stack([np.ones(len(X)), X])
    beta = np.linalg.lstsq(A, Y, rcond=None)[0]
    hist = [r for r in train]
    preds = []
    for _ in range(h):
        x = np.concatenate([[1.0], np.ravel(hist[-L:])])
        preds.append(x @ beta)
        hist.append(preds[-1])
    preds = np.array(preds)
    out = rolling_eval(LinearForecaster("ols", L), case1_series)
    for ch, name in enumerate(["cycle", "period"]):
        mae, mse, _ = loop_metrics(rows[-h:, ch], preds[:, ch])
        assert out[name].mae == pytest.approx(mae, abs=1e-8)
        assert out[name].mse == pytest.approx(mse, abs=1e-8)


def test_recursive_protocol_never_sees_holdout(case1_series):
    rows = case1_series.to_array()
    spy = Spy()
    forecast_holdout(spy, rows, EvalConfig(horizon=14))
    held_out_start = len(rows) - 14
    for seen in spy.seen:
        assert len(seen) >= held_out_start
        assert np.array_equal(seen[:held_out_start], rows[:held_out_start])
        # anything beyond the training rows is a fed-back prediction
        assert np.all(seen[held_out_start:] == -1.0)


def test_rolling_protocol_reveals_actuals_one_at_a_time(case1_series):
    rows = case1_series.to_array()
    spy = Spy()
    forecast_holdout(spy, rows, EvalConfig(horizon=5, protocol=Protocol.ROLLING))
    lengths = [len(s) for s in spy.seen[1:]]
    assert lengths == list(range(len(rows) - 5, len(rows)))
    assert np.array_equal(spy.seen[-1], rows[:-1])


def test_rounding_toggle():
    rows = np.tile([29.0, 5.0], (30, 1))

    class Off(Forecaster):
        tag = "Off"

        def fit(self, history):
            return self

        def predict_next(self, history):
            return np.array([29.4, 4.6])

    raw = forecast_holdout(Off(), rows, EvalConfig(horizon=3))
    rounded = forecast_holdout(Off(), rows, EvalConfig(horizon=3, round_predictions=True))
    assert raw.predicted[0].tolist() == [29.4, 4.6]
    assert rounded.predicted[0].tolist() == [29.0, 5.0]


def test_insufficient_history():
    with pytest.raises(InsufficientHistoryError):
        rolling_eval(LinearForecaster("ols"), np.zeros((10, 2)), EvalConfig(horizon=10))


def test_channel_selection(case1_series):
    out = rolling_eval(LinearForecaster("ols"), case1_series, EvalConfig(channels=Channels.PERIOD))
    assert list(out) == ["period"]


# -- comparison table ------------------------------------------------------------

def test_compare_single_model(case1_series):
    rows = compare_models(case1_series, [LinearForecaster("ols")], EvalConfig(channels="CycleOnly"))
    assert len(rows) == 1


def test_oracle_ranks_first(case1_series):
    arr = case1_series.to_array()
    cfg = EvalConfig(protocol=Protocol.ROLLING)
    rows = compare_models(arr, [LinearForecaster("ols"), Oracle(arr)], cfg)
    assert [r.model_tag for r in rows if r.channel == "cycle"][0] == "Oracle"


def test_failed_rows_sort_last(case1_series):
    rows = compare_models(case1_series, [Broken(), LinearForecaster("ols")])
    assert [(r.channel, r.model_tag) for r in rows] == [
        ("cycle", "OLS"), ("cycle", "Broken"), ("period", "OLS"), ("period", "Broken")]
    assert "LinAlgError" in rows[1].error
    csv_rows = table_from_csv(table_to_csv(rows))
    assert csv_rows[1]["mae"] == "nan"
    assert "FAILED" in table_to_text(rows)


def test_compare_empty_model_list(case1_series):
    with pytest.raises(EmptyInputError):
        compare_models(case1_series, [])


def test_six_model_table_is_consistent(case1_series):
    names = ["ols", "huber", "lasso", "omp", "arima", "lstm"]
    models = [build_forecaster(n, epochs=20) for n in names]
    rows = compare_models(case1_series, models)
    assert len(rows) == 12
    assert {r.model_tag for r in rows} == {"OLS", "Huber", "Lasso", "OMP", "ARIMA", "LSTM"}
    for r in rows:
        assert not r.failed
        assert abs(r.report.rmse - math.sqrt(r.report.mse)) <= 1e-9
        assert r.report.mae <= r.report.rmse + 1e-12
    for ch in ("cycle", "period"):
        maes = [r.report.mae for r in rows if r.channel == ch]
        assert maes == sorted(maes)


def test_sort_ties_broken_by_tag():
    rows_arr = np.tile([29.0, 5.0], (30, 1))
    a, b = LinearForecaster("ols"), LinearForecaster("ols")
    b.tag = "AAA"
    rows = compare_models(rows_arr, [a, b], EvalConfig(channels="CycleOnly"))
    assert [r.model_tag for r in rows] == ["AAA", "OLS"]


def test_table_csv_format(case1_series):
    rows = compare_models(case1_series, [LinearForecaster("ols"), LinearForecaster("huber")])
    text = table_to_csv(rows)
    assert text.splitlines()[0] == "model,channel,mae,mse,rmse,horizon,protocol"
    parsed = table_from_csv(text)
    assert len(parsed) == 4
    assert parsed[0]["protocol"] == "RecursiveMultiStep" and parsed[0]["horizon"] == "14"
    assert float(parsed[0]["mae"]) == rows[0].report.mae
    assert table_to_csv(compare_models(case1_series, [LinearForecaster("ols"), LinearForecaster("huber")])) == text


def test_table_text_aligned(case1_series):
    rows = compare_models(case1_series, [LinearForecaster("ols"), LinearForecaster("lasso")])
    lines = table_to_text(rows).splitlines()
    assert lines[0].startswith("Model") and set(lines[1]) == {"-"}
    assert len({len(line) for line in lines[2:]}) == 1
