import json

import pytest

from vecchiagp import io
from vecchiagp.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sim.csv"
    code = main(
        [
            "simulate",
            "--n", "300",
            "--d", "2",
            "--covfun", "exponential_isotropic",
            "--theta", "2.0,0.2,0.1",
            "--beta", "1.0",
            "--seed", "4",
            "--out", str(path),
        ]
    )
    assert code == EXIT_OK
    return str(path)


def _fit_args(sim_csv, out, extra=()):
    return [
        "fit",
        "--data", sim_csv,
        "--y-col", "y",
        "--x-cols", "x0",
        "--loc-cols", "loc0,loc1",
        "--covfun", "exponential_isotropic",
        "--m", "8",
        "--seed", "1",
        "--out", str(out),
        *extra,
    ]


def test_fit_happy_path(sim_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert main(_fit_args(sim_csv, out)) == EXIT_OK
    doc = io.read_fit_json(str(out))
    assert doc["converged"] in (True, False)
    assert len(doc["theta_hat"]) == 3
    assert doc["config"]["m"] == 8
    for key in ("reorder_ms", "neighbor_ms", "fit_ms"):
        assert key in doc["phase_timings_ms"]


def test_fit_minimal_invocation_defaults_to_intercept(sim_csv, tmp_path):
    out = tmp_path / "fit_min.json"
    code = main(
        ["fit", "--data", sim_csv, "--covfun", "exponential_isotropic",
         "--m", "8", "--out", str(out)]
    )
    assert code == EXIT_OK
    doc = io.read_fit_json(str(out))
    assert len(doc["beta_hat"]) == 1


def test_unknown_covfun_is_usage_error(sim_csv, tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(_fit_args(sim_csv, tmp_path / "x.json", extra=["--covfun", "matern"]))
    assert err.value.code == EXIT_USAGE


def test_m_too_large_is_data_error(sim_csv, tmp_path, capsys):
    code = main(_fit_args(sim_csv, tmp_path / "x.json", extra=["--m", "300"]))
    assert code == EXIT_DATA
    assert "error[data]" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path, capsys):
    code = main(_fit_args(str(tmp_path / "nope.csv"), tmp_path / "x.json"))
    assert code == EXIT_DATA
    assert "error[data]" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, capsys):
    # duplicated location rows with a forced zero nugget cannot factor
    path = tmp_path / "dup.csv"
    rows = ["y,loc0,loc1"] + ["1.0,0.5,0.5"] * 6
    path.write_text("\n".join(rows) + "\n")
    code = main(
        [
            "fit",
            "--data", str(path),
            "--y-col", "y",
            "--x-cols", "",
            "--loc-cols", "loc0,loc1",
            "--intercept",
            "--m", "2",
            "--start", "1.0,0.3,0.0",
            "--out", str(tmp_path / "x.json"),
        ]
    )
    assert code == EXIT_NUMERIC
    assert "error[numeric]" in capsys.readouterr().err


def test_nn_cache_round_trip(sim_csv, tmp_path):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    nn_path = tmp_path / "nn.csv"
    assert main(_fit_args(sim_csv, out1, extra=["--save-nn", str(nn_path), "--deterministic"])) == EXIT_OK
    assert main(_fit_args(sim_csv, out2, extra=["--load-nn", str(nn_path), "--deterministic"])) == EXIT_OK
    a = io.read_fit_json(str(out1))
    b = io.read_fit_json(str(out2))
    assert a["theta_hat"] == b["theta_hat"]


def test_predict_end_to_end(sim_csv, tmp_path):
    fit_out = tmp_path / "fit.json"
    assert main(_fit_args(sim_csv, fit_out)) == EXIT_OK
    pred_csv = tmp_path / "pred.csv"
    assert (
        main(
            [
                "simulate",
                "--n", "40",
                "--d", "2",
                "--seed", "9",
                "--out", str(pred_csv),
            ]
        )
        == EXIT_OK
    )
    out = tmp_path / "predictions.csv"
    code = main(
        [
            "predict",
            "--model", str(fit_out),
            "--data", sim_csv,
            "--y-col", "y",
            "--x-cols", "x0",
            "--loc-cols", "loc0,loc1",
            "--pred", str(pred_csv),
            "--m-pred", "30",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    header = out.read_text().splitlines()[0]
    assert header == "loc0,loc1,mean,sd"
    assert len(out.read_text().splitlines()) == 41


def test_deterministic_flag_gives_identical_documents(sim_csv, tmp_path):
    out = tmp_path / "det.json"
    docs = []
    for _ in range(2):
        assert main(_fit_args(sim_csv, out, extra=["--deterministic"])) == EXIT_OK
        doc = io.read_fit_json(str(out))
        doc.pop("phase_timings_ms")
        docs.append(json.dumps(doc, sort_keys=True))
    assert docs[0] == docs[1]


def test_bench_sweep_and_profile(tmp_path):
    out = tmp_path / "bench.csv"
    code = main(
        [
            "bench",
            "--mode", "sweep",
            "--n-grid", "400",
            "--m-grid", "5",
            "--backends", "seq,task",
            "--reps", "2",
            "--no-fit",
            "--deterministic",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    from vecchiagp.bench import records_from_csv

    records = records_from_csv(str(out))
    assert len(records) == 4
    prof = tmp_path / "prof.csv"
    code = main(
        ["bench", "--mode", "profile", "--n-grid", "400", "--m-grid", "5", "--out", str(prof)]
    )
    assert code == EXIT_OK


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
