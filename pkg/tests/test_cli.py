import csv
import io
import json
import subprocess
import sys

import pytest

from sixday.cli import run_cli
from sixday.synth import SynthSpec, write_synthetic


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "syn.csv"
    write_synthetic(SynthSpec(n=300, seed=3), path)
    return path


class TestExitCodes:
    def test_missing_input_is_usage_error(self):
        code, _, err = call("describe")
        assert code == 1 and "input" in err

    def test_unknown_command(self):
        assert call("frobnicate")[0] == 1

    def test_empty_file_is_data_error(self, tmp_path):
        empty = tmp_path / "e.csv"
        empty.write_text("")
        code, out, err = call("describe", "-i", str(empty))
        assert code == 2 and out == "" and "EmptyDataset" in err

    def test_missing_file(self, tmp_path):
        code, _, err = call("ingest", "-i", str(tmp_path / "nope.csv"))
        assert code == 2 and err.startswith("error:")

    def test_insufficient_tail(self, synth_csv):
        code, _, err = call("fit-tail", "-i", str(synth_csv), "--dmin", "990", "--fast")
        assert code == 2 and "InsufficientTail" in err

    def test_record_below_threshold(self, synth_csv):
        code, _, err = call("forecast", "-i", str(synth_csv), "--dmin", "500", "--record", "400", "--fast")
        assert code == 2 and "RecordBelowThreshold" in err

    def test_help(self):
        assert call("--help")[0] == 0


class TestOutputs:
    def test_ingest_json(self, synth_csv):
        code, out, _ = call("ingest", "-i", str(synth_csv))
        payload = json.loads(out)
        assert code == 0 and payload["schema_version"] == 1 and payload["t_m"] == 37.0
        assert payload["men_per_woman"] is None  # synthetic data is all men

    def test_ingest_csv_round_trip(self, synth_csv, tmp_path):
        code, out, _ = call("ingest", "-i", str(synth_csv), "--format", "csv")
        assert code == 0 and out == synth_csv.read_text()

    @pytest.mark.parametrize("argv,header", [
        (["describe"], ["lower_edge", "upper_edge", "men", "women", "total"]),
        (["describe", "--table", "participation"], ["year", "total", "men", "women"]),
        (["describe", "--table", "summary"], ["group", "n", "median", "mean", "std"]),
        (["fit-growth"], ["year", "count", "model"]),
        (["fit-lognormal"], ["lower_edge", "count", "model", "fitted"]),
        (["progression"], ["gender", "date", "athlete_name", "distance_miles"]),
        (["exceptional"], ["year", "men", "women"]),
    ])
    def test_csv_headers(self, synth_csv, argv, header):
        code, out, _ = call(*argv, "-i", str(synth_csv), "--format", "csv")
        assert code == 0
        assert next(csv.reader(io.StringIO(out))) == header

    def test_describe_age_groups(self, synth_csv):
        payload = json.loads(call("describe", "-i", str(synth_csv), "--by-age-group")[1])
        labels = [g["group"] for g in payload["age_groups"]]
        assert "MU23" in labels and "W80" in labels
        assert sum(g["summary"]["n"] for g in payload["age_groups"] if g["summary"]) == payload["records"]["total"]

    def test_filters(self, synth_csv):
        payload = json.loads(call("ingest", "-i", str(synth_csv), "--min-distance", "500")[1])
        assert payload["records"]["total"] == 300

    def test_byte_identical_reruns(self, synth_csv):
        argv = ["forecast", "-i", str(synth_csv), "--dmin", "500", "--record", "640", "--fast", "--seed", "4"]
        assert call(*argv)[1] == call(*argv)[1]

    def test_output_file(self, synth_csv, tmp_path):
        target = tmp_path / "o.json"
        code, out, _ = call("fit-growth", "-i", str(synth_csv), "-o", str(target))
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["fit"]["t0"] == 1981.5


class TestPipeline:
    def test_synth_then_fit_tail(self, tmp_path):
        path = tmp_path / "s.csv"
        code, _, _ = call("synth", "--mu", "-6.35", "--sigma", "0.12", "--c-miles", "500", "--n", "500",
                          "--seed", "1", "--output", str(path))
        assert code == 0 and path.with_suffix(".json").exists()
        chain_out = tmp_path / "chain.csv"
        code, out, _ = call("fit-tail", "-i", str(path), "--dmin", "500", "--fast", "--chain-out", str(chain_out))
        payload = json.loads(out)
        assert code == 0 and payload["n"] == 500
        assert abs(payload["map_mu"] + 6.35) < 0.03 and abs(payload["map_sigma"] - 0.12) < 0.02
        assert chain_out.read_text().splitlines()[0] == "mu,sigma,log_post"
        assert json.loads(chain_out.with_suffix(".json").read_text())["rng"] == "numpy.random.PCG64"

    def test_forecast_json_keys(self, synth_csv):
        code, out, _ = call("forecast", "-i", str(synth_csv), "--dmin", "500", "--record", "640",
                            "--prior", "-6.6:-5.9:0.05:0.5", "--fast", "--horizons", "1,10")
        payload = json.loads(out)
        assert code == 0
        assert {"record_miles", "horizons", "expected_best", "breakeven_years", "map_mu", "map_sigma",
                "acceptance_fraction", "sampler_metadata", "prior_box"} <= payload.keys()
        assert [h["t_f"] for h in payload["horizons"]] == [1.0, 10.0]

    def test_forecast_expected_best_table(self, synth_csv):
        code, out, _ = call("forecast", "-i", str(synth_csv), "--dmin", "500", "--record", "640", "--fast",
                            "--format", "csv", "--table", "expected-best")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["t_f", "miles"] and len(rows) == 22

    def test_module_entry_point(self, synth_csv):
        proc = subprocess.run([sys.executable, "-m", "sixday", "ingest", "-i", str(synth_csv)],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and json.loads(proc.stdout)["schema_version"] == 1
