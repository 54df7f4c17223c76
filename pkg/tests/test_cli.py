import json
import time

import numpy as np
import pytest

import krclust as kc
from krclust import core, datagen, metrics
from krclust.cli import dispatch


def run(*argv):
    return dispatch(list(argv))


@pytest.fixture()
def blob_csv(tmp_path):
    path = tmp_path / "blobs.csv"
    assert run(
        "gen", "--kind", "blobs", "--n", "120", "--m", "2", "--k", "4",
        "--seed", "3", "--output", str(path),
    ) == 0
    return path


class TestDispatch:
    def test_help_exits_zero(self):
        assert run("--help") == 0
        assert run("fit", "--help") == 0

    def test_unknown_flag_rejected(self):
        assert run("design", "--balanced-pair", "40", "--bogus") == 1

    def test_unknown_subcommand(self):
        assert run("frobnicate") == 1

    def test_missing_file_is_user_error(self, tmp_path):
        assert run("fit", "--input", str(tmp_path / "nope.csv"), "--h", "2,2") == 1

    def test_bad_csv_is_user_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        assert run("fit", "--input", str(path), "--h", "2,2") == 1


class TestDesign:
    def test_balanced_pair_40(self, capsys):
        assert run("design", "--balanced-pair", "40") == 0
        assert capsys.readouterr().out.strip() == "8 5"

    def test_prime_warning(self, capsys):
        assert run("design", "--balanced-pair", "13") == 0
        out = capsys.readouterr()
        assert out.out.strip() == "13 1"
        assert "saves nothing" in out.err

    def test_optimal_sets(self, capsys):
        assert run("design", "--optimal-sets", "12") == 0
        assert capsys.readouterr().out.strip() == "4 81"

    def test_set_bounds(self, capsys):
        assert run("design", "--set-bounds", "9,3") == 0
        assert capsys.readouterr().out.strip() == "2 5"

    def test_exactly_one_mode(self):
        assert run("design") == 1
        assert run("design", "--balanced-pair", "4", "--optimal-sets", "4") == 1


class TestGenFitEval:
    def test_gen_writes_labels_column(self, blob_csv):
        data = datagen.read_csv(blob_csv, label_column=-1)
        assert data.n == 120 and data.m == 2
        assert len(np.unique(data.labels)) == 4

    def test_gen_deterministic(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            assert run(
                "gen", "--kind", "kr", "--h", "2,2", "--m", "3",
                "--points-per-cluster", "5", "--noise-std", "0.1",
                "--seed", "42", "--output", str(path),
            ) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_fit_and_report_self_consistency(self, blob_csv, tmp_path):
        model_path = tmp_path / "model.json"
        report_path = tmp_path / "report.json"
        assert run(
            "fit", "--input", str(blob_csv), "--label-column", "-1",
            "--h", "2,2", "--agg", "sum", "--restarts", "5", "--seed", "7",
            "--output", str(model_path), "--report", str(report_path),
        ) == 0
        report = json.loads(report_path.read_text())
        assert report["schema_version"] == 1
        protosets = kc.load_model(model_path)
        cells = datagen.read_labels(tmp_path / "model.assignments.csv")
        data = datagen.read_csv(blob_csv, label_column=-1)
        recomputed = metrics.inertia(
            data.points, core.materialize_centroids(protosets), cells
        )
        assert report["inertia"] == pytest.approx(recomputed, rel=1e-12)
        assert set(report["metrics"]) == {"ari", "acc", "nmi", "purity"}
        assert report["param_report"]["vector_count"] == 4

    def test_fit_deterministic_reports(self, blob_csv, tmp_path, monkeypatch):
        monkeypatch.setattr(time, "perf_counter", lambda: 0.0)
        report = tmp_path / "r.json"
        reports = []
        for _ in range(2):
            assert run(
                "fit", "--input", str(blob_csv), "--h", "3,3", "--agg", "sum",
                "--restarts", "20", "--seed", "7", "--report", str(report),
            ) == 0
            reports.append(report.read_bytes())
        assert reports[0] == reports[1]

    def test_fit_tuple_column(self, blob_csv, tmp_path):
        model_path = tmp_path / "m.json"
        assert run(
            "fit", "--input", str(blob_csv), "--h", "2,2", "--seed", "1",
            "--restarts", "2", "--output", str(model_path), "--tuple-column",
        ) == 0
        first = (tmp_path / "m.assignments.csv").read_text().split("\n")[0]
        flat, tup = first.split(",")
        assert tuple(int(t) for t in tup.split(":")) == core.flat_to_cell(int(flat), (2, 2))

    def test_fit_kmeans_and_naive(self, blob_csv, tmp_path):
        assert run(
            "fit", "--input", str(blob_csv), "--kmeans", "4", "--seed", "0",
            "--restarts", "3", "--output", str(tmp_path / "lloyd.json"),
        ) == 0
        lloyd_model = kc.load_model(tmp_path / "lloyd.json")
        assert lloyd_model.cardinalities == (4,)
        assert run(
            "fit", "--input", str(blob_csv), "--naive", "--h", "2,2",
            "--seed", "0", "--restarts", "3",
        ) == 0
        assert run(
            "fit", "--input", str(blob_csv), "--kmeans", "4", "--naive",
        ) == 1

    def test_fit_standardize(self, blob_csv, tmp_path):
        report = tmp_path / "r.json"
        assert run(
            "fit", "--input", str(blob_csv), "--label-column", "-1",
            "--h", "2,2", "--seed", "2",
            "--restarts", "2", "--standardize", "--report", str(report),
        ) == 0
        doc = json.loads(report.read_text())
        assert doc["config"]["standardize"] is True
        assert len(doc["config"]["feature_mean"]) == 2

    def test_eval_identical_files(self, tmp_path, capsys):
        path = tmp_path / "labels.csv"
        datagen.write_labels([0, 1, 2, 0, 1, 2], path)
        assert run("eval", "--pred", str(path), "--truth", str(path)) == 0
        out = capsys.readouterr().out
        assert "ari=1.000000" in out
        assert "acc=1.000000" in out
        assert "nmi=1.000000" in out
        assert "purity=1.000000" in out

    def test_eval_length_mismatch(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        datagen.write_labels([0, 1], a)
        datagen.write_labels([0, 1, 2], b)
        assert run("eval", "--pred", str(a), "--truth", str(b)) == 1


class TestQuantize:
    def test_constant_image_identity(self, tmp_path):
        src = tmp_path / "flat.ppm"
        out = tmp_path / "q.ppm"
        pixel = bytes([77, 153, 230])
        src.write_bytes(b"P6\n4 2\n255\n" + pixel * 8)
        report = tmp_path / "r.json"
        assert run(
            "quantize", "--input", str(src), "--output", str(out),
            "--h", "2,2", "--agg", "product", "--restarts", "3", "--seed", "1",
            "--report", str(report),
        ) == 0
        assert out.read_bytes() == src.read_bytes()
        assert json.loads(report.read_text())["inertia"] == pytest.approx(0.0, abs=1e-20)

    def test_exact_kr_colors(self, tmp_path):
        # dyadic sums over maxval 64 survive /maxval exactly, so the four
        # colors form an exact additive structure in pixel space
        a = [8, 24]
        b = [16, 40]
        colors = [bytes([ai + bj] * 3) for ai in a for bj in b]
        src = tmp_path / "kr.ppm"
        src.write_bytes(b"P6\n8 4\n64\n" + b"".join(c * 8 for c in colors))
        assert run(
            "quantize", "--input", str(src), "--output", str(tmp_path / "o.ppm"),
            "--h", "2,2", "--agg", "sum", "--restarts", "20", "--seed", "3",
            "--report", str(tmp_path / "r.json"),
        ) == 0
        inertia = json.loads((tmp_path / "r.json").read_text())["inertia"]
        assert inertia == 0.0

    def test_kmeans_codebook(self, tmp_path):
        src = tmp_path / "img.ppm"
        rng = np.random.default_rng(0)
        datagen.write_ppm(core.Dataset(points=rng.uniform(size=(64, 3))), 8, 8, src)
        assert run(
            "quantize", "--input", str(src), "--output", str(tmp_path / "o.ppm"),
            "--kmeans", "4", "--restarts", "2", "--seed", "0",
        ) == 0

    def test_saved_model_applied(self, tmp_path):
        # a codebook whose cells exactly cover the image colors gives an
        # identical requantization without fitting anything
        a = [8, 24]
        b = [16, 40]
        colors = [bytes([ai + bj] * 3) for ai in a for bj in b]
        src = tmp_path / "kr.ppm"
        src.write_bytes(b"P6\n8 4\n64\n" + b"".join(c * 8 for c in colors))
        ps = core.ProtoSets(
            (
                np.array([[v / 64.0] * 3 for v in a]),
                np.array([[v / 64.0] * 3 for v in b]),
            ),
            "sum",
        )
        model_path = tmp_path / "codebook.json"
        kc.save_model(ps, model_path)
        out = tmp_path / "o.ppm"
        report = tmp_path / "r.json"
        assert run(
            "quantize", "--input", str(src), "--output", str(out),
            "--model", str(model_path), "--report", str(report),
        ) == 0
        doc = json.loads(report.read_text())
        assert doc["inertia"] == 0.0
        assert doc["param_report"]["vector_count"] == 4
        # output is re-encoded at maxval 255, so compare decoded values
        np.testing.assert_allclose(
            datagen.read_ppm(out).dataset.points,
            datagen.read_ppm(src).dataset.points,
            atol=0.5 / 255.0,
        )


class TestFed:
    def test_ledger_output(self, blob_csv, tmp_path):
        ledger_path = tmp_path / "ledger.csv"
        assert run(
            "fed", "--input", str(blob_csv), "--label-column", "-1",
            "--clients", "3", "--rounds", "4", "--h", "2,2", "--agg", "sum",
            "--seed", "5", "--output", str(ledger_path),
        ) == 0
        lines = ledger_path.read_text().strip().split("\n")
        assert lines[0] == "round,s2c_bytes,c2s_bytes,inertia"
        assert len(lines) == 5

    def test_lloyd_variant(self, blob_csv, tmp_path):
        assert run(
            "fed", "--input", str(blob_csv), "--label-column", "-1",
            "--clients", "2", "--rounds", "2", "--kmeans", "4", "--seed", "1",
            "--report", str(tmp_path / "r.json"),
        ) == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["config"]["model"] == "lloyd"
