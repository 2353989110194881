import numpy as np
import pytest

import ormachine as om
from ormachine import io as orm_io


def write_ratings(path, rows, sep="\t"):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(sep.join(str(v) for v in row) + "\n")


class TestLoadMovielens:
    def test_tab_separated_line(self, tmp_path):
        f = tmp_path / "u.data"
        write_ratings(f, [(196, 242, 3, 881250949)])
        table = orm_io.load_movielens(f, "100k")
        assert table.n_ratings == 1
        assert table.users.tolist() == [196]
        assert table.items.tolist() == [242]
        assert table.entries.tolist() == [[0, 0, 3]]

    def test_double_colon_line(self, tmp_path):
        f = tmp_path / "ratings.dat"
        write_ratings(f, [(1, 1193, 5, 978300760)], sep="::")
        table = orm_io.load_movielens(f, "1m")
        assert table.entries.tolist() == [[0, 0, 5]]

    def test_index_maps_follow_first_appearance(self, tmp_path):
        f = tmp_path / "u.data"
        write_ratings(f, [(9, 7, 3, 0), (2, 7, 4, 1), (9, 1, 5, 2)])
        table = orm_io.load_movielens(f, "100k")
        assert table.users.tolist() == [9, 2]
        assert table.items.tolist() == [7, 1]

    def test_duplicates_last_wins(self, tmp_path, caplog):
        f = tmp_path / "u.data"
        write_ratings(f, [(1, 2, 3, 0), (1, 2, 5, 1)])
        with caplog.at_level("WARNING"):
            table = orm_io.load_movielens(f, "100k")
        assert table.n_ratings == 1
        assert table.entries[0, 2] == 5
        assert "duplicate" in caplog.text

    def test_malformed_line_reports_number(self, tmp_path):
        f = tmp_path / "u.data"
        f.write_text("1\t2\t3\t4\nbroken line\n")
        with pytest.raises(ValueError, match=":2:"):
            orm_io.load_movielens(f, "100k")

    def test_rating_out_of_range(self, tmp_path):
        f = tmp_path / "u.data"
        write_ratings(f, [(1, 2, 9, 0)])
        with pytest.raises(ValueError, match="outside 1..5"):
            orm_io.load_movielens(f, "100k")

    def test_unknown_format_rejected(self, tmp_path):
        f = tmp_path / "u.data"
        f.write_text("")
        with pytest.raises(ValueError, match="unknown format"):
            orm_io.load_movielens(f, "2m")


class TestBinarizeGlobalMean:
    def test_simple_threshold(self, tmp_path):
        f = tmp_path / "u.data"
        write_ratings(f, [(1, 1, 5, 0), (1, 2, 4, 0), (2, 1, 1, 0)])
        table = orm_io.load_movielens(f, "100k")
        x = orm_io.binarize_global_mean(table)  # mean 10/3
        assert x.trits[0, 0] == 1
        assert x.trits[0, 1] == 1
        assert x.trits[1, 0] == -1
        assert x.trits[1, 1] == 0  # unrated pair stays missing

    def test_ties_fall_to_negative_class(self, tmp_path):
        f = tmp_path / "u.data"
        write_ratings(f, [(1, 1, 3, 0), (1, 2, 3, 0), (2, 1, 3, 0)])
        table = orm_io.load_movielens(f, "100k")
        x = orm_io.binarize_global_mean(table)
        observed = x.trits[x.trits != 0]
        assert (observed == -1).all()

    def test_support_preserved(self, tmp_path):
        f = tmp_path / "u.data"
        rng = np.random.default_rng(0)
        rows = [
            (int(u), int(i), int(r), 0)
            for u, i, r in zip(
                rng.integers(1, 20, 50), rng.integers(1, 30, 50), rng.integers(1, 6, 50)
            )
        ]
        write_ratings(f, rows)
        table = orm_io.load_movielens(f, "100k")
        x = orm_io.binarize_global_mean(table)
        assert x.observed_count == table.n_ratings


class TestObserveFractionSplit:
    def test_even_split(self):
        trits = np.zeros((2, 5), dtype=np.int8)
        trits[0, :] = 1
        trits[1, :] = -1
        split = orm_io.observe_fraction_split(om.ObservedMatrix(trits), 0.5, seed=0)
        assert split.train.observed_count == 5
        assert len(split.test_cells) == 5

    def test_union_restores_observed_set(self):
        rng = np.random.default_rng(1)
        trits = rng.choice([-1, 0, 1], size=(10, 8)).astype(np.int8)
        x = om.ObservedMatrix(trits)
        split = orm_io.observe_fraction_split(x, 0.3, seed=2)
        train_mask = split.train.trits != 0
        test_mask = np.zeros_like(train_mask)
        test_mask[split.test_cells[:, 0], split.test_cells[:, 1]] = True
        assert not (train_mask & test_mask).any()
        assert np.array_equal(train_mask | test_mask, trits != 0)
        # truths match the source on held-out cells
        src_bits = (trits[test_mask] == 1).astype(np.int8)
        assert np.array_equal(np.sort(split.test_truths), np.sort(src_bits))

    def test_count_arithmetic(self):
        trits = np.ones((100, 100), dtype=np.int8)
        split = orm_io.observe_fraction_split(om.ObservedMatrix(trits), 0.1, seed=3)
        assert split.train.observed_count == 1000

    def test_empty_side_rejected(self):
        x = om.ObservedMatrix(np.array([[1, -1]], dtype=np.int8))
        with pytest.raises(om.DegenerateError):
            orm_io.observe_fraction_split(x, 0.1)

    def test_all_missing_rejected(self):
        x = om.ObservedMatrix(np.zeros((3, 3), dtype=np.int8))
        with pytest.raises(om.DegenerateError):
            orm_io.observe_fraction_split(x, 0.5)


class TestMatrixRoundTrip:
    def test_single_missing_cell_csv_body(self, tmp_path):
        f = tmp_path / "m.csv"
        orm_io.save_matrix(f, om.ObservedMatrix(np.array([[0]], dtype=np.int8)))
        lines = f.read_text().splitlines()
        assert lines == ["rows,cols", "1,1", "?"]

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        trits = rng.choice([-1, 0, 1], size=(50, 50)).astype(np.int8)
        f = tmp_path / "m.csv"
        orm_io.save_matrix(f, trits_matrix := om.ObservedMatrix(trits))
        loaded = orm_io.load_matrix(f)
        assert loaded == trits_matrix

    def test_binary_round_trip_and_size(self, tmp_path):
        rng = np.random.default_rng(5)
        trits = rng.choice([-1, 0, 1], size=(37, 21)).astype(np.int8)
        f = tmp_path / "m.orm"
        orm_io.save_matrix(f, om.ObservedMatrix(trits))
        assert f.stat().st_size == 20 + 37 * 21
        loaded = orm_io.load_matrix(f)
        assert np.array_equal(loaded.trits, trits)

    def test_binary_matrix_input(self, tmp_path):
        f = tmp_path / "m.csv"
        orm_io.save_matrix(f, np.eye(3, dtype=np.int8))
        loaded = orm_io.load_matrix(f)
        assert np.array_equal(loaded.trits, 2 * np.eye(3, dtype=np.int8) - 1)

    def test_corrupt_magic(self, tmp_path):
        f = tmp_path / "m.orm"
        f.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(ValueError, match="bad magic"):
            orm_io.load_matrix(f, fmt="binary")

    def test_truncated_payload(self, tmp_path):
        f = tmp_path / "m.orm"
        orm_io.save_matrix(f, np.ones((4, 4), dtype=np.int8))
        f.write_bytes(f.read_bytes()[:-3])
        with pytest.raises(ValueError, match="payload"):
            orm_io.load_matrix(f)

    def test_bad_csv_header(self, tmp_path):
        f = tmp_path / "m.csv"
        f.write_text("not,a,header\n")
        with pytest.raises(ValueError, match="header"):
            orm_io.load_matrix(f)

    def test_format_autodetect(self, tmp_path):
        trits = np.array([[1, -1], [0, 1]], dtype=np.int8)
        csv_path = tmp_path / "a.csv"
        bin_path = tmp_path / "b.orm"
        orm_io.save_matrix(csv_path, trits)
        orm_io.save_matrix(bin_path, trits)
        assert np.array_equal(orm_io.load_matrix(csv_path).trits, trits)
        assert np.array_equal(orm_io.load_matrix(bin_path).trits, trits)


class TestSaveSummary:
    @pytest.fixture()
    def summary(self):
        x, _, _ = om.gen_random_boolean(om.SyntheticSpec(8, 6, 2, seed=6))
        cfg = om.SamplerConfig(burn_in=5, samples=7, seed=6)
        return om.run(om.ObservedMatrix.from_binary(x), 2, cfg)

    def test_lambda_trace_line_count(self, tmp_path, summary):
        paths = orm_io.save_summary(tmp_path / "out", summary)
        lines = paths["lambda_trace"].read_text().splitlines()
        assert lines[0] == "sweep,lambda"
        assert len(lines) - 1 == len(summary.lambda_trace) == 12

    def test_means_round_trip_within_tolerance(self, tmp_path, summary):
        paths = orm_io.save_summary(tmp_path / "out", summary)
        body = paths["z_mean"].read_text().splitlines()[2:]
        loaded = np.array([[float(v) for v in line.split(",")] for line in body])
        assert np.abs(loaded - summary.z_mean).max() <= 1e-6

    def test_report_contents(self, tmp_path, summary):
        paths = orm_io.save_summary(tmp_path / "out", summary)
        report = dict(
            line.split("=", 1) for line in paths["report"].read_text().splitlines()
        )
        assert report["seed"] == "6"
        assert report["rows"] == "8"
        assert report["cols"] == "6"
        assert report["rank"] == "2"
        assert float(report["prior_z"]) == 0.5
        assert float(report["lambda_final"]) == pytest.approx(
            summary.lambda_final.value
        )

    def test_map_factors_round_trip(self, tmp_path, summary):
        paths = orm_io.save_summary(tmp_path / "out", summary)
        loaded_csv = orm_io.load_matrix(paths["z_map"])
        loaded_bin = orm_io.load_matrix(paths["z_map_bin"])
        expected = 2 * summary.z_map.astype(np.int16) - 1
        assert np.array_equal(loaded_csv.trits, expected)
        assert np.array_equal(loaded_bin.trits, expected)
