import numpy as np
import pytest

from survgam.data import (
    Dataset,
    load_dataset,
    make_dataset,
    save_dataset,
    validate_for_fit,
)
from survgam.errors import DataValidationError


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadDataset:
    def test_entry_column_defaults_to_zero(self, tmp_path):
        path = write(tmp_path, "id,time,event,x1\na,1.0,1,0.5\nb,2.0,0,1.5\nc,3.0,1,-1.0\n")
        d = load_dataset(path)
        assert d.n_subjects == 3
        assert np.all(d.entry == 0.0)
        assert d.covariate_names == ("x1",)

    def test_entry_column_used_when_present(self, tmp_path):
        path = write(tmp_path, "id,entry,time,event,x1\na,0.5,1.0,1,0.5\n")
        d = load_dataset(path)
        assert d.entry[0] == 0.5

    def test_time_before_entry_names_row(self, tmp_path):
        path = write(tmp_path, "id,entry,time,event,x1\na,2.0,1.0,1,0.5\n")
        with pytest.raises(DataValidationError, match="row 0"):
            load_dataset(path)

    def test_bad_event_code_rejected(self, tmp_path):
        path = write(tmp_path, "id,time,event,x1\na,1.0,2,0.5\n")
        with pytest.raises(DataValidationError, match="event"):
            load_dataset(path)

    def test_malformed_cell_names_row_and_column(self, tmp_path):
        path = write(tmp_path, "id,time,event,x1\na,1.0,1,0.5\nb,oops,0,1.0\n")
        with pytest.raises(DataValidationError, match="row 1.*'time'"):
            load_dataset(path)

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(DataValidationError, match="empty"):
            load_dataset(write(tmp_path, ""))
        with pytest.raises(DataValidationError, match="no data rows"):
            load_dataset(write(tmp_path, "id,time,event,x1\n"))

    def test_missing_required_column(self, tmp_path):
        with pytest.raises(DataValidationError, match="missing required column"):
            load_dataset(write(tmp_path, "id,time,x1\na,1.0,0.5\n"))

    def test_schema_remap(self, tmp_path):
        path = write(tmp_path, "pid,followup,died,age\na,1.0,1,50\n")
        d = load_dataset(path, schema={"id": "pid", "time": "followup", "event": "died"})
        assert d.covariate_names == ("age",)

    def test_rows_preserved_in_file_order(self, tmp_path):
        path = write(tmp_path, "id,time,event,x1\nz,3.0,1,1\na,1.0,0,2\n")
        d = load_dataset(path)
        assert d.subject_ids == ("z", "a")

    def test_duplicate_id_rejected(self, tmp_path):
        path = write(tmp_path, "id,time,event,x1\na,1.0,1,1\na,2.0,0,2\n")
        with pytest.raises(DataValidationError, match="duplicate"):
            load_dataset(path)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path, rng):
        n = 37
        d = make_dataset(
            rng.uniform(0, 0.3, n),
            rng.uniform(0.5, 5.0, n),
            rng.integers(0, 2, n),
            rng.normal(size=(n, 2)),
            ["u", "v"],
        )
        path = tmp_path / "round.csv"
        save_dataset(d, path)
        d2 = load_dataset(path)
        assert d2.subject_ids == d.subject_ids
        np.testing.assert_array_equal(d2.entry, d.entry)
        np.testing.assert_array_equal(d2.time, d.time)
        np.testing.assert_array_equal(d2.event, d.event)
        np.testing.assert_array_equal(d2.covariates, d.covariates)


class TestValidateForFit:
    def test_counts(self, three_subject_dataset):
        summary = validate_for_fit(three_subject_dataset)
        assert summary.n_subjects == 3
        assert summary.n_events == 2
        assert summary.max_time == 3.0
        assert summary.n_covariates == 1

    def test_no_events_is_an_error(self):
        d = make_dataset([0, 0], [1.0, 2.0], [0, 0], [[1.0], [0.0]], ["x"])
        with pytest.raises(DataValidationError, match="no events"):
            validate_for_fit(d)

    def test_constant_covariate_flagged_not_fatal(self):
        d = make_dataset([0, 0], [1.0, 2.0], [1, 0], [[0.0, 1.0], [0.0, 2.0]], ["z", "x"])
        summary = validate_for_fit(d)
        assert summary.constant_covariates == ("z",)

    def test_never_mutates(self, three_subject_dataset):
        before = three_subject_dataset.covariates.copy()
        validate_for_fit(three_subject_dataset)
        np.testing.assert_array_equal(three_subject_dataset.covariates, before)


class TestMakeDataset:
    def test_zero_length_interval_rejected(self):
        with pytest.raises(DataValidationError, match="time.*entry"):
            make_dataset([1.0], [1.0], [1], [[0.0]], ["x"])

    def test_covariate_name_count_must_match(self):
        with pytest.raises(DataValidationError, match="covariate names"):
            make_dataset([0.0], [1.0], [1], [[0.0, 1.0]], ["x"])

    def test_immutable_dataclass(self, three_subject_dataset):
        with pytest.raises(AttributeError):
            three_subject_dataset.time = np.array([1.0])

    def test_records_view(self, three_subject_dataset):
        recs = three_subject_dataset.records
        assert recs[0].subject_id == "A"
        assert recs[2].event == 0
