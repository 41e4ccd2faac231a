import io

import numpy as np
import pytest

from workload_forge.tables import (
    CATEGORICAL, FLOAT, INT, JOB_SCHEMA, Feature, SchemaError, Table, job_table,
)


def small_table():
    return Table(
        (Feature("x", FLOAT), Feature("k", INT), Feature("c", CATEGORICAL)),
        {"x": [1.5, 2.25, -0.5], "k": [1, 2, 3], "c": ["a", "b", "a"]},
    )


def test_column_access_and_len():
    t = small_table()
    assert len(t) == 3
    assert t["k"].dtype == np.int64
    assert t["x"].dtype == np.float64
    assert list(t["c"]) == ["a", "b", "a"]


def test_schema_mismatch_rejected():
    with pytest.raises(SchemaError):
        Table((Feature("x", FLOAT),), {"y": [1.0]})
    with pytest.raises(SchemaError):
        Table((Feature("x", FLOAT), Feature("y", FLOAT)), {"x": [1.0], "y": [1.0, 2.0]})
    with pytest.raises(SchemaError):
        Feature("x", "weird")


def test_csv_round_trip_preserves_rows_and_order():
    t = small_table()
    buf = io.StringIO(t.to_csv_bytes().decode())
    back = Table.load_csv(buf, t.schema)
    assert back.equals(t)


def test_csv_float_uses_17_significant_digits():
    t = Table((Feature("w", FLOAT),), {"w": [0.1 + 0.2]})
    text = t.to_csv_bytes().decode()
    assert "0.30000000000000004" in text


def test_csv_header_checked():
    t = small_table()
    buf = io.StringIO(t.to_csv_bytes().decode())
    with pytest.raises(SchemaError):
        Table.load_csv(buf, (Feature("x", FLOAT),))


def test_take_preserves_schema():
    t = small_table()
    sub = t.take([2, 0])
    assert list(sub["c"]) == ["a", "a"]
    assert sub["k"].tolist() == [3, 1]


def test_job_table_invariants():
    cols = {
        "creationtime": [1_700_000_000],
        "computingsite": ["BNL"],
        "project": ["mc23"],
        "prodstep": ["deriv"],
        "datatype": ["DAOD_PHYS"],
        "jobstatus": ["finished"],
        "nfiles": [3],
        "size": [123456],
        "workload": [1.5e5],
    }
    t = job_table(cols)
    assert t.n_rows == 1

    bad = dict(cols)
    bad["datatype"] = ["AOD"]
    with pytest.raises(SchemaError):
        job_table(bad)

    bad = dict(cols)
    bad["workload"] = [-1.0]
    with pytest.raises(SchemaError):
        job_table(bad)


def test_job_schema_is_five_categorical_four_numerical():
    cats = [f for f in JOB_SCHEMA if f.kind == CATEGORICAL]
    nums = [f for f in JOB_SCHEMA if f.kind != CATEGORICAL]
    assert len(cats) == 5
    assert len(nums) == 4
