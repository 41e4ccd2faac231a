import io

import numpy as np
import pytest

from workload_forge.ingest import (
    DaodNameError, IngestError, RawJobRecord, SiteCatalog, SiteLookupError,
    build_job_table, derive_workload, filter_daod, parse_daod_name, parse_records,
    split_train_test,
)
from workload_forge.mock import DEFAULT_PROFILE, generate_mock_table

HEADER = "creationtime,computingsite,dataset_name,ninputdatafiles,inputfilebytes,jobstatus,ncores,cputime"


def _csv(rows):
    return io.StringIO("\n".join([HEADER, *rows]) + "\n")


def test_parse_csv_epoch_row():
    res = parse_records(_csv(["1700000000,BNL,mc23.1.x.deriv.DAOD_PHYS.p1,4,100,finished,8,3600.5"]))
    assert res.rows_read == 1 and res.malformed == 0
    rec = res.records[0]
    assert rec.creation_time == 1700000000
    assert rec.computing_site == "BNL"
    assert rec.n_cores == 8
    assert rec.cpu_time == 3600.5


def test_parse_csv_iso_timestamp():
    res = parse_records(_csv(["2023-11-14T22:13:20Z,BNL,a.b.c.d.DAOD_X.p,1,1,ok,1,1"]))
    assert res.records[0].creation_time == 1700000000


def test_parse_empty_stream():
    res = parse_records(io.StringIO(""))
    assert res.records == [] and res.rows_read == 0 and res.malformed == 0


def test_zero_cores_counted_malformed():
    res = parse_records(
        _csv(["1,BNL,a.b.c.d.DAOD_X.p,1,1,ok,0,1"]), malformed_tolerance=1.0)
    assert res.malformed == 1 and res.records == []


def test_malformed_fraction_aborts():
    rows = ["1,BNL,a.b.c.d.DAOD_X.p,1,1,ok,1,1"] * 98 + ["bad,row", "another,bad"]
    with pytest.raises(IngestError, match="tolerance"):
        parse_records(_csv(rows), malformed_tolerance=0.01)
    res = parse_records(_csv(rows), malformed_tolerance=0.05)
    assert res.malformed == 2 and len(res.records) == 98


def test_missing_column_is_an_error():
    with pytest.raises(IngestError, match="missing required columns"):
        parse_records(io.StringIO("creationtime,computingsite\n1,BNL\n"))


def test_parse_jsonl():
    line = ('{"creationtime": 5, "computingsite": "RAL", "dataset_name": "a.b.c.d.DAOD_T.p",'
            ' "ninputdatafiles": 2, "inputfilebytes": 10, "jobstatus": "ok",'
            ' "ncores": 2, "cputime": 7.5}')
    res = parse_records(io.StringIO(line + "\nnot json\n"), format="jsonl",
                        malformed_tolerance=0.5)
    assert len(res.records) == 1 and res.malformed == 1
    assert res.records[0].computing_site == "RAL"


def test_parse_daod_name_positions():
    assert parse_daod_name("mc23.12345.sample.deriv.DAOD_PHYS.p5855") == (
        "mc23", "deriv", "DAOD_PHYS")
    assert parse_daod_name("data22.00431.x.recon.DAOD_LLP1.r14")[2] == "DAOD_LLP1"
    with pytest.raises(DaodNameError):
        parse_daod_name("a.b.c")


def test_parse_daod_name_reassembly():
    # hand-built sample in the public nomenclature shape:
    # project.datasetNumber.physicsShort.prodStep.dataType.tag
    sample = [
        "mc23_13p6TeV.801168.Py8EG_A14NNPDF23LO_jj.deriv.DAOD_PHYS.e8514_s4159_r14799_p5855",
        "data22_13p6TeV.00430536.physics_Main.deriv.DAOD_PHYSLITE.r14734_p5855",
        "mc20_13TeV.410470.PhPy8EG_ttbar.merge.DAOD_TOPQ1.e6337_s3681_r13167_p4856",
    ]
    for name in sample:
        project, prodstep, datatype = parse_daod_name(name)
        fields = name.split(".")
        assert (fields[0], fields[3], fields[4]) == (project, prodstep, datatype)


def _rec(name="mc23.1.x.deriv.DAOD_PHYS.p1", site="BNL", cores=1, cpu=1.0):
    return RawJobRecord(0, site, name, 1, 1, "finished", cores, cpu)


def test_filter_daod_keeps_prefix_and_counts():
    records = [
        _rec("mc23.1.x.deriv.DAOD_PHYS.p1"),
        _rec("mc23.1.x.recon.AOD.r1"),
        _rec("garbage"),
        _rec("data22.2.y.deriv.DAOD_LLP1.p2"),
    ]
    out = filter_daod(records)
    assert [r.dataset_name.split(".")[4] for r in out.records] == ["DAOD_PHYS", "DAOD_LLP1"]
    assert (out.input_count, out.output_count, out.unparseable) == (4, 2, 1)


def test_filter_daod_empty_and_idempotent():
    assert filter_daod([]).records == []
    records = [_rec() for _ in range(5)]
    once = filter_daod(records)
    twice = filter_daod(once.records)
    assert twice.records == once.records
    assert once.output_count <= once.input_count


def test_derive_workload_product_and_homogeneity():
    catalog = SiteCatalog({"BNL": 10.0})
    assert derive_workload(_rec(cores=8, cpu=3600.0), catalog) == pytest.approx(288000.0)
    assert derive_workload(_rec(cores=1, cpu=0.0), catalog) == 0.0
    one = derive_workload(_rec(cores=2, cpu=5.0), catalog)
    assert derive_workload(_rec(cores=4, cpu=5.0), catalog) == pytest.approx(2 * one)
    assert derive_workload(_rec(cores=2, cpu=10.0), catalog) == pytest.approx(2 * one)
    scaled = SiteCatalog({"BNL": 10.0}, scale=3.0)
    assert derive_workload(_rec(cores=2, cpu=5.0), scaled) == pytest.approx(3 * one)


def test_unknown_site_error_names_site():
    catalog = SiteCatalog({"BNL": 10.0})
    with pytest.raises(SiteLookupError, match="CERN-P1"):
        derive_workload(_rec(site="CERN-P1"), catalog)


def test_catalog_validation_and_json():
    with pytest.raises(IngestError):
        SiteCatalog({"BNL": 0.0})
    with pytest.raises(IngestError):
        SiteCatalog({"BNL": 1.0}, scale=-1.0)
    cat = SiteCatalog({"BNL": 10.0, "RAL": 5.0}, scale=2.0)
    back = SiteCatalog.from_json(cat.to_json())
    assert back.rate("RAL") == 10.0
    assert back.sites() == ["BNL", "RAL"]


def test_build_job_table_schema(mock_table_3k):
    assert mock_table_3k.n_rows == 3000
    assert all(str(d).startswith("DAOD") for d in mock_table_3k["datatype"])


def test_split_sizes_and_determinism():
    t = generate_mock_table(DEFAULT_PROFILE, 10, 3)
    a, b = split_train_test(t, 0.8, 42)
    assert (a.n_rows, b.n_rows) == (8, 2)
    a2, b2 = split_train_test(t, 0.8, 42)
    assert a.equals(a2) and b.equals(b2)
    a3, _ = split_train_test(t, 0.8, 43)
    assert not a.equals(a3)


def test_split_is_a_partition(mock_table_3k):
    a, b = split_train_test(mock_table_3k, 0.65, 9)
    assert a.n_rows + b.n_rows == mock_table_3k.n_rows
    key = lambda t: sorted(zip(t["creationtime"].tolist(), t["workload"].tolist()))
    merged = sorted(key(a) + key(b))
    assert merged == key(mock_table_3k)


def test_split_fraction_validation(mock_table_3k):
    from workload_forge.tables import JOB_SCHEMA, Table
    empty = Table(JOB_SCHEMA, {f.name: [] for f in JOB_SCHEMA})
    with pytest.raises(IngestError):
        split_train_test(empty, 0.8, 1)
    with pytest.raises(IngestError):
        split_train_test(mock_table_3k, 1.0, 1)
