"""Raw job-trace ingestion: parsing, DAOD filtering, name decomposition,
workload derivation and the train/test split."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .tables import JOB_SCHEMA, Table, job_table

RAW_COLUMNS = (
    "creationtime",
    "computingsite",
    "dataset_name",
    "ninputdatafiles",
    "inputfilebytes",
    "jobstatus",
    "ncores",
    "cputime",
)


class IngestError(ValueError):
    pass


class DaodNameError(IngestError):
    def __init__(self, name, reason):
        super().__init__(f"cannot parse dataset name {name!r}: {reason}")
        self.name = name


class SiteLookupError(IngestError):
    def __init__(self, site):
        super().__init__(f"computing site {site!r} not present in the site catalog")
        self.site = site


@dataclass
class RawJobRecord:
    creation_time: int  # seconds since epoch
    computing_site: str
    dataset_name: str
    n_input_files: int
    input_file_bytes: int
    job_status: str
    n_cores: int
    cpu_time: float

    def validate(self):
        if self.n_input_files < 0:
            raise IngestError("n_input_files < 0")
        if self.input_file_bytes < 0:
            raise IngestError("input_file_bytes < 0")
        if self.n_cores < 1:
            raise IngestError("n_cores < 1")
        if self.cpu_time < 0:
            raise IngestError("cpu_time < 0")


class SiteCatalog:
    """Maps a computing-site label to its per-core processing rate (Gflop per
    core-second). Unknown sites raise; there is no default rate."""

    def __init__(self, rates, scale=1.0):
        if scale <= 0:
            raise IngestError("catalog scale must be positive")
        for site, r in rates.items():
            if r <= 0:
                raise IngestError(f"site {site!r} has non-positive rate {r}")
        self._rates = dict(rates)
        self.scale = float(scale)

    def rate(self, site) -> float:
        try:
            return self._rates[site] * self.scale
        except KeyError:
            raise SiteLookupError(site) from None

    def sites(self):
        return sorted(self._rates)

    def to_json(self) -> str:
        obj = {site: self._rates[site] for site in sorted(self._rates)}
        obj["scale"] = self.scale
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text) -> "SiteCatalog":
        obj = json.loads(text)
        scale = obj.pop("scale", 1.0)
        return cls(obj, scale=scale)

    @classmethod
    def load(cls, path) -> "SiteCatalog":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _parse_timestamp(v) -> int:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return int(v)
    s = str(v).strip()
    try:
        return int(s)
    except ValueError:
        pass
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _record_from_mapping(row) -> RawJobRecord:
    rec = RawJobRecord(
        creation_time=_parse_timestamp(row["creationtime"]),
        computing_site=str(row["computingsite"]),
        dataset_name=str(row["dataset_name"]),
        n_input_files=int(row["ninputdatafiles"]),
        input_file_bytes=int(row["inputfilebytes"]),
        job_status=str(row["jobstatus"]),
        n_cores=int(row["ncores"]),
        cpu_time=float(row["cputime"]),
    )
    rec.validate()
    return rec


@dataclass
class ParseResult:
    records: list
    rows_read: int
    malformed: int


def parse_records(stream, format="csv", malformed_tolerance=0.01) -> ParseResult:
    """Parse a raw trace from a text stream. Malformed rows are counted and
    excluded; if their fraction exceeds the tolerance the parse aborts."""
    if format == "csv":
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            return ParseResult([], 0, 0)
        missing = [c for c in RAW_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"missing required columns: {missing}")
        idx = {c: header.index(c) for c in RAW_COLUMNS}

        def gen():
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    yield None  # short/long rows count as malformed
                else:
                    yield {c: row[i] for c, i in idx.items()}
        rows = gen()
    elif format == "jsonl":
        def gen():
            for line in stream:
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    yield None
                    continue
                if not all(c in obj for c in RAW_COLUMNS):
                    yield None
                    continue
                yield obj
        rows = gen()
    else:
        raise IngestError(f"unknown trace format {format!r}")

    records = []
    rows_read = 0
    malformed = 0
    for row in rows:
        rows_read += 1
        if row is None:
            malformed += 1
            continue
        try:
            records.append(_record_from_mapping(row))
        except (IngestError, KeyError, ValueError):
            malformed += 1
    if rows_read and malformed / rows_read > malformed_tolerance:
        raise IngestError(
            f"{malformed} of {rows_read} rows malformed, above the "
            f"{malformed_tolerance:.1%} tolerance"
        )
    return ParseResult(records, rows_read, malformed)


def parse_daod_name(name):
    """Split a dotted DAOD dataset name into (project, prodstep, datatype):
    fields 0, 3 and 4 of the dot-separated name."""
    fields = name.split(".")
    if len(fields) < 5:
        raise DaodNameError(name, f"{len(fields)} dot-separated fields, need at least 5")
    project, prodstep, datatype = fields[0], fields[3], fields[4]
    if not project or not prodstep or not datatype:
        raise DaodNameError(name, "empty project/prodstep/datatype section")
    return project, prodstep, datatype


@dataclass
class FilterResult:
    records: list
    input_count: int
    output_count: int
    unparseable: int


def filter_daod(records) -> FilterResult:
    """Keep records whose dataset datatype section starts with DAOD. Order is
    preserved; unparseable names are dropped and counted."""
    kept = []
    unparseable = 0
    for rec in records:
        try:
            _, _, datatype = parse_daod_name(rec.dataset_name)
        except DaodNameError:
            unparseable += 1
            continue
        if datatype.startswith("DAOD"):
            kept.append(rec)
    return FilterResult(kept, len(records), len(kept), unparseable)


def derive_workload(record, catalog) -> float:
    """Total workload in Gflop: cores x site rate x CPU seconds."""
    return record.n_cores * catalog.rate(record.computing_site) * record.cpu_time


def build_job_table(records, catalog) -> Table:
    """Assemble the nine-feature job table from DAOD-filtered raw records."""
    n = len(records)
    creation = np.empty(n, dtype=np.int64)
    site = np.empty(n, dtype=object)
    project = np.empty(n, dtype=object)
    prodstep = np.empty(n, dtype=object)
    datatype = np.empty(n, dtype=object)
    status = np.empty(n, dtype=object)
    nfiles = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    workload = np.empty(n, dtype=np.float64)
    for i, rec in enumerate(records):
        proj, step, dtype_ = parse_daod_name(rec.dataset_name)
        creation[i] = rec.creation_time
        site[i] = rec.computing_site
        project[i] = proj
        prodstep[i] = step
        datatype[i] = dtype_
        status[i] = rec.job_status
        nfiles[i] = rec.n_input_files
        size[i] = rec.input_file_bytes
        workload[i] = derive_workload(rec, catalog)
    return job_table({
        "creationtime": creation,
        "computingsite": site,
        "project": project,
        "prodstep": prodstep,
        "datatype": datatype,
        "jobstatus": status,
        "nfiles": nfiles,
        "size": size,
        "workload": workload,
    })


def split_train_test(table, train_fraction, seed):
    """Disjoint row partition with |train| = round(train_fraction * n),
    deterministic in the seed. Row order within each part follows the input."""
    if table.n_rows == 0:
        raise IngestError("cannot split an empty table")
    if not 0.0 < train_fraction < 1.0:
        raise IngestError(f"train_fraction {train_fraction} outside (0, 1)")
    n = table.n_rows
    n_train = int(np.floor(train_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return table.take(train_idx), table.take(test_idx)


def write_raw_trace(records, path):
    """Write raw records in the canonical 8-column trace CSV format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RAW_COLUMNS) + "\n")
        for rec in records:
            fh.write(
                f"{rec.creation_time},{rec.computing_site},{rec.dataset_name},"
                f"{rec.n_input_files},{rec.input_file_bytes},{rec.job_status},"
                f"{rec.n_cores},{format(rec.cpu_time, '.17g')}\n"
            )
