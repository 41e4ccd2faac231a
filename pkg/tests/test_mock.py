import dataclasses

import numpy as np
import pytest

from workload_forge.ingest import build_job_table, filter_daod
from workload_forge.mock import DEFAULT_PROFILE, MockProfile, generate_mock_table, generate_mock_trace


def test_determinism_byte_identical():
    a = generate_mock_table(DEFAULT_PROFILE, 1000, 7)
    b = generate_mock_table(DEFAULT_PROFILE, 1000, 7)
    assert a.to_csv_bytes() == b.to_csv_bytes()
    c = generate_mock_table(DEFAULT_PROFILE, 1000, 8)
    assert c.to_csv_bytes() != a.to_csv_bytes()


def test_sigma_zero_makes_workload_reconstructable():
    profile = dataclasses.replace(DEFAULT_PROFILE, noise_sigma=0.0)
    t = generate_mock_table(profile, 2000, 13)
    site_idx = np.array([profile.sites.index(s) for s in t["computingsite"]])
    dt_idx = np.array([profile.datatypes.index(d) for d in t["datatype"]])
    lnw = profile.lnw_mean(site_idx, dt_idx, t["nfiles"])
    assert np.allclose(np.log(t["workload"]), lnw, rtol=0, atol=1e-12)


def test_trace_ingests_back_to_the_same_table():
    table = generate_mock_table(DEFAULT_PROFILE, 1500, 99)
    records, catalog = generate_mock_trace(DEFAULT_PROFILE, 1500, 99)
    out = filter_daod(records)
    assert out.output_count == 1500
    back = build_job_table(out.records, catalog)
    for name in ("creationtime", "nfiles", "size"):
        assert np.array_equal(back[name], table[name])
    for name in ("computingsite", "project", "prodstep", "datatype", "jobstatus"):
        assert list(back[name]) == list(table[name])
    assert np.allclose(back["workload"], table["workload"], rtol=1e-12)


def test_trace_decoys_are_filtered_out():
    profile = dataclasses.replace(DEFAULT_PROFILE, decoy_fraction=0.1)
    records, _ = generate_mock_trace(profile, 1000, 5)
    assert len(records) == 1100
    out = filter_daod(records)
    assert out.output_count == 1000


def test_profile_round_trip_and_validation():
    prof = MockProfile.from_dict(DEFAULT_PROFILE.to_dict())
    assert prof == DEFAULT_PROFILE
    with pytest.raises(ValueError):
        MockProfile(site_probs=(1.0,))  # length mismatch with sites


def _ks_continuous(values, cdf, n_grid=2000):
    xs = np.quantile(values, np.linspace(0.0, 1.0, n_grid))
    emp_hi = np.searchsorted(np.sort(values), xs, side="right") / values.size
    emp_lo = np.searchsorted(np.sort(values), xs, side="left") / values.size
    f = cdf(xs)
    return float(np.max(np.maximum(np.abs(emp_hi - f), np.abs(emp_lo - f))))


def test_marginals_match_analytic_within_ks_002():
    n = 100_000
    t = generate_mock_table(DEFAULT_PROFILE, n, 4242)
    p = DEFAULT_PROFILE

    for name in ("workload", "size", "creationtime"):
        d = _ks_continuous(np.asarray(t[name], dtype=float),
                           lambda xs, name=name: p.numeric_cdf(name, xs))
        assert d < 0.02, f"{name}: KS {d}"

    # nfiles is integer-valued; both CDFs step at integers only
    nf = np.asarray(t["nfiles"])
    ks = np.arange(nf.min(), nf.max() + 1)
    emp = np.searchsorted(np.sort(nf), ks, side="right") / nf.size
    ana = p.numeric_cdf("nfiles", ks)
    assert float(np.max(np.abs(emp - ana))) < 0.02

    for name in ("computingsite", "project", "prodstep", "datatype", "jobstatus"):
        marginal = p.categorical_marginal(name)
        col = list(t[name])
        worst = max(abs(col.count(c) / n - prob) for c, prob in marginal.items())
        assert worst < 0.02, f"{name}: prob diff {worst}"


def test_log_workload_is_multimodal():
    t = generate_mock_table(DEFAULT_PROFILE, 50_000, 5)
    lnw = np.log(np.asarray(t["workload"]))
    hist, edges = np.histogram(lnw, bins=60)
    sm = np.convolve(hist, np.ones(3) / 3, mode="same")
    peaks = [i for i in range(1, 59) if sm[i] > sm[i - 1] and sm[i] >= sm[i + 1]
             and sm[i] > 0.2 * sm.max()]
    assert len(peaks) >= 2
