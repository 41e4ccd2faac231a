"""Seeded mock job corpus standing in for the private production trace.

The joint structure is documented and analytically tractable:
  * computing site chooses a processing-rate band, which makes the
    log-workload marginal multi-modal;
  * datatype drives the file-count distribution (nfiles = 1 + Poisson) and the
    per-file size scale;
  * ln(workload) = base + site offset + datatype offset + beta*ln(nfiles)
    + sigma*eps, so the best attainable regression MSE on ln(workload) from
    the other features is exactly sigma^2;
  * prodstep is drawn conditionally on project;
  * the creation-rate profile is piecewise-constant per day with a weekly
    sinusoid and one burst day.
Every per-feature marginal has a closed form exposed via `categorical_marginal`
and `numeric_cdf` so empirical distributions can be checked against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .ingest import RawJobRecord, SiteCatalog
from .tables import job_table

SECONDS_PER_DAY = 86_400


def _normalized(probs):
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("probabilities must be non-negative with positive sum")
    return p / p.sum()


@dataclass
class MockProfile:
    sites: tuple = (
        "BNL", "CERN-P1", "MWT2", "SLAC", "TRIUMF", "DESY-HH",
        "RAL", "IN2P3-CC", "AGLT2", "SWT2", "NIKHEF", "PIC",
    )
    site_probs: tuple = (0.22, 0.18, 0.15, 0.11, 0.09, 0.07, 0.05, 0.04, 0.03, 0.03, 0.02, 0.01)
    # ln(rate/base_rate) per site; three bands -> three log-workload peaks
    site_log_rate: tuple = (4.4, 4.5, 4.3, 2.2, 2.3, 2.1, 2.4, 0.0, 0.1, -0.1, 0.2, 0.05)

    projects: tuple = ("mc23", "mc20", "data22", "data18", "mc16")
    project_probs: tuple = (0.40, 0.18, 0.17, 0.13, 0.12)

    prodsteps: tuple = ("deriv", "merge", "simul", "recon")
    prodstep_given_project: tuple = (
        (0.80, 0.12, 0.08, 0.00),
        (0.78, 0.12, 0.10, 0.00),
        (0.88, 0.02, 0.00, 0.10),
        (0.85, 0.03, 0.00, 0.12),
        (0.75, 0.15, 0.10, 0.00),
    )

    datatypes: tuple = (
        "DAOD_PHYS", "DAOD_PHYSLITE", "DAOD_LLP1", "DAOD_HIGG1D1", "DAOD_EXOT2",
        "DAOD_TOP1", "DAOD_JETM1", "DAOD_SUSY5", "DAOD_EGAM1", "DAOD_BPHY1",
    )
    datatype_probs: tuple = (0.32, 0.24, 0.10, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.01)
    datatype_nfiles_mu: tuple = (4.0, 3.0, 8.0, 12.0, 10.0, 15.0, 18.0, 22.0, 9.0, 25.0)
    datatype_file_mb: tuple = (450.0, 120.0, 800.0, 600.0, 700.0, 300.0, 250.0, 900.0, 500.0, 150.0)
    datatype_lnw_offset: tuple = (0.0, -0.5, 0.45, 0.3, 0.25, -0.2, 0.1, 0.5, -0.3, -0.45)

    statuses: tuple = ("finished", "failed", "cancelled", "closed")
    status_probs: tuple = (0.86, 0.09, 0.04, 0.01)

    t0: int = 1_700_000_000
    n_days: int = 30
    day_amplitude: float = 0.6
    burst_day: int = 17
    burst_boost: float = 1.5

    lnw_base: float = 10.82
    lnw_nfiles_beta: float = 0.45
    noise_sigma: float = 0.3
    size_jitter: float = 0.25
    base_rate: float = 10.0  # Gflop per core-second at log-rate 0

    ncores_choices: tuple = (1, 8)
    ncores_probs: tuple = (0.3, 0.7)
    decoy_fraction: float = 0.0

    def __post_init__(self):
        for probs, labels in (
            (self.site_probs, self.sites),
            (self.project_probs, self.projects),
            (self.datatype_probs, self.datatypes),
            (self.status_probs, self.statuses),
            (self.ncores_probs, self.ncores_choices),
        ):
            if len(probs) != len(labels):
                raise ValueError("probability vector length does not match labels")
        if len(self.prodstep_given_project) != len(self.projects):
            raise ValueError("one prodstep distribution per project required")
        if self.noise_sigma < 0 or self.size_jitter < 0:
            raise ValueError("sigmas must be non-negative")
        if self.n_days < 1:
            raise ValueError("n_days must be positive")

    # -- analytic marginals ----------------------------------------------

    def day_weights(self):
        d = np.arange(self.n_days)
        w = 1.0 + self.day_amplitude * np.sin(2 * np.pi * d / 7.0)
        if 0 <= self.burst_day < self.n_days:
            w[self.burst_day] += self.burst_boost
        return _normalized(w)

    def categorical_marginal(self, name):
        if name == "computingsite":
            return dict(zip(self.sites, _normalized(self.site_probs)))
        if name == "project":
            return dict(zip(self.projects, _normalized(self.project_probs)))
        if name == "prodstep":
            pp = _normalized(self.project_probs)
            marg = np.zeros(len(self.prodsteps))
            for i, cond in enumerate(self.prodstep_given_project):
                marg += pp[i] * _normalized(cond)
            return dict(zip(self.prodsteps, marg))
        if name == "datatype":
            return dict(zip(self.datatypes, _normalized(self.datatype_probs)))
        if name == "jobstatus":
            return dict(zip(self.statuses, _normalized(self.status_probs)))
        raise KeyError(name)

    def _nfiles_support(self, eps=1e-9):
        """Per-datatype Poisson pmf over k = nfiles - 1, truncated at mass 1-eps."""
        kmax = int(max(stats.poisson.ppf(1 - eps, mu) for mu in self.datatype_nfiles_mu)) + 1
        ks = np.arange(kmax + 1)
        pmf = np.stack([stats.poisson.pmf(ks, mu) for mu in self.datatype_nfiles_mu])
        return ks, pmf

    def numeric_cdf(self, name, xs):
        """Analytic marginal CDF of a numeric feature evaluated at xs."""
        xs = np.asarray(xs, dtype=np.float64)
        if name == "creationtime":
            w = self.day_weights()
            cum = np.concatenate([[0.0], np.cumsum(w)])
            frac = np.clip((xs - self.t0) / SECONDS_PER_DAY, 0.0, self.n_days)
            day = np.clip(np.floor(frac).astype(int), 0, self.n_days - 1)
            return cum[day] + w[day] * (frac - day)
        if name == "nfiles":
            ks, pmf = self._nfiles_support()
            dtp = _normalized(self.datatype_probs)
            cdf_per_dt = np.cumsum(pmf, axis=1)
            out = np.zeros_like(xs)
            kq = np.floor(xs).astype(int) - 1  # nfiles = 1 + k
            valid = kq >= 0
            kc = np.clip(kq, 0, len(ks) - 1)
            mix = dtp @ cdf_per_dt
            out[valid] = mix[kc[valid]]
            out[kq > len(ks) - 1] = 1.0
            return out
        if name == "size":
            ks, pmf = self._nfiles_support(eps=1e-7)
            dtp = _normalized(self.datatype_probs)
            scale = np.asarray(self.datatype_file_mb) * 1e6
            out = np.zeros_like(xs)
            lx = np.log(np.maximum(xs, 1e-300))
            for i, p_dt in enumerate(dtp):
                mus = np.log((ks + 1.0) * scale[i])
                if self.size_jitter > 0:
                    z = (lx[:, None] - mus[None, :]) / self.size_jitter
                    out += p_dt * (ndtr(z) @ pmf[i])
                else:
                    out += p_dt * ((lx[:, None] >= mus[None, :]).astype(float) @ pmf[i])
            return out
        if name == "workload":
            ks, pmf = self._nfiles_support(eps=1e-7)
            dtp = _normalized(self.datatype_probs)
            sp = _normalized(self.site_probs)
            lx = np.log(np.maximum(xs, 1e-300))
            out = np.zeros_like(xs)
            for s, p_s in enumerate(sp):
                for i, p_dt in enumerate(dtp):
                    lnf = self.lnw_nfiles_beta * (np.log(ks + 1.0)
                                                  - np.log(1.0 + self.datatype_nfiles_mu[i]))
                    mus = self.lnw_base + self.site_log_rate[s] + self.datatype_lnw_offset[i] + lnf
                    if self.noise_sigma > 0:
                        z = (lx[:, None] - mus[None, :]) / self.noise_sigma
                        out += p_s * p_dt * (ndtr(z) @ pmf[i])
                    else:
                        out += p_s * p_dt * ((lx[:, None] >= mus[None, :]).astype(float) @ pmf[i])
            return out
        raise KeyError(name)

    def lnw_mean(self, site_idx, datatype_idx, nfiles):
        """Noise-free ln(workload) given the generating features. The file-count
        term is centered per datatype so the marginal peaks come from the site
        rate bands."""
        off_s = np.asarray(self.site_log_rate)[site_idx]
        off_d = np.asarray(self.datatype_lnw_offset)[datatype_idx]
        mu = np.asarray(self.datatype_nfiles_mu)[datatype_idx]
        centered = np.log(nfiles) - np.log(1.0 + mu)
        return self.lnw_base + off_s + off_d + self.lnw_nfiles_beta * centered

    def site_catalog(self) -> SiteCatalog:
        rates = {s: self.base_rate * math.exp(r) for s, r in zip(self.sites, self.site_log_rate)}
        return SiteCatalog(rates, scale=1.0)

    # -- (de)serialization -------------------------------------------------

    def to_dict(self):
        def plain(v):
            if isinstance(v, tuple):
                return [plain(x) for x in v]
            return v
        return {k: plain(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, obj) -> "MockProfile":
        def tup(v):
            if isinstance(v, list):
                return tuple(tup(x) for x in v)
            return v
        return cls(**{k: tup(v) for k, v in obj.items()})


DEFAULT_PROFILE = MockProfile()


def _draw(rng, probs, n):
    cum = np.cumsum(_normalized(probs))
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return np.minimum(idx, len(cum) - 1)


def _sample_columns(profile, n, rng):
    p = profile
    site_idx = _draw(rng, p.site_probs, n)
    proj_idx = _draw(rng, p.project_probs, n)

    cond = np.stack([np.cumsum(_normalized(c)) for c in p.prodstep_given_project])
    u = rng.random(n)
    step_idx = np.empty(n, dtype=np.int64)
    for i in range(len(p.projects)):
        m = proj_idx == i
        step_idx[m] = np.searchsorted(cond[i], u[m], side="right")
    step_idx = np.minimum(step_idx, len(p.prodsteps) - 1)

    dt_idx = _draw(rng, p.datatype_probs, n)
    status_idx = _draw(rng, p.status_probs, n)

    day = _draw(rng, p.day_weights(), n)
    creation = (p.t0 + (day + rng.random(n)) * SECONDS_PER_DAY).astype(np.int64)

    nfiles = 1 + rng.poisson(np.asarray(p.datatype_nfiles_mu)[dt_idx])
    scale = np.asarray(p.datatype_file_mb)[dt_idx] * 1e6
    size_noise = np.exp(p.size_jitter * rng.standard_normal(n)) if p.size_jitter > 0 else 1.0
    size = np.maximum(np.rint(nfiles * scale * size_noise), 1).astype(np.int64)

    lnw = p.lnw_mean(site_idx, dt_idx, nfiles)
    if p.noise_sigma > 0:
        lnw = lnw + p.noise_sigma * rng.standard_normal(n)
    workload = np.exp(lnw)

    return {
        "site_idx": site_idx, "proj_idx": proj_idx, "step_idx": step_idx,
        "dt_idx": dt_idx, "status_idx": status_idx,
        "creationtime": creation, "nfiles": nfiles.astype(np.int64),
        "size": size, "workload": workload,
    }


def _columns_to_table(profile, cols):
    p = profile
    return job_table({
        "creationtime": cols["creationtime"],
        "computingsite": np.asarray(p.sites, dtype=object)[cols["site_idx"]],
        "project": np.asarray(p.projects, dtype=object)[cols["proj_idx"]],
        "prodstep": np.asarray(p.prodsteps, dtype=object)[cols["step_idx"]],
        "datatype": np.asarray(p.datatypes, dtype=object)[cols["dt_idx"]],
        "jobstatus": np.asarray(p.statuses, dtype=object)[cols["status_idx"]],
        "nfiles": cols["nfiles"],
        "size": cols["size"],
        "workload": cols["workload"],
    })


def generate_mock_table(profile, n, seed):
    """Derived nine-feature job table with the documented joint structure."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(ss[0])
    return _columns_to_table(profile, _sample_columns(profile, n, rng))


_NAME_SHORTS = ("physlite", "jetmet", "higgs", "exot", "susy", "btag")
_DECOY_TYPES = ("AOD", "ESD", "HITS", "RAW")


def generate_mock_trace(profile, n, seed):
    """Raw 8-column trace whose ingestion reproduces generate_mock_table(seed)
    (workload equal up to one multiply/divide rounding). Returns (records,
    catalog). decoy_fraction adds non-DAOD rows that the DAOD filter removes."""
    p = profile
    ss = np.random.SeedSequence(seed).spawn(2)
    cols = _sample_columns(p, n, np.random.default_rng(ss[0]))
    aux = np.random.default_rng(ss[1])

    ncores = np.asarray(p.ncores_choices)[_draw(aux, p.ncores_probs, n)]
    rates = p.base_rate * np.exp(np.asarray(p.site_log_rate))[cols["site_idx"]]
    cputime = cols["workload"] / (ncores * rates)

    ds_num = aux.integers(0, 100_000_000, n)
    shorts = np.asarray(_NAME_SHORTS, dtype=object)[aux.integers(0, len(_NAME_SHORTS), n)]
    tags = aux.integers(1000, 10000, n)

    sites = np.asarray(p.sites, dtype=object)
    projects = np.asarray(p.projects, dtype=object)
    steps = np.asarray(p.prodsteps, dtype=object)
    dtypes = np.asarray(p.datatypes, dtype=object)
    statuses = np.asarray(p.statuses, dtype=object)

    records = []
    for i in range(n):
        name = (f"{projects[cols['proj_idx'][i]]}.{ds_num[i]:08d}.{shorts[i]}."
                f"{steps[cols['step_idx'][i]]}.{dtypes[cols['dt_idx'][i]]}.p{tags[i]}")
        records.append(RawJobRecord(
            creation_time=int(cols["creationtime"][i]),
            computing_site=str(sites[cols["site_idx"][i]]),
            dataset_name=name,
            n_input_files=int(cols["nfiles"][i]),
            input_file_bytes=int(cols["size"][i]),
            job_status=str(statuses[cols["status_idx"][i]]),
            n_cores=int(ncores[i]),
            cpu_time=float(cputime[i]),
        ))

    n_decoys = int(round(p.decoy_fraction * n))
    if n_decoys:
        positions = np.sort(aux.integers(0, len(records) + 1, n_decoys))[::-1]
        for j in range(n_decoys):
            dn = (f"{projects[aux.integers(0, len(projects))]}.{aux.integers(0, 100_000_000):08d}."
                  f"{_NAME_SHORTS[aux.integers(0, len(_NAME_SHORTS))]}.recon."
                  f"{_DECOY_TYPES[aux.integers(0, len(_DECOY_TYPES))]}.r{aux.integers(1000, 10000)}")
            rec = RawJobRecord(
                creation_time=int(p.t0 + aux.integers(0, p.n_days * SECONDS_PER_DAY)),
                computing_site=str(sites[aux.integers(0, len(sites))]),
                dataset_name=dn,
                n_input_files=int(aux.integers(1, 50)),
                input_file_bytes=int(aux.integers(10**6, 10**10)),
                job_status="finished",
                n_cores=1,
                cpu_time=float(aux.integers(10, 10**4)),
            )
            records.insert(int(positions[j]), rec)
    return records, p.site_catalog()
