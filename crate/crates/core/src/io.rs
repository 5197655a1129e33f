//! Run configuration, CSV matrices, sample archives and time-series
//! preprocessing.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{ChainOptions, PhaseSchedule, ZMoves};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{Dataset, HyperParams, Phase};
use crate::partition::WalkerWindow;
use crate::posterior::Snapshot;
use crate::simulate::{ParamRule, PartitionKind, SimDesign, SimTruth};

pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const PROGRESS_FILE: &str = "progress.csv";
pub const ARCHIVE_FORMAT: u32 = 1;

/// Flat key-value run configuration. Every key is optional; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // simulation design
    pub m: usize,
    pub n: usize,
    /// `uniform` or `dp`.
    pub partition: String,
    pub clusters: usize,
    pub dp_alpha: f64,
    /// `heterogeneous` or `homogeneous`.
    pub params: String,
    pub true_rho: f64,
    pub true_sigma2: f64,
    pub sim_seed: u64,

    // kernel
    /// `compound_symmetry`, `gen_ar1` or `matern32`.
    pub kernel: String,
    pub nu: f64,
    /// Divisor applied to distances; defaults to 20 for Matern, 1 otherwise.
    pub distance_scale: Option<f64>,

    // hyperparameters; unset values follow the dimension-based defaults
    pub k: Option<usize>,
    pub tau2: Option<f64>,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub a1: Option<f64>,
    pub b1: Option<f64>,
    pub a2: Option<f64>,
    pub b2: Option<f64>,
    pub lambda_burnin: Option<f64>,
    pub lambda_sampling: Option<f64>,
    pub p0: Option<f64>,
    pub walker_step: Option<usize>,
    pub rho_upper: Option<f64>,
    pub split_weights: Option<Vec<f64>>,

    // sampler
    pub burnin1: usize,
    pub burnin2: usize,
    pub sampling: usize,
    pub thin: usize,
    /// `htsm`, `walker_only` or `gibbs_only`.
    pub moves: String,
    /// `exact` or `published`.
    pub walker_window: String,
    pub walker_all_phases: bool,
    pub store_b: bool,
    pub log_every: usize,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 100,
            n: 100,
            partition: "uniform".into(),
            clusters: 20,
            dp_alpha: 6.0,
            params: "heterogeneous".into(),
            true_rho: 0.7,
            true_sigma2: 1.1,
            sim_seed: 1,
            kernel: "compound_symmetry".into(),
            nu: 0.2,
            distance_scale: None,
            k: None,
            tau2: None,
            a0: None,
            b0: None,
            a1: None,
            b1: None,
            a2: None,
            b2: None,
            lambda_burnin: None,
            lambda_sampling: None,
            p0: None,
            walker_step: None,
            rho_upper: None,
            split_weights: None,
            burnin1: 1000,
            burnin2: 1000,
            sampling: 8000,
            thin: 1,
            moves: "htsm".into(),
            walker_window: "exact".into(),
            walker_all_phases: true,
            store_b: true,
            log_every: 100,
            seeds: vec![1],
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.kernel_spec()?.validate()?;
        self.schedule();
        self.chain_options()?;
        self.partition_kind()?;
        self.param_rule()?;
        self.hyper(self.m.max(2))?;
        if self.thin == 0 || self.log_every == 0 {
            return Err(Error::Config("thin and log_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let mut spec = match self.kernel.as_str() {
            "compound_symmetry" | "cs" => KernelSpec::compound_symmetry(),
            "gen_ar1" | "ar1" => KernelSpec::gen_ar1(self.nu),
            "matern32" | "matern" => KernelSpec::matern32(20.0),
            other => return Err(Error::Config(format!("unknown kernel `{other}`"))),
        };
        if let Some(s) = self.distance_scale {
            spec.distance_scale = s;
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn partition_kind(&self) -> Result<PartitionKind> {
        match self.partition.as_str() {
            "uniform" => Ok(PartitionKind::UniformEqual { clusters: self.clusters }),
            "dp" => Ok(PartitionKind::DirichletProcess { alpha: self.dp_alpha }),
            other => Err(Error::Config(format!("unknown partition `{other}`"))),
        }
    }

    pub fn param_rule(&self) -> Result<ParamRule> {
        match self.params.as_str() {
            "heterogeneous" => Ok(ParamRule::Heterogeneous),
            "homogeneous" => Ok(ParamRule::Homogeneous {
                rho: self.true_rho,
                sigma2: self.true_sigma2,
            }),
            other => Err(Error::Config(format!("unknown parameter rule `{other}`"))),
        }
    }

    pub fn sim_design(&self) -> Result<SimDesign> {
        let design = SimDesign {
            m: self.m,
            n: self.n,
            partition: self.partition_kind()?,
            kernel: self.kernel_spec()?,
            params: self.param_rule()?,
            seed: self.sim_seed,
        };
        design.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(design)
    }

    /// Hyperparameters for an `m`-dimensional outcome.
    pub fn hyper(&self, m: usize) -> Result<HyperParams> {
        let mut h = HyperParams::with_truncation(self.k.unwrap_or((m / 2).max(1)));
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { h.$f = v; } )* };
        }
        set!(tau2, a0, b0, a1, b1, a2, b2, lambda_burnin, lambda_sampling, p0, walker_step, rho_upper, split_weights);
        if h.k > m {
            return Err(Error::Config(format!("k = {} exceeds the outcome dimension {m}", h.k)));
        }
        h.validate()?;
        Ok(h)
    }

    pub fn schedule(&self) -> PhaseSchedule {
        PhaseSchedule {
            burnin1: self.burnin1,
            burnin2: self.burnin2,
            sampling: self.sampling,
        }
    }

    pub fn chain_options(&self) -> Result<ChainOptions> {
        let moves = match self.moves.as_str() {
            "htsm" => ZMoves::Htsm,
            "walker_only" => ZMoves::WalkerOnly,
            "gibbs_only" => ZMoves::GibbsOnly,
            other => return Err(Error::Config(format!("unknown move set `{other}`"))),
        };
        let window: WalkerWindow = self.walker_window.parse()?;
        Ok(ChainOptions {
            moves,
            walker_window: window,
            walker_all_phases: self.walker_all_phases,
            thin: self.thin,
        })
    }

    /// SHA-256 of the canonical JSON form of the configuration. Seeds and
    /// logging frequency are excluded so that chains run separately with
    /// the same settings can be pooled.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.log_every = 1;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Formats a value with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `a` with columns headed `{prefix}1, {prefix}2, ...`.
pub fn write_matrix_csv(path: &Path, prefix: &str, a: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = (1..=a.ncols()).map(|c| format!("{prefix}{c}")).collect();
    write_matrix_csv_with_header(path, &header, a)
}

pub fn write_matrix_csv_with_header(path: &Path, header: &[String], a: &DMatrix<f64>) -> Result<()> {
    if header.len() != a.ncols() {
        return Err(Error::Data(format!("{} column names for {} columns", header.len(), a.ncols())));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| Error::parse(path, e);
    w.write_record(header).map_err(err)?;
    for r in 0..a.nrows() {
        w.write_record((0..a.ncols()).map(|c| format_f64(a[(r, c)]))).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a headered numeric CSV; returns the header and the matrix.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Data(format!("cannot open {}: {e}", path.display())),
        _ => Error::parse(path, e),
    })?;
    let header: Vec<String> = r.headers().map_err(|e| Error::parse(path, e))?.iter().map(String::from).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::parse(path, format!("row {} has {} fields, expected {}", i + 1, rec.len(), header.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: `{field}` is not a number", i + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &values)))
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if data.labels.len() == data.m() {
        write_matrix_csv_with_header(&dir.join(OUTCOMES_FILE), &data.labels, &data.outcomes)?;
    } else {
        write_matrix_csv(&dir.join(OUTCOMES_FILE), "y", &data.outcomes)?;
    }
    write_matrix_csv(&dir.join(COVARIATES_FILE), "x", &data.covariates)?;
    if let Some(locs) = &data.locations {
        let dim = locs.first().map_or(0, Vec::len);
        let a = DMatrix::from_fn(locs.len(), dim, |r, c| locs[r][c]);
        write_matrix_csv(&dir.join(LOCATIONS_FILE), "s", &a)?;
    }
    Ok(())
}

/// Reads `outcomes.csv`, `covariates.csv` and, if present, `locations.csv`
/// (one row per outcome coordinate).
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let (labels, y) = read_matrix_csv(&dir.join(OUTCOMES_FILE))?;
    let (_, x) = read_matrix_csv(&dir.join(COVARIATES_FILE))?;
    let loc_path = dir.join(LOCATIONS_FILE);
    let locations = if loc_path.exists() {
        let (_, l) = read_matrix_csv(&loc_path)?;
        Some(l.row_iter().map(|r| r.iter().copied().collect()).collect())
    } else {
        None
    };
    let mut data = Dataset::new(y, x, locations)?;
    data.labels = labels;
    Ok(data)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

pub fn write_truth(path: &Path, truth: &SimTruth) -> Result<()> {
    write_json(path, truth)
}

pub fn read_truth(path: &Path) -> Result<SimTruth> {
    read_json(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    pub kernel: KernelSpec,
    pub schedule: PhaseSchedule,
    pub thin: usize,
    pub status: RunStatus,
    pub abort: Option<String>,
}

/// One archived draw; `z` is run-length encoded as `[label, run]` pairs and
/// `j` is the number of clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    iteration: usize,
    phase: Phase,
    z: Vec<[usize; 2]>,
    j: usize,
    alpha: f64,
    sigma2: Vec<f64>,
    rho: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    b: Option<Vec<Vec<f64>>>,
}

pub fn rle_encode(z: &[usize]) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = Vec::new();
    for &l in z {
        match out.last_mut() {
            Some(last) if last[0] == l => last[1] += 1,
            _ => out.push([l, 1]),
        }
    }
    out
}

pub fn rle_decode(runs: &[[usize; 2]]) -> Vec<usize> {
    runs.iter().flat_map(|&[l, n]| std::iter::repeat_n(l, n)).collect()
}

/// Append-only writer for one chain's draws.
pub struct ArchiveWriter {
    dir: PathBuf,
    manifest: Manifest,
    samples: BufWriter<File>,
    last_iteration: usize,
}

impl ArchiveWriter {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        let path = dir.join(SAMPLES_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(ArchiveWriter {
            dir: dir.to_path_buf(),
            manifest,
            samples: BufWriter::new(file),
            last_iteration: 0,
        })
    }

    pub fn append(&mut self, snap: &Snapshot) -> Result<()> {
        if snap.iteration <= self.last_iteration {
            return Err(Error::Numerical(format!(
                "archive iterations must increase ({} after {})",
                snap.iteration, self.last_iteration
            )));
        }
        self.last_iteration = snap.iteration;
        let rec = Record {
            iteration: snap.iteration,
            phase: snap.phase,
            z: rle_encode(&snap.z),
            j: snap.n_clusters(),
            alpha: snap.alpha,
            sigma2: snap.sigma2.clone(),
            rho: snap.rho.clone(),
            b: snap.b.clone(),
        };
        let path = self.dir.join(SAMPLES_FILE);
        serde_json::to_writer(&mut self.samples, &rec).map_err(|e| Error::parse(&path, e))?;
        self.samples.write_all(b"\n").map_err(|e| Error::io(&path, e))
    }

    /// Flushes the draws and records the final status in the manifest.
    pub fn finish(mut self, status: RunStatus, abort: Option<String>) -> Result<Manifest> {
        let path = self.dir.join(SAMPLES_FILE);
        self.samples.flush().map_err(|e| Error::io(&path, e))?;
        self.manifest.status = status;
        self.manifest.abort = abort;
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

pub fn read_archive(dir: &Path) -> Result<(Manifest, Vec<Snapshot>)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(SAMPLES_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut snaps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::parse(&path, format!("line {}: {e}", i + 1)))?;
        let z = rle_decode(&rec.z);
        if z.len() != manifest.m {
            return Err(Error::parse(&path, format!("line {}: z has length {}, expected {}", i + 1, z.len(), manifest.m)));
        }
        snaps.push(Snapshot {
            iteration: rec.iteration,
            phase: rec.phase,
            z,
            alpha: rec.alpha,
            sigma2: rec.sigma2,
            rho: rec.rho,
            b: rec.b,
        });
    }
    Ok((manifest, snaps))
}

/// Keeps time points `lag, 2 lag, ...` (1-based).
pub fn thin_series(series: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let kept: Vec<usize> = (1..=series.nrows() / lag).map(|i| i * lag - 1).collect();
    series.select_rows(kept.iter())
}

/// Centres and scales each column to mean 0 and sample variance 1.
pub fn standardize_columns(a: &mut DMatrix<f64>) -> Result<()> {
    let n = a.nrows() as f64;
    for (c, mut col) in a.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data(format!("column {} is constant and cannot be scaled", c + 1)));
        }
        col /= sd;
    }
    Ok(())
}

/// Builds a dataset from per-subject series (`T_l x M` each): lag thinning,
/// stacking, subject-indicator covariates and pooled column
/// standardisation.
pub fn preprocess_timeseries(subjects: &[DMatrix<f64>], lag: usize) -> Result<Dataset> {
    if lag == 0 {
        return Err(Error::Config("lag must be at least 1".into()));
    }
    if subjects.is_empty() {
        return Err(Error::Data("no subjects".into()));
    }
    let m = subjects[0].ncols();
    let mut parts = Vec::with_capacity(subjects.len());
    for (l, s) in subjects.iter().enumerate() {
        if s.ncols() != m {
            return Err(Error::Data(format!("subject {} has {} columns, expected {m}", l + 1, s.ncols())));
        }
        let t = thin_series(s, lag);
        if t.nrows() == 0 {
            return Err(Error::Data(format!("subject {} has no time points after thinning", l + 1)));
        }
        parts.push(t);
    }
    let n: usize = parts.iter().map(DMatrix::nrows).sum();
    let mut y = DMatrix::zeros(n, m);
    let mut x = DMatrix::zeros(n, parts.len());
    let mut row = 0;
    for (l, p) in parts.iter().enumerate() {
        for r in 0..p.nrows() {
            y.set_row(row, &p.row(r));
            x[(row, l)] = 1.0;
            row += 1;
        }
    }
    standardize_columns(&mut y)?;
    Dataset::new(y, x, None)
}
