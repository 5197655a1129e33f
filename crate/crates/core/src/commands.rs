//! The simulate, fit, summarize and preprocess commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chain::{run_chain, IterationInfo};
use crate::error::{Error, Result};
use crate::io::{
    format_f64, read_archive, read_matrix_csv, read_truth, write_dataset, write_matrix_csv, write_truth, ArchiveWriter,
    Manifest, RunConfig, RunStatus, ARCHIVE_FORMAT, COVARIATES_FILE, LOCATIONS_FILE, MANIFEST_FILE, OUTCOMES_FILE,
    PROGRESS_FILE, TRUTH_FILE,
};
use crate::kernels::{log_likelihood, Kernel};
use crate::model::{canonical_labels, ChainState, Phase};
use crate::posterior::{
    coverage_table, credible_intervals, map_partition, partition_credible_set, similar_pairs, similarity_matrix,
    CoverageRow, IntervalTable, Snapshot,
};
use crate::simulate::{simulate as simulate_design, SimTruth};

/// Environment variable holding the number of worker threads for `fit`.
pub const WORKERS_ENV: &str = "COVCLUST_WORKERS";

/// Simulates one dataset and writes it with its ground truth to `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimTruth> {
    let sim = simulate_design(&cfg.sim_design()?)?;
    write_dataset(out, &sim.data)?;
    write_truth(&out.join(TRUTH_FILE), &sim.truth)?;
    Ok(sim.truth)
}

/// SHA-256 over the data files in `dir`.
pub fn data_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in [OUTCOMES_FILE, COVARIATES_FILE, LOCATIONS_FILE] {
        let path = dir.join(name);
        if path.exists() {
            h.update(name.as_bytes());
            h.update(fs::read(&path).map_err(|e| Error::io(&path, e))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Result of one seed's chain.
#[derive(Debug)]
pub struct FitOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<Manifest>,
}

/// Fits the model to the dataset in `data_dir` once per seed, writing
/// `out/seed_<s>/` archives. Everything is validated before any chain
/// starts; chain failures are recorded in the affected archive.
pub fn fit(cfg: &RunConfig, data_dir: &Path, seeds: &[u64], out: &Path) -> Result<Vec<FitOutcome>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut unique = seeds.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(Error::Config("seeds must be distinct".into()));
    }
    cfg.validate()?;
    let data = crate::io::read_dataset(data_dir)?;
    let spec = cfg.kernel_spec()?;
    if spec.needs_locations() && data.locations.is_none() {
        return Err(Error::Data(format!("the {:?} kernel needs {LOCATIONS_FILE}", spec.family)));
    }
    let kernel = Kernel::for_data(spec, &data)?;
    let hyper = cfg.hyper(data.m())?;
    let schedule = cfg.schedule();
    let options = cfg.chain_options()?;
    let hash = format!("{}:{}", cfg.hash(), data_hash(data_dir)?);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let run_one = |seed: u64| -> FitOutcome {
        let dir = out.join(format!("seed_{seed}"));
        let manifest = Manifest {
            format: ARCHIVE_FORMAT,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hash.clone(),
            seed,
            m: data.m(),
            k: hyper.k,
            p: data.p(),
            kernel: kernel.spec,
            schedule,
            thin: options.thin,
            status: RunStatus::Running,
            abort: None,
        };
        let result = (|| {
            let mut archive = ArchiveWriter::create(&dir, manifest)?;
            let mut progress = ProgressLog::create(&dir.join(PROGRESS_FILE))?;
            let log_every = cfg.log_every;
            let run = run_chain(&data, &kernel, &hyper, schedule, options, seed, |state, info| {
                archive.append(&Snapshot::from_state(state, cfg.store_b))?;
                if info.iteration % log_every == 0 || info.iteration == schedule.total() {
                    progress.write(state, info, log_likelihood(&kernel, state, &data)?)?;
                }
                Ok(())
            });
            progress.flush()?;
            match run {
                Ok(_) => archive.finish(RunStatus::Complete, None),
                Err(e) => {
                    archive.finish(RunStatus::Aborted, Some(e.to_string()))?;
                    Err(e)
                }
            }
        })();
        FitOutcome { seed, dir, result }
    };

    let outcomes = match worker_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| seeds.par_iter().map(|&s| run_one(s)).collect()),
        None => seeds.par_iter().map(|&s| run_one(s)).collect(),
    };
    Ok(outcomes)
}

struct ProgressLog {
    path: PathBuf,
    w: BufWriter<File>,
}

impl ProgressLog {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = ProgressLog {
            path: path.to_path_buf(),
            w: BufWriter::new(file),
        };
        log.line("iteration,phase,clusters,htsm_accepted,walker_moves,log_likelihood")?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn write(&mut self, state: &ChainState, info: &IterationInfo, ll: f64) -> Result<()> {
        let line = format!(
            "{},{},{},{},{},{}",
            info.iteration,
            info.phase.as_str(),
            state.assignment.n_clusters(),
            info.htsm_accepted,
            info.walker_moves,
            format_f64(ll)
        );
        self.line(&line)
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Which draws enter a summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Sampling,
    BurnIn,
    All,
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampling" => Ok(Window::Sampling),
            "burnin" => Ok(Window::BurnIn),
            "all" => Ok(Window::All),
            other => Err(Error::Config(format!("unknown window `{other}`"))),
        }
    }
}

impl Window {
    fn contains(self, phase: Phase) -> bool {
        match self {
            Window::Sampling => phase == Phase::Sampling,
            Window::BurnIn => phase != Phase::Sampling,
            Window::All => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SummarizeOptions {
    pub level: f64,
    pub threshold: f64,
    pub window: Window,
    pub truth: Option<PathBuf>,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        SummarizeOptions {
            level: 0.95,
            threshold: 0.9,
            window: Window::Sampling,
            truth: None,
        }
    }
}

/// Machine-readable digest written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub runs: Vec<String>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub level: f64,
    pub threshold: f64,
    pub draws: usize,
    pub map_partition: Vec<usize>,
    pub map_clusters: usize,
    pub map_mass: f64,
    pub credible_set_size: usize,
    pub truth_map_match: Option<bool>,
    pub truth_in_credible_set: Option<bool>,
    pub run_map_matches: Option<Vec<bool>>,
    pub coverage: Option<Vec<CoverageRow>>,
    pub similar_pairs: usize,
}

/// Expands each path to archive directories: a directory holding a
/// manifest, or the sorted subdirectories of one that does not.
pub fn find_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            runs.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).map_err(|e| Error::io(p, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        if found.is_empty() {
            return Err(Error::Data(format!("no run archives under {}", p.display())));
        }
        found.sort();
        runs.extend(found);
    }
    Ok(runs)
}

/// Pools the archives in `paths` and writes the report files to `out`.
pub fn summarize(paths: &[PathBuf], opts: &SummarizeOptions, out: &Path) -> Result<Summary> {
    if !(opts.threshold >= 0.0 && opts.threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {} outside [0, 1]", opts.threshold)));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("level {} outside (0, 1)", opts.level)));
    }
    let runs = find_runs(paths)?;
    let truth = opts.truth.as_deref().map(read_truth).transpose()?;

    let mut archives: Vec<(Manifest, Vec<Snapshot>)> = Vec::with_capacity(runs.len());
    for dir in &runs {
        let (manifest, snaps) = read_archive(dir)?;
        if manifest.status != RunStatus::Complete {
            return Err(Error::Data(format!("run {} did not complete", dir.display())));
        }
        if let Some((first, _)) = archives.first() {
            if manifest.config_hash != first.config_hash || manifest.m != first.m || manifest.k != first.k {
                return Err(Error::Data(format!(
                    "run {} is incompatible with {} (config hash, M or K differ)",
                    dir.display(),
                    runs[0].display()
                )));
            }
        }
        if archives.iter().any(|(m, _)| m.seed == manifest.seed) {
            return Err(Error::Data(format!("seed {} appears twice", manifest.seed)));
        }
        archives.push((manifest, snaps));
    }
    if let Some(t) = &truth {
        if t.z.len() != archives[0].0.m {
            return Err(Error::Data(format!("truth has {} outcomes, runs have {}", t.z.len(), archives[0].0.m)));
        }
    }
    let windows: Vec<Vec<Snapshot>> = archives
        .iter()
        .map(|(_, s)| s.iter().filter(|d| opts.window.contains(d.phase)).cloned().collect())
        .collect();
    let pooled: Vec<Snapshot> = windows.iter().flatten().cloned().collect();

    let (map, mass) = map_partition(&pooled)?;
    let sim = similarity_matrix(&pooled)?;
    let pairs = similar_pairs(&sim, opts.threshold);
    let cset = partition_credible_set(&pooled, opts.level)?;
    let pooled_table = credible_intervals(&pooled, opts.level, true, truth.as_ref())?;
    let run_tables: Vec<IntervalTable> = windows
        .iter()
        .map(|w| credible_intervals(w, opts.level, true, truth.as_ref()))
        .collect::<Result<_>>()?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let labels: Vec<String> = runs.iter().map(|r| run_label(r)).collect();

    let mut w = CsvOut::create(&out.join("map.csv"), &["outcome", "cluster"])?;
    for (i, l) in map.iter().enumerate() {
        w.row(&[(i + 1).to_string(), (l + 1).to_string()])?;
    }
    w.finish()?;

    write_matrix_csv(&out.join("similarity.csv"), "s", &sim)?;

    let mut w = CsvOut::create(&out.join("pairs.csv"), &["outcome_a", "outcome_b", "similarity"])?;
    for (a, b, s) in &pairs {
        w.row(&[(a + 1).to_string(), (b + 1).to_string(), format_f64(*s)])?;
    }
    w.finish()?;

    let mut w = CsvOut::create(
        &out.join("intervals.csv"),
        &["run", "parameter", "kind", "cluster", "column", "lower", "upper", "truth", "covered"],
    )?;
    for (label, table) in std::iter::once(("pooled", &pooled_table)).chain(labels.iter().map(String::as_str).zip(&run_tables)) {
        for r in &table.rows {
            w.row(&[
                label.to_string(),
                r.name(),
                r.kind.as_str().to_string(),
                (r.index + 1).to_string(),
                r.column.map_or(String::new(), |c| (c + 1).to_string()),
                format_f64(r.lower),
                format_f64(r.upper),
                r.truth.map_or(String::new(), format_f64),
                r.covered.map_or(String::new(), |c| (c as u8).to_string()),
            ])?;
        }
    }
    w.finish()?;

    let coverage = if truth.is_some() && run_tables.len() >= 2 {
        let rows = coverage_table(&run_tables)?;
        let mut w = CsvOut::create(&out.join("coverage.csv"), &["parameter", "mean", "sd", "replicates"])?;
        for r in &rows {
            w.row(&[r.kind.as_str().to_string(), format_f64(r.mean), format_f64(r.sd), r.replicates.to_string()])?;
        }
        w.finish()?;
        Some(rows)
    } else {
        None
    };

    let mut w = CsvOut::create(&out.join("trace.csv"), &["run", "iteration", "phase", "clusters"])?;
    for (label, (_, snaps)) in labels.iter().zip(&archives) {
        for s in snaps {
            w.row(&[label.clone(), s.iteration.to_string(), s.phase.as_str().to_string(), s.n_clusters().to_string()])?;
        }
    }
    w.finish()?;

    let true_z = truth.as_ref().map(|t| canonical_labels(&t.z));
    let summary = Summary {
        runs: labels,
        seeds: archives.iter().map(|(m, _)| m.seed).collect(),
        config_hash: archives[0].0.config_hash.clone(),
        level: opts.level,
        threshold: opts.threshold,
        draws: pooled.len(),
        map_clusters: map.iter().max().map_or(0, |l| l + 1),
        map_partition: map.clone(),
        map_mass: mass,
        credible_set_size: cset.len(),
        truth_map_match: true_z.as_ref().map(|z| *z == map),
        truth_in_credible_set: true_z.as_ref().map(|z| cset.iter().any(|(p, _)| p == z)),
        run_map_matches: true_z
            .as_ref()
            .map(|_| run_tables.iter().map(|t| t.map_is_truth == Some(true)).collect()),
        coverage,
        similar_pairs: pairs.len(),
    };
    let path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::parse(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

struct CsvOut {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = CsvOut {
            path: path.to_path_buf(),
            w: csv::Writer::from_writer(BufWriter::new(file)),
        };
        out.w.write_record(header).map_err(|e| Error::parse(path, e))?;
        Ok(out)
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields).map_err(|e| Error::parse(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads per-subject series (`T x M` CSVs) and writes the preprocessed
/// dataset to `out`.
pub fn preprocess(subjects: &[PathBuf], lag: usize, out: &Path) -> Result<()> {
    let mut series: Vec<DMatrix<f64>> = Vec::with_capacity(subjects.len());
    let mut labels = None;
    for path in subjects {
        let (header, a) = read_matrix_csv(path)?;
        labels.get_or_insert(header);
        series.push(a);
    }
    let mut data = crate::io::preprocess_timeseries(&series, lag)?;
    if let Some(l) = labels {
        data.labels = l;
    }
    write_dataset(out, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig {
            m: 8,
            n: 20,
            clusters: 2,
            burnin1: 10,
            burnin2: 10,
            sampling: 20,
            log_every: 5,
            ..RunConfig::default()
        }
    }

    #[test]
    fn simulate_fit_summarize_round() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data = dir.path().join("data");
        let truth = simulate(&cfg, &data).unwrap();
        assert_eq!(truth.z.len(), 8);
        let runs = dir.path().join("runs");
        let fits = fit(&cfg, &data, &[3, 4], &runs).unwrap();
        assert!(fits.iter().all(|f| f.result.is_ok()));
        let (manifest, snaps) = read_archive(&runs.join("seed_3")).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(snaps.len(), 40);
        let progress = fs::read_to_string(runs.join("seed_3").join(PROGRESS_FILE)).unwrap();
        assert_eq!(progress.lines().count(), 1 + 8);

        let opts = SummarizeOptions {
            truth: Some(data.join(TRUTH_FILE)),
            ..SummarizeOptions::default()
        };
        let s = summarize(std::slice::from_ref(&runs), &opts, &dir.path().join("report")).unwrap();
        assert_eq!(s.draws, 40);
        assert_eq!(s.seeds, vec![3, 4]);
        assert!(s.coverage.is_some());
        for f in ["map.csv", "similarity.csv", "pairs.csv", "intervals.csv", "coverage.csv", "trace.csv", "summary.json"] {
            assert!(dir.path().join("report").join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn summarize_rejects_mismatched_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data = dir.path().join("data");
        simulate(&cfg, &data).unwrap();
        fit(&cfg, &data, &[1], &dir.path().join("a")).unwrap();
        let other = RunConfig { thin: 2, ..cfg };
        fit(&other, &data, &[2], &dir.path().join("b")).unwrap();
        let err = summarize(
            &[dir.path().join("a"), dir.path().join("b")],
            &SummarizeOptions::default(),
            &dir.path().join("r"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn fit_validates_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data = dir.path().join("data");
        simulate(&cfg, &data).unwrap();
        let matern = RunConfig {
            kernel: "matern32".into(),
            ..small_config()
        };
        let err = fit(&matern, &data, &[1], &dir.path().join("r")).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(!dir.path().join("r").exists());
        assert!(matches!(fit(&cfg, &data, &[], &dir.path().join("r")), Err(Error::Config(_))));
        assert!(matches!(fit(&cfg, &data, &[1, 1], &dir.path().join("r")), Err(Error::Config(_))));
    }
}
