//! Subcommand implementations. Every artifact is a pure function of the
//! config and seed.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rbcopula::diagnostics::{
    dependence_curves, pit_pairs, predictive_envelopes, scaled_rank_residuals, Curve, MarginTests, ResidualConfig, ResidualSet,
};
use rbcopula::evidence::{bayes_factor_report, model_lml, BridgeResult};
use rbcopula::exec::{mix_seed, stream_rng, Exec};
use rbcopula::mcmc::{posterior_summary, run_chains, BlockAcceptance, ChainConfig, Draws, ParamSummary};
use rbcopula::model::{Dataset, ModelSpec};
use rbcopula::simstudy::{run_replicate, summarize, summary_to_table, ReplicateFit, Scenario, StudySummary};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, StudyConfig};
use crate::error::{io_at, CliError};
use crate::ingest::{dataset_digest, ingest_csv};

/// Largest PSRF a fit may report before `fit` exits with the gate code.
pub const PSRF_GATE: f64 = 1.05;

pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PSRF_FILE: &str = "psrf.txt";
pub const FIT_FILE: &str = "fit.json";

/// Everything needed to reload a fit: the resolved config and a digest of
/// the data it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEcho {
    pub model: String,
    pub spec: ModelSpec,
    pub n: usize,
    pub n_groups: usize,
    pub group_labels: Vec<String>,
    pub data_digest: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub n: usize,
    pub n_groups: usize,
    pub chains: ChainConfig,
    pub parameters: Vec<ParamSummary>,
    pub max_psrf: Option<f64>,
    pub acceptance: Vec<BlockAcceptance>,
    pub warnings: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_at(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_at(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

fn psrf_report(params: &[ParamSummary]) -> String {
    let w = params.iter().map(|p| p.name.len()).max().unwrap_or(9).max(9);
    let mut s = format!("{:<w$}  {:>8}  gate {PSRF_GATE}\n", "parameter", "psrf");
    for p in params {
        match p.psrf {
            Some(r) => s.push_str(&format!("{:<w$}  {:>8.4}  {}\n", p.name, r, if r > PSRF_GATE { "FAIL" } else { "ok" })),
            None => s.push_str(&format!("{:<w$}  {:>8}  n/a\n", p.name, "-")),
        }
    }
    s
}

/// Fits the configured model and writes draws, summary, PSRF report and
/// the fit echo into `out`. With `gate`, a PSRF above [`PSRF_GATE`] turns
/// into [`CliError::Gate`] after the artifacts are written.
pub fn cmd_fit(cfg: &RunConfig, out: &Path, gate: bool) -> Result<FitSummary, CliError> {
    let ing = ingest_csv(&cfg.data.path, &cfg.data, &cfg.model)?;
    let data = &ing.dataset;
    let spec = cfg.model.spec();
    spec.check_covariates(&data.covariates)?;
    let chains = ChainConfig { seed: cfg.seed, ..cfg.chains.clone() };
    let draws = run_chains(data, &spec, &chains)?;
    let parameters = posterior_summary(&draws)?;
    let max_psrf = parameters.iter().filter_map(|p| p.psrf).reduce(f64::max);
    let summary = FitSummary {
        model: spec.label(),
        n: data.n(),
        n_groups: draws.n_groups,
        chains,
        parameters,
        max_psrf,
        acceptance: draws.acceptance.clone(),
        warnings: draws.warnings.clone(),
    };
    ensure_dir(out)?;
    let path = out.join(DRAWS_FILE);
    let mut w = create(&path)?;
    draws.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    let path = out.join(PSRF_FILE);
    fs::write(&path, psrf_report(&summary.parameters)).map_err(io_at(&path))?;
    let echo = FitEcho {
        model: spec.label(),
        spec,
        n: data.n(),
        n_groups: draws.n_groups,
        group_labels: ing.group_labels,
        data_digest: dataset_digest(data),
        config: cfg.clone(),
    };
    write_json(&out.join(FIT_FILE), &echo)?;
    if gate {
        if let Some(m) = max_psrf.filter(|&m| m > PSRF_GATE) {
            return Err(CliError::Gate(format!(
                "max PSRF {m:.4} exceeds {PSRF_GATE}; see {} (rerun with longer chains or --no-psrf-gate)",
                out.join(PSRF_FILE).display()
            )));
        }
    }
    Ok(summary)
}

/// A reloaded fit: echo, data and draws.
pub struct LoadedFit {
    pub dir: PathBuf,
    pub echo: FitEcho,
    pub data: Dataset,
    pub draws: Draws,
}

pub fn load_fit(dir: &Path) -> Result<LoadedFit, CliError> {
    let echo: FitEcho = read_json(&dir.join(FIT_FILE))?;
    let ing = ingest_csv(&echo.config.data.path, &echo.config.data, &echo.config.model)?;
    if dataset_digest(&ing.dataset) != echo.data_digest {
        return Err(CliError::Validation(format!(
            "{}: data file {} changed since the fit",
            dir.display(),
            echo.config.data.path.display()
        )));
    }
    let path = dir.join(DRAWS_FILE);
    let f = fs::File::open(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut draws = Draws::read_csv(BufReader::new(f)).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    draws.spec = Some(echo.spec.clone());
    draws.n_groups = echo.n_groups;
    Ok(LoadedFit { dir: dir.to_path_buf(), echo, data: ing.dataset, draws })
}

/// At most `s` draws, evenly spaced through the retained sample.
pub fn subsample(draws: &Draws, s: usize) -> Draws {
    let total = draws.len();
    let mut out = Draws::empty(draws.names.clone(), draws.n_chains);
    let take = s.min(total);
    for k in 0..take {
        let i = k * total / take;
        out.push(draws.chain_of(i), draws.iter_of(i), draws.row(i));
    }
    out.spec = draws.spec.clone();
    out.n_groups = draws.n_groups;
    out
}

fn residuals(fit: &LoadedFit, seed: u64) -> Result<ResidualSet, CliError> {
    let d = &fit.echo.config.diagnostics;
    let cfg = ResidualConfig { re_mode: d.re_mode, n_null: d.n_null, seed: mix_seed(seed, 3), exec: Exec::Parallel };
    Ok(scaled_rank_residuals(&fit.data, &fit.echo.spec, &subsample(&fit.draws, d.s), &cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub lml: f64,
    pub bridge: BridgeResult,
    pub tests: [MarginTests; 2],
}

pub const COMPARE_HEADER: &str = "Model,LML,Uniform1,Dispersion1,Outliers1,Uniform2,Dispersion2,Outliers2";

/// Evidence and residual tests for each fit; all fits must share data.
pub fn cmd_compare(dirs: &[PathBuf], seed: Option<u64>, out: &Path) -> Result<Vec<CompareRow>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Validation("compare needs at least one fit directory".into()));
    }
    let mut rows = Vec::new();
    let mut digest: Option<(String, PathBuf)> = None;
    for dir in dirs {
        let fit = load_fit(dir)?;
        match &digest {
            Some((d, first)) if *d != fit.echo.data_digest => {
                return Err(CliError::Validation(format!(
                    "{} was fitted to different data than {}",
                    dir.display(),
                    first.display()
                )))
            }
            None => digest = Some((fit.echo.data_digest.clone(), dir.clone())),
            _ => {}
        }
        let seed = seed.unwrap_or(fit.echo.config.seed);
        let bridge = model_lml(&fit.draws, &fit.data, &fit.echo.spec, &fit.echo.config.evidence, &mut stream_rng(seed, 2))?;
        let set = residuals(&fit, seed)?;
        rows.push(CompareRow { model: fit.echo.model.clone(), lml: bridge.lml, bridge, tests: set.tests });
    }
    ensure_dir(out)?;
    let path = out.join("compare.csv");
    let mut w = create(&path)?;
    let mut text = format!("{COMPARE_HEADER}\n");
    for r in &rows {
        let t = &r.tests;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model, r.lml, t[0].uniformity, t[0].dispersion, t[0].outlier, t[1].uniformity, t[1].dispersion, t[1].outlier
        ));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_at(&path))?;
    write_json(&out.join("compare.json"), &rows)?;
    if rows.len() >= 2 {
        let lmls: Vec<(String, f64)> = rows.iter().map(|r| (r.model.clone(), r.lml)).collect();
        let path = out.join("bayes_factors.txt");
        fs::write(&path, bayes_factor_report(&lmls)?.to_text()).map_err(io_at(&path))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveViolation {
    pub curve: String,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub model: String,
    pub s: usize,
    pub b: usize,
    pub tests: [MarginTests; 2],
    /// Share of grid points where the posterior-mean curve leaves its envelope.
    pub envelope_violations: Vec<CurveViolation>,
}

/// Residual tests plus dependence curves with predictive envelopes.
pub fn cmd_diagnose(dir: &Path, seed: Option<u64>, out: &Path) -> Result<DiagnoseReport, CliError> {
    let fit = load_fit(dir)?;
    let seed = seed.unwrap_or(fit.echo.config.seed);
    let d = &fit.echo.config.diagnostics;
    let spec = &fit.echo.spec;
    let set = residuals(&fit, seed)?;
    let sub = subsample(&fit.draws, d.s);
    let pits = pit_pairs(&fit.data, spec, &sub, Exec::Parallel)?;
    let mut curves = dependence_curves(&pits, &d.grid);
    let taus = if spec.copula.has_tau() { sub.column("tau")? } else { vec![0.0] };
    curves.envelopes = Some(predictive_envelopes(spec.copula, &taus, fit.data.n(), d.b, &d.grid, mix_seed(seed, 4), Exec::Parallel)?);
    let reported = Curve::for_family(spec.copula);

    ensure_dir(out)?;
    let path = out.join("residuals.csv");
    let mut text = String::from("unit,r1,r2\n");
    for (i, r) in set.r.iter().enumerate() {
        text.push_str(&format!("{},{},{}\n", i + 1, r[0], r[1]));
    }
    fs::write(&path, text).map_err(io_at(&path))?;
    let path = out.join("dependence.csv");
    let mut w = create(&path)?;
    curves.write_csv(&reported, &mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
    let report = DiagnoseReport {
        model: fit.echo.model.clone(),
        s: set.s,
        b: d.b,
        tests: set.tests,
        envelope_violations: reported
            .iter()
            .map(|&c| CurveViolation { curve: c.name().into(), fraction: curves.violation_fraction(c) })
            .collect(),
    };
    write_json(&out.join("diagnostics.json"), &report)?;
    Ok(report)
}

#[derive(Serialize, Deserialize)]
struct CachedReplicate {
    scenario: Scenario,
    fit: Option<ReplicateFit>,
}

/// Runs every scenario of the study. Each replicate's fit is cached under
/// `out/replicates`, so an interrupted run resumes where it stopped.
pub fn cmd_simulate(cfg: &StudyConfig, out: &Path) -> Result<Vec<StudySummary>, CliError> {
    let scenarios = cfg.scenarios()?;
    let cache_dir = out.join("replicates");
    ensure_dir(&cache_dir)?;
    let mut summaries = Vec::with_capacity(scenarios.len());
    for (i, sc) in scenarios.iter().enumerate() {
        let fits: Vec<Result<Option<ReplicateFit>, CliError>> = Exec::Parallel.map(sc.n_replicates, |r| {
            let path = cache_dir.join(format!("scenario{:02}_r{:04}.json", i + 1, r + 1));
            if let Ok(cached) = read_json::<CachedReplicate>(&path) {
                if cached.scenario == *sc {
                    return Ok(cached.fit);
                }
            }
            let fit = run_replicate(sc, r);
            write_json(&path, &CachedReplicate { scenario: sc.clone(), fit: fit.clone() })?;
            Ok(fit)
        });
        let fits = fits.into_iter().collect::<Result<Vec<_>, _>>()?;
        summaries.push(summarize(sc, fits)?);
    }
    let path = out.join("study.csv");
    let mut w = create(&path)?;
    summary_to_table(&summaries, &mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
    write_json(&out.join("study.json"), &summaries)?;
    Ok(summaries)
}
