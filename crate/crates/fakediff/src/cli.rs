//! Command-line front end: run configuration, the four subcommands and
//! their CSV/JSON outputs.
//!
//! Every output file starts with `#`-prefixed comment lines echoing the
//! effective configuration, so any result can be reproduced from the file
//! alone. Values are written with Rust's shortest-round-trip float
//! formatting; together with the per-path substream discipline this makes
//! reruns byte-identical.
//!
//! Exit codes: 0 all checks passed, 1 at least one non-warning check
//! failed, 2 configuration or usage error.

use crate::embed::{madan_yor_paths, EmbedConfig};
use crate::error::{Error, Result};
use crate::laws::{DiffusionLaw, Law};
use crate::mixture::{local_vol_eta, residual_density, validate_spec, FakeSpec};
use crate::simulate::{realized_log_qv, sample_fake, PathGrid, RngConfig};
use crate::timechange::TimeChange;
use crate::verify::{full_verification, ks_critical, ks_test, VerificationReport, VerifyConfig};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Effective configuration of a run; defaults are the documented ones
/// (law = ebm, K = 0.5, c = 0.25, T = 1, 50_000 paths, 1000 steps,
/// seed = 42).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub law: Law,
    pub k: f64,
    pub c: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `simulate`: write every k-th grid time to paths.csv.
    pub report_every: usize,
    /// `madan-yor`: Brownian step and per-path step budget.
    pub bm_step: f64,
    pub step_budget: u64,
    /// `madan-yor` report times; `verify` marginal check times.
    pub report_times: Vec<f64>,
    /// `verify`: also run the embedded-process checks.
    pub with_madan_yor: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            law: Law::ebm(),
            k: 0.5,
            c: 0.25,
            horizon: 1.0,
            n_paths: 50_000,
            n_steps: 1000,
            seed: 42,
            out_dir: PathBuf::from("out"),
            report_every: 20,
            bm_step: 1e-4,
            step_budget: 10_000_000,
            report_times: vec![0.25, 0.5, 1.0],
            with_madan_yor: false,
        }
    }
}

impl RunConfig {
    /// Parse a `key = value` configuration file. Lines starting with `#`
    /// and blank lines are ignored; unknown keys are errors. Command-line
    /// flags override file values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1)))?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
        }
        match key {
            "law" => self.law = value.parse()?,
            "K" => self.k = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "T" => self.horizon = num(key, value)?,
            "paths" => self.n_paths = num(key, value)?,
            "steps" => self.n_steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "report_every" => self.report_every = num(key, value)?,
            "bm_step" => self.bm_step = num(key, value)?,
            "step_budget" => self.step_budget = num(key, value)?,
            "report_times" => {
                self.report_times = value
                    .split(',')
                    .map(|s| num("report_times", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "with_madan_yor" => self.with_madan_yor = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Build the clock matching the law and validate the whole spec.
    pub fn build_spec(&self) -> Result<FakeSpec> {
        let tc = match self.law {
            Law::Ebm(_) => TimeChange::exponential_brownian(self.k)?,
            Law::Bm(_) => TimeChange::brownian(self.k)?,
        };
        validate_spec(self.law, tc, self.c)
    }

    /// The `# key = value` header block echoed into every output file.
    pub fn echo_header(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# fakediff {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# law = {}", self.law.name());
        let _ = writeln!(s, "# K = {}", self.k);
        let _ = writeln!(s, "# c = {}", self.c);
        let _ = writeln!(s, "# T = {}", self.horizon);
        let _ = writeln!(s, "# paths = {}", self.n_paths);
        let _ = writeln!(s, "# steps = {}", self.n_steps);
        let _ = writeln!(s, "# seed = {}", self.seed);
        s
    }

    fn check_report_times_on_grid(&self) -> Result<()> {
        let grid = PathGrid::new(self.horizon, self.n_steps)?;
        for &t in &self.report_times {
            if grid.index_of(t).is_none() {
                return Err(Error::Config(format!(
                    "report time {t} is not on the {}-step grid over [0, {}]",
                    self.n_steps, self.horizon
                )));
            }
        }
        Ok(())
    }
}

fn create_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn write_file(cfg: &RunConfig, name: &str, body: &str) -> Result<PathBuf> {
    let path = cfg.out_dir.join(name);
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    f.write_all(cfg.echo_header().as_bytes())?;
    f.write_all(body.as_bytes())?;
    f.flush()?;
    Ok(path)
}

/// `inspect`: dump the clock, the local-volatility surface and the
/// residual density to CSV.
///
/// Files: `clock.csv` (t, a, a_dot), `eta_surface.csv` (t, y, eta),
/// `h_density.csv` (t, y, h).
pub fn cmd_inspect(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = cfg.build_spec()?;
    create_out_dir(cfg)?;
    let mut files = Vec::new();

    let mut clock = String::from("t,a,a_dot\n");
    let n_rows = 64;
    for i in 1..=n_rows {
        let t = cfg.horizon * i as f64 / n_rows as f64;
        let _ = writeln!(clock, "{},{},{}", t, spec.clock().a(t), spec.clock().a_dot(t));
    }
    files.push(write_file(cfg, "clock.csv", &clock)?);

    let ts: Vec<f64> = (1..=32).map(|i| cfg.horizon * i as f64 / 32.0).collect();
    let mut eta = String::from("t,y,eta\n");
    let mut dens = String::from("t,y,h\n");
    for &t in &ts {
        for y in crate::laws::audit_states(spec.law(), t, 4.0, 41) {
            let _ = writeln!(eta, "{},{},{}", t, y, local_vol_eta(&spec, t, y)?);
            let _ = writeln!(dens, "{},{},{}", t, y, residual_density(&spec, t, y)?);
        }
    }
    files.push(write_file(cfg, "eta_surface.csv", &eta)?);
    files.push(write_file(cfg, "h_density.csv", &dens)?);
    Ok(files)
}

/// `simulate`: sample the fake ensemble, write thinned paths and per-path
/// realized log-QV.
///
/// Files: `paths.csv` (path_id, component, t, value) at every
/// `report_every`-th grid time, and `qv.csv` (path_id, component, qv)
/// for positive laws.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = cfg.build_spec()?;
    create_out_dir(cfg)?;
    let grid = PathGrid::new(cfg.horizon, cfg.n_steps)?;
    let ens = sample_fake(&spec, &grid, cfg.n_paths, RngConfig::new(cfg.seed))?;

    let stride = cfg.report_every.max(1);
    let mut paths = String::from("path_id,component,t,value\n");
    for i in 0..ens.n_paths() {
        let label = ens.component(i).label();
        let p = ens.path(i);
        for (j, &v) in p.iter().enumerate() {
            if j % stride == 0 || j == cfg.n_steps {
                let _ = writeln!(paths, "{},{},{},{}", i, label, grid.t(j), v);
            }
        }
    }
    let mut files = vec![write_file(cfg, "paths.csv", &paths)?];

    if matches!(spec.law(), Law::Ebm(_)) {
        let qv = realized_log_qv(&ens)?;
        let mut body = String::from("path_id,component,qv\n");
        for (i, q) in qv.iter().enumerate() {
            let _ = writeln!(body, "{},{},{}", i, ens.component(i).label(), q);
        }
        files.push(write_file(cfg, "qv.csv", &body)?);
    }
    Ok(files)
}

/// `verify`: run the full battery and write `report.json`. Returns the
/// report; the binary maps failures to exit code 1.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerificationReport> {
    cfg.check_report_times_on_grid()?;
    let spec = cfg.build_spec()?;
    create_out_dir(cfg)?;
    let vcfg = VerifyConfig {
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        horizon: cfg.horizon,
        check_times: cfg.report_times.clone(),
        include_madan_yor: cfg.with_madan_yor,
        madan_yor_step: cfg.bm_step,
        ..VerifyConfig::default()
    };
    let report = full_verification(&spec, &vcfg)?;
    fs::write(cfg.out_dir.join("report.json"), report.to_json())?;
    Ok(report)
}

/// `madan-yor`: simulate the embedded process, write the stopped values
/// and append its checks to `report.json` (merging with an existing
/// report in the same directory, if any).
pub fn cmd_madan_yor(cfg: &RunConfig) -> Result<VerificationReport> {
    let law = cfg.law;
    if !matches!(law, Law::Ebm(_)) {
        return Err(Error::Config(
            "the embedded construction targets the lognormal family; use --law ebm".into(),
        ));
    }
    create_out_dir(cfg)?;
    let emb = madan_yor_paths(&EmbedConfig {
        report_times: cfg.report_times.clone(),
        n_paths: cfg.n_paths,
        bm_step: cfg.bm_step,
        step_budget: cfg.step_budget,
        seed: cfg.seed,
    })?;

    let mut body = String::from("path_id,t_report,value\n");
    for i in 0..emb.n_paths() {
        for (j, &t) in emb.report_times().iter().enumerate() {
            let _ = writeln!(body, "{},{},{}", i, t, emb.value(i, j));
        }
    }
    write_file(cfg, "embedded.csv", &body)?;

    // KS / mean / monotonicity entries, appended to any existing report.
    let mut checks = Vec::new();
    let threshold = ks_critical(0.01, cfg.n_paths) + 0.0077;
    let underpowered = cfg.n_paths < 1000;
    for (j, &t) in emb.report_times().iter().enumerate() {
        let samples: Vec<f64> = emb.values_at(j).collect();
        let (d, _) = ks_test(&samples, |x| law.cdf(t, x))?;
        checks.push(crate::verify::CheckEntry {
            check: format!("embed_marginal_ks_t{t}"),
            statistic: d,
            threshold,
            pass: d < threshold,
            warning: underpowered,
        });
        let (mean, se) = emb.mean_and_se(j);
        let z = (mean - law.x0()).abs() / se;
        checks.push(crate::verify::CheckEntry {
            check: format!("embed_mean_z_t{t}"),
            statistic: z,
            threshold: 3.0,
            pass: z < 3.0,
            warning: underpowered,
        });
    }
    let mut monotone_violations = 0usize;
    for i in 0..emb.n_paths() {
        for j in 1..emb.report_times().len() {
            if emb.stop_step(i, j) < emb.stop_step(i, j - 1) {
                monotone_violations += 1;
            }
        }
    }
    checks.push(crate::verify::CheckEntry {
        check: "embed_stop_monotone_violations".into(),
        statistic: monotone_violations as f64,
        threshold: 0.5,
        pass: monotone_violations == 0,
        warning: false,
    });
    checks.push(crate::verify::CheckEntry {
        check: "embed_budget_exhausted_paths".into(),
        statistic: emb.exhausted_paths().len() as f64,
        threshold: 0.5,
        pass: emb.exhausted_paths().is_empty(),
        warning: false,
    });

    let report_path = cfg.out_dir.join("report.json");
    let report = match fs::read_to_string(&report_path) {
        Ok(text) => {
            let mut existing: VerificationReport = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("cannot merge into report.json: {e}")))?;
            existing.checks.retain(|c| !checks.iter().any(|n| n.check == c.check));
            existing.checks.extend(checks);
            existing
        }
        Err(_) => {
            let spec = cfg.build_spec()?;
            VerificationReport {
                config: crate::verify::ReportConfig {
                    law: law.name().to_string(),
                    clock: spec.clock().kind_name().to_string(),
                    k: spec.ratio_bound(),
                    c: spec.c(),
                    l_squared: spec.l_squared(),
                    seed: cfg.seed,
                    n_paths: cfg.n_paths,
                    n_steps: cfg.n_steps,
                    horizon: cfg.horizon,
                    check_times: cfg.report_times.clone(),
                    grids: crate::verify::ReportGrids {
                        audit_times: 64,
                        audit_states: crate::mixture::AUDIT_STATES,
                        pde_space: 0,
                        pde_time: 0,
                    },
                    alpha_marginal: 0.01,
                    alpha_qv: 1e-6,
                },
                checks,
            }
        }
    };
    fs::write(&report_path, report.to_json())?;
    Ok(report)
}
