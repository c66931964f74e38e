mod args;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use fgmc_core::data::{read_partial_matrix, write_matrix};
use fgmc_core::experiments::{
    method_fit_config, render_report, run_density_sweep, run_ml100k, run_noise_sweep, run_rank_sweep, ExperimentReport,
    Method, Ml100kConfig, Ml100kSplit, MethodOverrides, SyntheticConfig,
};
use fgmc_core::gradcheck::gradient_suite;
use fgmc_core::graph::{load_adjacency, spectral_decompose};
use fgmc_core::optimizer::{fit_observed, Baseline, FitConfig};
use fgmc_core::Error;
use serde::de::DeserializeOwned;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

use args::{Cli, Command, FitArgs, FitFlags, GradArgs, Ml100kArgs, OutputArgs, SynthArgs};

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SynthRank(a) => synthetic(a, run_rank_sweep),
        Command::SynthDensity(a) => synthetic(a, run_density_sweep),
        Command::SynthNoise(a) => synthetic(a, run_noise_sweep),
        Command::Ml100k(a) => ml100k(a),
        Command::Fit(a) => fit_matrix(a),
        Command::CheckGradients(a) => check_gradients(a),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

impl FitFlags {
    /// Applies the flags to the base settings and to any per-method
    /// override of the same field, so a flag wins everywhere.
    fn apply(&self, fit: &mut FitConfig, overrides: &mut MethodOverrides) {
        if let Some(mu) = self.mu {
            fit.mu = mu;
        }
        if let Some(k) = self.k {
            fit.k = k;
        }
        if let Some(target) = self.reg_target {
            fit.reg_target = target;
        }
        if let Some(ratio) = self.val_ratio {
            fit.val_ratio = ratio;
        }
        if let Some(kind) = self.optimizer {
            fit.optimizer = kind;
        }
        if let Some(lr) = self.lr {
            fit.learning_rate = lr;
        }
        if let Some(n) = self.max_iters {
            fit.max_iters = Some(n);
        }
        if let Some(n) = self.patience {
            fit.patience = n;
        }
        for o in overrides.values_mut() {
            if self.optimizer.is_some() {
                o.optimizer = self.optimizer;
            }
            if self.lr.is_some() {
                o.learning_rate = self.lr;
            }
            if self.max_iters.is_some() {
                o.max_iters = self.max_iters;
            }
            if self.patience.is_some() {
                o.patience = self.patience;
            }
        }
    }
}

fn resolve_methods(methods: &mut Vec<Method>, flags: &[Method], baseline: Option<Baseline>) {
    if !flags.is_empty() {
        *methods = flags.to_vec();
    }
    if baseline == Some(Baseline::Sgmc) && !methods.contains(&Method::Sgmc) {
        methods.push(Method::Sgmc);
    }
}

fn synthetic(a: SynthArgs, run: fn(&SyntheticConfig) -> fgmc_core::Result<ExperimentReport>) -> Result<ExitCode> {
    let mut cfg: SyntheticConfig = load_config(a.output.config.as_deref())?;
    a.fit.apply(&mut cfg.fit, &mut cfg.overrides);
    if let Some(k) = a.fit.k {
        cfg.k = k;
    }
    if !a.rank.is_empty() {
        cfg.ranks = a.rank.clone();
        cfg.rank = a.rank[0];
    }
    if !a.density.is_empty() {
        cfg.densities = a.density.clone();
        cfg.density = a.density[0];
    }
    if !a.noise_sigma.is_empty() {
        cfg.noise_levels = a.noise_sigma;
    }
    if !a.seed.is_empty() {
        cfg.seeds = a.seed;
    }
    resolve_methods(&mut cfg.methods, &a.methods, a.fit.baseline);
    cfg.record_timing |= a.timing;
    let report = run(&cfg)?;
    finish(&report, &a.output)
}

fn ml100k(a: Ml100kArgs) -> Result<ExitCode> {
    let mut cfg: Ml100kConfig = load_config(a.output.config.as_deref())?;
    a.fit.apply(&mut cfg.fit, &mut cfg.overrides);
    if let Some(k) = a.fit.k {
        cfg.k = k;
    }
    if let Some(dir) = a.data_dir {
        cfg.dir = dir;
    }
    match a.split.as_deref() {
        None => {}
        Some("random") => {
            let test_ratio = match cfg.split {
                Ml100kSplit::Random { test_ratio } => test_ratio,
                Ml100kSplit::Canonical { .. } => 0.05,
            };
            cfg.split = Ml100kSplit::Random { test_ratio };
        }
        Some(name) => cfg.split = Ml100kSplit::Canonical { name: name.to_string() },
    }
    if let Some(ratio) = a.test_ratio {
        match &mut cfg.split {
            Ml100kSplit::Random { test_ratio } => *test_ratio = ratio,
            Ml100kSplit::Canonical { name } => {
                return Err(Error::Argument(format!("--test-ratio does not apply to the bundled split {name}")).into());
            }
        }
    }
    if let Some(k_nn) = a.k_nn {
        cfg.k_nn = k_nn;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(c) = a.centering {
        cfg.centering = c;
    }
    if let Some(r) = a.bias_reg {
        cfg.bias_reg = r;
    }
    cfg.clamp &= !a.no_clamp;
    resolve_methods(&mut cfg.methods, &a.methods, a.fit.baseline);
    cfg.record_timing |= a.timing;
    let report = run_ml100k(&cfg)?;
    finish(&report, &a.output)
}

fn finish(report: &ExperimentReport, output: &OutputArgs) -> Result<ExitCode> {
    match &output.out {
        Some(path) => fgmc_core::experiments::emit_report(report, path, output.format)?,
        None => std::io::stdout().lock().write_all(&render_report(report, output.format)?)?,
    }
    // The swept quantity; ml100k records carry the basis size.
    let param = if report.protocol == "ml100k" { "k" } else { report.protocol.as_str() };
    for s in report.summaries() {
        eprintln!(
            "{param}={} {}: median test RMSE {:.3e} over {} seed(s)",
            s.param, s.method, s.median_test_rmse, s.seeds
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_matrix(a: FitArgs) -> Result<ExitCode> {
    let mut base: FitConfig = load_config(a.config.as_deref())?;
    let mut no_overrides = MethodOverrides::new();
    a.fit.apply(&mut base, &mut no_overrides);
    if let Some(seed) = a.seed {
        base.seed = seed;
    }
    let method = match (a.method, a.fit.baseline) {
        (m, _) if !m.is_spectral() => {
            return Err(Error::Argument("fit supports ours, ours-fm and sgmc-baseline".into()).into());
        }
        (_, Some(Baseline::Sgmc)) => Method::Sgmc,
        (m, _) => m,
    };
    let config = method_fit_config(method, &base, &no_overrides);

    let obs = read_partial_matrix(&a.matrix)?;
    let (m, n) = obs.shape();
    let row_graph = load_adjacency(&a.row_graph, a.graph_format)?;
    let col_graph = load_adjacency(&a.col_graph, a.graph_format)?;
    if row_graph.node_count() != m || col_graph.node_count() != n {
        return Err(Error::Argument(format!(
            "matrix is {m}x{n} but the graphs have {} and {} nodes",
            row_graph.node_count(),
            col_graph.node_count()
        ))
        .into());
    }
    let row_basis = Arc::new(spectral_decompose(&row_graph.laplacian(), config.k)?);
    let col_basis = Arc::new(spectral_decompose(&col_graph.laplacian(), config.k)?);
    let result = fit_observed(&obs, row_basis, col_basis, &config)?;
    write_matrix(&result.model.decode(), &a.out)?;
    eprintln!(
        "{method}: {} iterations ({:?}), best at {}",
        result.iterations_run, result.stop_reason, result.best_iteration
    );
    Ok(ExitCode::SUCCESS)
}

fn check_gradients(a: GradArgs) -> Result<ExitCode> {
    let cases = gradient_suite(a.instances, a.seed)?;
    if let Some(path) = &a.out {
        let json = serde_json::to_vec_pretty(&cases)?;
        std::fs::write(path, json).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let mut failed = 0;
    for objective in ["commutativity", "commutativity-raw", "sgmc"] {
        let errors: Vec<f64> = cases.iter().filter(|c| c.objective == objective).map(|c| c.error.max()).collect();
        let worst = errors.iter().copied().fold(0.0, f64::max);
        let bad = errors.iter().filter(|e| !(**e <= a.tol)).count();
        failed += bad;
        println!("{objective}: {} instances, max relative error {worst:.2e}, {bad} above {:.0e}", errors.len(), a.tol);
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
