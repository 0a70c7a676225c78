//! Command-line surface: analysis runs, correlation estimation, synthetic
//! data generation, Monte-Carlo experiments, and a numeric self-check.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtafs_core::baselines::Method;
use mtafs_core::config::{build_experiment, config_hash, parse_method_list, KvConfig};
use mtafs_core::corr::CorrAccumulator;
use mtafs_core::error::Error;
use mtafs_core::io::{parse_zscore_file, write_corr_file, write_zscore_file, DEFAULT_BLOCK_SIZE};
use mtafs_core::runner::{run_analysis, InputKind, RunManifest};
use mtafs_core::sim::{
    make_correlation, make_mu, partial_roc, power_experiment, simulate_zblock, type1_experiment,
};
use mtafs_core::{eigen, quadform, sim, stats};

#[derive(Parser)]
#[command(name = "mtafs", version, about = "Multi-trait association tests from GWAS summary statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Key-value config file; command-line flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (all randomness flows from here)
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method list (mtafs,sum,ssu,metamanova,hom,cauchy)
    #[arg(long)]
    methods: Option<String>,
    /// Worker threads (env MTAFS_WORKERS overrides the default of 1)
    #[arg(long)]
    workers: Option<usize>,
    /// Output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a z-score (or p-value) file and write per-method p-values
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Input TSV: header `snp_id` then trait names, one row per SNP
        #[arg(long)]
        input: Option<PathBuf>,
        /// Treat the input as p-values instead of z-scores
        #[arg(long, default_value_t = false)]
        pvalues: bool,
        /// Optional +1/-1 sign file matching a p-value input
        #[arg(long)]
        signs: Option<PathBuf>,
        /// Trait correlation file; estimated from the input when absent
        #[arg(long)]
        corr: Option<PathBuf>,
        /// Significance threshold for the summary counts
        #[arg(long)]
        alpha: Option<f64>,
        /// SNP rows per block
        #[arg(long)]
        block_size: Option<usize>,
    },
    /// Estimate the sample correlation of a z-score file
    EstimateCorr {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: usize,
    },
    /// Emit a synthetic z-score file from a scenario config
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the true correlation matrix here
        #[arg(long)]
        corr_out: Option<PathBuf>,
    },
    /// Empirical type-1-error ratio table
    Type1 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Power table over the configured effect grid
    Power {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Partial ROC curves from paired null/alternative runs
    Roc {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest empirical false-positive rate to sweep
        #[arg(long, default_value_t = 0.01)]
        fpr_max: f64,
    },
    /// Run the analytic and oracle invariant suite
    Selfcheck,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::WorkerPanic { .. } => 3,
        Error::IntegrationFailure { .. }
        | Error::ConvergenceFailure { .. }
        | Error::RootNotBracketed { .. }
        | Error::DegenerateVariance { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<KvConfig, Error> {
    let mut kv = match &common.config {
        Some(path) => KvConfig::from_path(path)?,
        None => KvConfig::new(),
    };
    if let Some(seed) = common.seed {
        kv.set("seed", seed);
    }
    if let Some(methods) = &common.methods {
        parse_method_list(methods)?;
        kv.set("methods", methods);
    }
    Ok(kv)
}

fn resolve_workers(common: &CommonArgs) -> usize {
    common
        .workers
        .or_else(|| std::env::var("MTAFS_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig { reason: format!("cannot build worker pool: {e}") })
}

fn require_out(common: &CommonArgs) -> Result<PathBuf, Error> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig { reason: "missing --out".into() })
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, input, pvalues, signs, corr, alpha, block_size } => {
            let kv = load_config(&common)?;
            let input = input
                .or_else(|| kv.get("input").map(PathBuf::from))
                .ok_or_else(|| Error::InvalidConfig { reason: "missing --input".into() })?;
            let out = common
                .out
                .clone()
                .or_else(|| kv.get("out").map(PathBuf::from))
                .ok_or_else(|| Error::InvalidConfig { reason: "missing --out".into() })?;
            let methods = match kv.get("methods") {
                Some(m) => parse_method_list(m)?,
                None => Method::ALL.to_vec(),
            };
            let input_kind = if pvalues
                || kv.get("input_kind").map(|k| k.eq_ignore_ascii_case("pvalues")).unwrap_or(false)
            {
                InputKind::PValues
            } else {
                InputKind::ZScores
            };
            let manifest = RunManifest {
                input,
                input_kind,
                signs: signs.or_else(|| kv.get("signs").map(PathBuf::from)),
                corr: corr.or_else(|| kv.get("corr").map(PathBuf::from)),
                methods,
                alpha: match alpha {
                    Some(a) => a,
                    None => kv.get_or("alpha", 5e-8)?,
                },
                block_size: match block_size {
                    Some(b) => b,
                    None => kv.get_or("block_size", DEFAULT_BLOCK_SIZE)?,
                },
                workers: resolve_workers(&common),
                seed: kv.get_or("seed", 0u64)?,
                out,
            };
            if manifest.block_size == 0 {
                return Err(Error::InvalidConfig { reason: "block_size must be >= 1".into() });
            }
            let summary = run_analysis(&manifest)?;
            let secs = summary.wall.as_secs_f64();
            eprintln!(
                "analyzed {} SNPs in {} blocks ({} rows dropped) in {:.2}s ({:.0} SNPs/s, workers={})",
                summary.n_snps,
                summary.blocks,
                summary.dropped_rows,
                secs,
                summary.n_snps as f64 / secs.max(1e-9),
                manifest.workers,
            );
            for (m, c) in &summary.significant {
                eprintln!("  {m}: {c} SNPs below alpha={:e}", manifest.alpha);
            }
            Ok(())
        }
        Command::EstimateCorr { input, out, block_size } => {
            let mut reader = parse_zscore_file(&input, block_size.max(1))?;
            let names = reader.trait_names().to_vec();
            let mut acc = CorrAccumulator::new(names.len());
            for block in reader.by_ref() {
                acc.push(&block?.z);
            }
            let est = acc.finish(&names)?;
            write_corr_file(&out, &names, &est.r)?;
            eprintln!("estimated {0}x{0} correlation from {1} rows", names.len(), acc.n_rows());
            Ok(())
        }
        Command::Simulate { common, corr_out } => {
            let kv = load_config(&common)?;
            let out = require_out(&common)?;
            let cfg = build_experiment(&kv)?;
            let r = make_correlation(&cfg.correlation)?;
            let mu = match &cfg.association {
                None => nalgebra::DVector::zeros(r.t()),
                Some(assoc) => {
                    let es = eigen::eigendecompose(&r)?;
                    make_mu(assoc, &es, assoc.effect_grid[0])?
                }
            };
            let block = simulate_zblock(&mu, &r, cfg.n_replicates, cfg.seed)?;
            write_zscore_file(&out, &block)?;
            if let Some(corr_path) = corr_out {
                write_corr_file(&corr_path, &block.trait_names, &r.r)?;
            }
            eprintln!("wrote {} synthetic SNPs x {} traits to {}", block.n_snps(), block.n_traits(), out.display());
            Ok(())
        }
        Command::Type1 { common } => {
            let kv = load_config(&common)?;
            let out = require_out(&common)?;
            let cfg = build_experiment(&kv)?;
            let workers = resolve_workers(&common);
            let table = rayon_pool(workers)?.install(|| type1_experiment(&cfg))?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(f, "# mtafs type1")?;
            writeln!(f, "# config-hash: {}", config_hash(&kv.canonical()))?;
            writeln!(f, "# seed: {}", table.seed)?;
            writeln!(f, "# n-replicates: {}", table.n_replicates)?;
            writeln!(f, "method\talpha\trejections\tratio\tse_ratio")?;
            for (m, row) in table.methods.iter().zip(table.cells.iter()) {
                for (alpha, cell) in table.alphas.iter().zip(row.iter()) {
                    writeln!(
                        f,
                        "{}\t{:e}\t{}\t{:.6}\t{:.6}",
                        m.name(),
                        alpha,
                        cell.rejections,
                        cell.ratio,
                        cell.se_ratio
                    )?;
                }
            }
            Ok(())
        }
        Command::Power { common } => {
            let kv = load_config(&common)?;
            let out = require_out(&common)?;
            let cfg = build_experiment(&kv)?;
            let workers = resolve_workers(&common);
            let table = rayon_pool(workers)?.install(|| power_experiment(&cfg))?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(f, "# mtafs power")?;
            writeln!(f, "# config-hash: {}", config_hash(&kv.canonical()))?;
            writeln!(f, "# seed: {}", table.seed)?;
            writeln!(f, "# n-replicates: {}", table.n_replicates)?;
            writeln!(f, "# alpha: {:e}", table.alpha)?;
            writeln!(f, "method\teffect\tpower\tse")?;
            for (m, row) in table.methods.iter().zip(table.power.iter()) {
                for (effect, power) in table.effects.iter().zip(row.iter()) {
                    writeln!(
                        f,
                        "{}\t{}\t{:.6}\t{:.6}",
                        m.name(),
                        effect,
                        power,
                        stats::proportion_se(*power, table.n_replicates)
                    )?;
                }
            }
            Ok(())
        }
        Command::Roc { common, fpr_max } => {
            let kv = load_config(&common)?;
            let out = require_out(&common)?;
            let cfg = build_experiment(&kv)?;
            let workers = resolve_workers(&common);
            let curves = rayon_pool(workers)?.install(|| partial_roc(&cfg, fpr_max))?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(f, "# mtafs roc")?;
            writeln!(f, "# config-hash: {}", config_hash(&kv.canonical()))?;
            writeln!(f, "# seed: {}", cfg.seed)?;
            writeln!(f, "# effect: {}", curves.effect)?;
            writeln!(f, "# fpr-max: {}", curves.fpr_max)?;
            writeln!(f, "method\tfpr\ttpr")?;
            for (m, curve) in curves.methods.iter().zip(curves.curves.iter()) {
                for (fpr, tpr) in curve {
                    writeln!(f, "{}\t{:.8}\t{:.8}", m.name(), fpr, tpr)?;
                }
            }
            Ok(())
        }
        Command::Selfcheck => selfcheck(),
    }
}

fn selfcheck() -> Result<(), Error> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("PASS {name}: {detail}");
        } else {
            println!("FAIL {name}: {detail}");
            failures += 1;
        }
    };

    // Order-statistics weights vs a quick Monte-Carlo oracle.
    {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let (e, k, n) = (3usize, 2usize, 200_000usize);
        let spec = quadform::topk_order_weights(e, k)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12345);
        let unif = rand_distr::Uniform::new_inclusive(f64::MIN_POSITIVE, 1.0).expect("valid range");
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let mut logs: Vec<f64> = (0..e).map(|_| -unif.sample(&mut rng).ln()).collect();
                logs.sort_by(|a, b| b.partial_cmp(a).unwrap());
                logs[..k].iter().sum()
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut worst = 0.0f64;
        for q in 1..100 {
            let idx = q * n / 100;
            let model = 1.0 - quadform::davies_tail(&spec, draws[idx], 1e-7)?.p;
            worst = worst.max((model - idx as f64 / n as f64).abs());
        }
        check(
            "order-weights-oracle",
            worst < 0.006,
            format!("max CDF deviation {worst:.5} (E={e}, k={k}, {n} draws)"),
        );
    }

    // Gamma consistency of the automatic tail dispatch.
    {
        let mut worst = 0.0f64;
        for e in 1..=10usize {
            let spec = quadform::topk_order_weights(e, e)?;
            for i in 1..=30 {
                let x = e as f64 * 0.2 * i as f64;
                let (p, method) = quadform::tail_auto(&spec, x);
                let truth = stats::gamma_sf(x, e as f64);
                let err = match method {
                    quadform::TailMethod::Davies => (p - truth).abs(),
                    quadform::TailMethod::Saddlepoint => {
                        if truth > 0.0 { ((p - truth) / truth).abs() * 1e-8 } else { 0.0 }
                    }
                };
                worst = worst.max(err);
            }
        }
        check("gamma-consistency", worst <= 1e-8, format!("worst deviation {worst:.2e}"));
    }

    // Davies vs saddlepoint agreement in the comparable region.
    {
        let mut worst = 0.0f64;
        let mut compared = 0usize;
        for e in [3usize, 6, 12] {
            for k in [1usize, e / 2 + 1, e] {
                let spec = quadform::topk_order_weights(e, k)?;
                for mult in [1.5, 2.5, 4.0, 7.0] {
                    let x = spec.mean() * mult;
                    if let Ok(d) = quadform::davies_tail(&spec, x, 1e-10) {
                        if d.p >= 1e-8 && d.p <= 0.4 {
                            let s = quadform::saddlepoint_tail(&spec, x)?;
                            worst = worst.max(((s - d.p) / d.p).abs());
                            compared += 1;
                        }
                    }
                }
            }
        }
        check(
            "davies-saddlepoint-agreement",
            worst < 0.05 && compared > 10,
            format!("worst relative gap {worst:.4} over {compared} points"),
        );
    }

    // Cauchy combination identities.
    {
        let (stat, p) = mtafs_core::cauchy_combine(&[0.5; 5], &[0.2; 5])?;
        let single = mtafs_core::cauchy_combine(&[0.0123], &[1.0])?.1;
        check(
            "cauchy-identities",
            stat == 0.0 && p == 0.5 && (single - 0.0123).abs() < 1e-12,
            format!("all-0.5 -> {p}, single 0.0123 -> {single}"),
        );
    }

    // Baseline cross-checks at R = I.
    {
        let r = sim::cs_matrix(5, 1e-9).unwrap_or(sim::cs_matrix(5, 0.0001)?);
        let es = eigen::eigendecompose(&r)?;
        let ctx = mtafs_core::baselines::BaselineContext::new(&r, &es)?;
        let z = [1.0, -0.5, 0.3, 2.0, 0.0];
        let gap = (ctx.hom_test(&z) - ctx.sum_test(&z)).abs();
        check("baseline-identity", gap < 1e-6, format!("|HOM - SUM| = {gap:.2e} at near-identity R"));
    }

    // Eigensystem reconstruction.
    {
        let r = sim::ar_matrix(20, 0.7)?;
        let es = eigen::eigendecompose(&r)?;
        let lam = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            es.eigenvalues.clone(),
        ));
        let recon = &es.eigenvectors * lam * es.eigenvectors.transpose();
        let err = (&recon - &r.r).abs().max();
        check("eigen-reconstruction", err <= 1e-8, format!("max reconstruction error {err:.2e}"));
    }

    // Level selection on a flat spectrum.
    {
        let r = sim::cs_matrix(10, 1e-4)?;
        let es = eigen::eigendecompose(&r)?;
        let ls = eigen::select_levels(&es)?;
        check(
            "level-selection",
            ls.levels == [2, 4, 6, 8, 10],
            format!("levels {:?} for a flat 10-trait spectrum", ls.levels),
        );
    }

    if failures == 0 {
        println!("selfcheck: all checks passed");
        Ok(())
    } else {
        Err(Error::IntegrationFailure {
            reason: format!("{failures} selfcheck(s) failed"),
            requested: 0.0,
        })
    }
}
