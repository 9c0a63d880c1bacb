mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use decontam::demix::{demix, nonsquare_demix};
use decontam::finite::{demix_hat, partial_label_hat, EstimateBundle, DEFAULT_MIN_SAMPLE_SIZE};
use decontam::harness::{
    align_and_score, discrete_context, empirical_context, from_json, median, synth_instance, sweep, to_json,
    BaseTruth, Dataset, GroundTruth, InstanceSpec, ScoreMode, TrialConfig,
};
use decontam::kappa::{kappa_multi_exact, kappa_two_exact};
use decontam::measure::{
    ClassKind, DiscreteDistribution, EmpiricalDistribution, EstimationContext, MassTable, SignedMixtureEstimate,
};
use decontam::partial::{partial_label, PartialLabelMatrix};
use serde::Serialize;

use report::{
    score_csv, sweep_csv, trace_csv, Component, EstimateReport, KappaReport, RunReport, Trace,
};

#[derive(Parser)]
#[command(name = "decontam", version, about = "Recover base distributions from mutually contaminated samples")]
struct Cli {
    /// Worker threads for the parallel scans (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Proportion of one or more sources contained in a target source.
    Kappa(KappaArgs),
    /// Recover the bases up to permutation.
    Demix(DemixArgs),
    /// Recover the bases in label order from a partial label matrix.
    PartialLabel(PartialLabelArgs),
    /// Generate a synthetic instance.
    Synth(SynthArgs),
    /// Score recovered bases against ground truth, or run a seeded sweep.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Exact,
    Empirical,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Balls,
    Rects,
    Sublevel,
}

impl From<ClassArg> for ClassKind {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Balls => ClassKind::Balls,
            ClassArg::Rects => ClassKind::AxisRectangles,
            ClassArg::Sublevel => ClassKind::RatioSublevel,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Permute,
    Exact,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "exact")]
    engine: Engine,
    /// Set class searched by the empirical engine (default: balls for points, sublevel for atoms).
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    /// Number of candidate sets (default: max(pooled points, 4096)).
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on the VC penalties; 0 gives plug-in estimates.
    #[arg(long, default_value_t = 1.0)]
    penalty_scale: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLE_SIZE)]
    min_n: usize,
    /// Override the VC dimension of the set class.
    #[arg(long)]
    vc_dim: Option<usize>,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Source whose contained proportion is measured.
    #[arg(long, default_value_t = 0)]
    target: usize,
    /// Contained sources (default: every other source).
    #[arg(long, value_delimiter = ',')]
    others: Vec<usize>,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemixArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Number of bases when there are more sources than bases (exact engine).
    #[arg(long)]
    bases: Option<usize>,
    #[command(flatten)]
    est: EstimatorArgs,
    /// CSV file for the resampling trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartialLabelArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON binary matrix, one row per source.
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Directory receiving dataset.json, truth.json, conditions.json (and labels.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Result file from demix or partial-label.
    #[arg(long, required_unless_present = "sweep")]
    estimates: Option<PathBuf>,
    #[arg(long, required_unless_present = "sweep")]
    truth: Option<PathBuf>,
    /// Dataset the estimates were computed from (needed for empirical results).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "permute")]
    mode: ModeArg,
    /// Sample sizes, e.g. `n=1e3,1e4,5e4`.
    #[arg(long, requires = "spec")]
    sweep: Option<String>,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Instance spec used as the sweep template.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    est: EstimatorArgs,
    /// CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn discrete(data: &Dataset) -> anyhow::Result<(Vec<DiscreteDistribution>, Vec<Option<usize>>)> {
    match data {
        Dataset::Discrete(d) => Ok(d.to_distributions()?),
        Dataset::Continuous(_) => bail!("the exact engine needs a dataset of atom masses or counts"),
    }
}

/// Estimation context matching the dataset kind; returns the context and, for
/// point data, the candidate sets it was built on.
fn context(
    data: &Dataset,
    est: &EstimatorArgs,
) -> anyhow::Result<(EstimationContext, Option<decontam::measure::CandidateSetList>)> {
    match data {
        Dataset::Continuous(d) => {
            let class = match est.class.unwrap_or(ClassArg::Balls) {
                ClassArg::Sublevel => bail!("sublevel sets need a dataset over atoms"),
                c => ClassKind::from(c),
            };
            let sources = d.to_empirical()?;
            let (cands, ctx) = empirical_context(&sources, class, est.cap, est.seed, est.penalty_scale, est.vc_dim)?;
            Ok((ctx, Some(cands)))
        }
        Dataset::Discrete(d) => {
            if !matches!(est.class, None | Some(ClassArg::Sublevel)) {
                bail!("datasets over atoms are searched with sublevel sets");
            }
            let (sources, sizes) = d.to_distributions()?;
            Ok((discrete_context(&sources, &sizes, est.penalty_scale, est.vc_dim)?, None))
        }
    }
}

fn assumptions(engine: Engine) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("joint_irreducibility".into(), "assumed".into());
    if engine == Engine::Empirical {
        // not checkable from samples
        m.insert("support_condition".into(), "assumed".into());
    }
    m
}

fn residue_components(target: usize, others: &[usize], nus: &[f64], kappa: f64) -> Vec<Component> {
    let scale = 1.0 / (1.0 - kappa);
    let mut c = vec![Component {
        source: target,
        weight: scale,
    }];
    c.extend(others.iter().zip(nus).map(|(&source, &nu)| Component {
        source,
        weight: -nu * scale,
    }));
    c.sort_by_key(|c| c.source);
    c
}

fn run_kappa(args: &KappaArgs) -> anyhow::Result<()> {
    let data: Dataset = read_json(&args.dataset)?;
    let m = data.num_sources();
    let others: Vec<usize> = if args.others.is_empty() {
        (0..m).filter(|&i| i != args.target).collect()
    } else {
        args.others.clone()
    };
    if args.target >= m || others.iter().any(|&o| o >= m || o == args.target) || others.is_empty() {
        bail!("target and others must be distinct sources below {m}");
    }
    let mut dependency_set: Vec<usize> = others.iter().copied().chain([args.target]).collect();
    dependency_set.sort_unstable();
    dependency_set.dedup();
    let report = match args.est.engine {
        Engine::Exact => {
            let (d, _) = discrete(&data)?;
            let pool: Vec<DiscreteDistribution> = others.iter().map(|&o| d[o].clone()).collect();
            if pool.len() == 1 {
                let r = kappa_two_exact(&d[args.target], &pool[0])?;
                KappaReport {
                    kappa: r.kappa,
                    nus: None,
                    residue_weights: Some(residue_components(args.target, &others, &[r.kappa], r.kappa)),
                    dependency_set,
                }
            } else {
                let r = kappa_multi_exact(&d[args.target], &pool)?;
                KappaReport {
                    kappa: r.kappa,
                    residue_weights: r
                        .residue
                        .as_ref()
                        .map(|_| residue_components(args.target, &others, &r.nus, r.kappa)),
                    nus: Some(r.nus),
                    dependency_set,
                }
            }
        }
        Engine::Empirical => {
            if others.len() != 1 {
                bail!("the empirical engine estimates kappa against a single source");
            }
            let (ctx, _) = context(&data, &args.est)?;
            let f = SignedMixtureEstimate::source(args.target);
            let h = SignedMixtureEstimate::source(others[0]);
            let k = ctx.kappa_hat(&f, &h)?;
            let residue = match ctx.residue_hat(&f, &h) {
                Ok(r) => Some(EstimateReport::from(&r).components),
                Err(decontam::Error::Degenerate(_)) => None,
                Err(e) => return Err(e.into()),
            };
            KappaReport {
                kappa: k.kappa,
                nus: None,
                residue_weights: residue,
                dependency_set,
            }
        }
    };
    emit(&report, args.out.as_deref())
}

fn estimated_report(command: &str, est: &EstimatorArgs, bundle: &EstimateBundle) -> RunReport {
    RunReport {
        command: command.into(),
        engine: "empirical".into(),
        seed: est.seed,
        bases: None,
        estimates: Some(bundle.estimates.iter().map(EstimateReport::from).collect()),
        k: bundle.k,
        matrix: bundle.matrix.clone(),
        pure_rows: (command == "partial-label").then(|| bundle.pure_rows.clone()),
        experimental: false,
        assumptions: assumptions(Engine::Empirical),
        trace: Trace::Estimated(bundle.trace.iter().map(Into::into).collect()),
    }
}

fn finish(report: &RunReport, trace: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    if let Some(p) = trace {
        write_text(p, &trace_csv(&report.trace))?;
    }
    emit(report, out)
}

fn run_demix(args: &DemixArgs) -> anyhow::Result<()> {
    let data: Dataset = read_json(&args.dataset)?;
    let report = match args.est.engine {
        Engine::Exact => {
            let (d, _) = discrete(&data)?;
            let out = match args.bases {
                Some(l) if l < d.len() => nonsquare_demix(&d, l, args.est.seed)?,
                _ => demix(&d, args.est.seed)?,
            };
            RunReport {
                command: "demix".into(),
                engine: "exact".into(),
                seed: args.est.seed,
                bases: Some(out.bases.iter().map(|b| b.mass().to_vec()).collect()),
                estimates: None,
                k: None,
                matrix: None,
                pure_rows: None,
                experimental: false,
                assumptions: assumptions(Engine::Exact),
                trace: Trace::Exact(out.trace.iter().map(Into::into).collect()),
            }
        }
        Engine::Empirical => {
            if args.bases.is_some_and(|l| l != data.num_sources()) {
                bail!("the empirical engine recovers one base per source");
            }
            let (ctx, _) = context(&data, &args.est)?;
            let inputs: Vec<_> = (0..ctx.num_sources()).map(SignedMixtureEstimate::source).collect();
            let bundle = demix_hat(&ctx, &inputs, args.est.seed, args.est.min_n)?;
            estimated_report("demix", &args.est, &bundle)
        }
    };
    finish(&report, args.trace.as_deref(), args.out.as_deref())
}

fn run_partial_label(args: &PartialLabelArgs) -> anyhow::Result<()> {
    let data: Dataset = read_json(&args.dataset)?;
    let labels: PartialLabelMatrix = read_json(&args.labels)?;
    let report = match args.est.engine {
        Engine::Exact => {
            let (d, _) = discrete(&data)?;
            let out = partial_label(&labels, &d, args.est.seed)?;
            RunReport {
                command: "partial-label".into(),
                engine: "exact".into(),
                seed: args.est.seed,
                bases: Some(out.bases.iter().map(|b| b.mass().to_vec()).collect()),
                estimates: None,
                k: Some(out.k),
                matrix: Some(out.matrix),
                pure_rows: None,
                experimental: out.experimental,
                assumptions: assumptions(Engine::Exact),
                trace: Trace::Labels(out.trace.iter().map(Into::into).collect()),
            }
        }
        Engine::Empirical => {
            let (ctx, _) = context(&data, &args.est)?;
            let bundle = partial_label_hat(&ctx, &labels, args.est.seed, args.est.min_n)?;
            estimated_report("partial-label", &args.est, &bundle)
        }
    };
    finish(&report, args.trace.as_deref(), args.out.as_deref())
}

fn run_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let spec: InstanceSpec = read_json(&args.spec)?;
    let inst = synth_instance(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    emit(&inst.dataset, Some(&args.out.join("dataset.json")))?;
    emit(&inst.truth, Some(&args.out.join("truth.json")))?;
    emit(&inst.report, Some(&args.out.join("conditions.json")))?;
    if let Some(s) = &inst.truth.labels {
        emit(s, Some(&args.out.join("labels.json")))?;
    }
    emit(&inst.report, None)
}

/// True base values on the evaluation sets: atom masses, or oracle-sample
/// frequencies on the candidate sets.
fn truth_values(
    truth: &GroundTruth,
    candidates: Option<&decontam::measure::CandidateSetList>,
) -> anyhow::Result<Vec<Vec<f64>>> {
    match (&truth.bases, candidates) {
        (BaseTruth::Discrete { masses }, None) => Ok(masses.clone()),
        (BaseTruth::TruncatedGaussian { oracle, .. }, Some(c)) => {
            let oracle = oracle
                .iter()
                .map(|o| EmpiricalDistribution::new(o.index, o.points.clone()))
                .collect::<decontam::Result<Vec<_>>>()?;
            let table = MassTable::from_empirical(&oracle, c)?;
            Ok((0..oracle.len()).map(|j| table.row(j).to_vec()).collect())
        }
        _ => bail!("ground truth and dataset describe different kinds of bases"),
    }
}

fn run_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let mode = match args.mode {
        ModeArg::Permute => ScoreMode::Permute,
        ModeArg::Exact => ScoreMode::Exact,
    };
    if let Some(list) = &args.sweep {
        return run_sweep(args, list);
    }
    let results: RunReport = read_json(args.estimates.as_deref().expect("required by clap"))?;
    let truth: GroundTruth = read_json(args.truth.as_deref().expect("required by clap"))?;
    let (est_values, truth_vals) = match (&results.bases, &results.estimates) {
        (Some(bases), _) => (bases.clone(), truth_values(&truth, None)?),
        (None, Some(estimates)) => {
            let path = args
                .dataset
                .as_deref()
                .ok_or_else(|| anyhow!("empirical results need --dataset to evaluate the estimates"))?;
            let data: Dataset = read_json(path)?;
            // evaluation only reads masses, so penalties play no part
            let est_args = EstimatorArgs {
                penalty_scale: 0.0,
                ..args.est.clone()
            };
            let (ctx, candidates) = context(&data, &est_args)?;
            let values = estimates
                .iter()
                .map(|e| ctx.values(&e.to_estimate()?))
                .collect::<decontam::Result<Vec<_>>>()?;
            (values, truth_values(&truth, candidates.as_ref())?)
        }
        (None, None) => bail!("result file has neither bases nor estimates"),
    };
    let score = align_and_score(&est_values, &truth_vals, mode)?;
    if let Some(p) = &args.out {
        write_text(p, &score_csv(&score))?;
    }
    emit(&score, None)
}

fn parse_sizes(list: &str) -> anyhow::Result<Vec<usize>> {
    let body = list.strip_prefix("n=").unwrap_or(list);
    body.split(',')
        .map(|t| {
            let x: f64 = t.trim().parse().with_context(|| format!("bad sample size {t:?}"))?;
            if !(x >= 1.0 && x.fract() == 0.0 && x <= 1e12) {
                bail!("sample size {t:?} is not a positive integer");
            }
            Ok(x as usize)
        })
        .collect()
}

#[derive(Serialize)]
struct SweepSummary {
    n: usize,
    median_max_distance: f64,
    failures: usize,
}

fn run_sweep(args: &EvaluateArgs, list: &str) -> anyhow::Result<()> {
    let sizes = parse_sizes(list)?;
    let template: InstanceSpec = read_json(args.spec.as_deref().expect("required by clap"))?;
    let config = TrialConfig {
        class: args.est.class.unwrap_or(ClassArg::Balls).into(),
        cap: args.est.cap,
        penalty_scale: args.est.penalty_scale,
        min_n: args.est.min_n,
        vc_dimension: args.est.vc_dim,
    };
    let results = sweep(&template, &sizes, args.seeds, &config);
    if let Some(p) = &args.out {
        write_text(p, &sweep_csv(&results, template.l))?;
    }
    let summary: Vec<SweepSummary> = sizes
        .iter()
        .map(|&n| {
            let runs: Vec<_> = results.iter().filter(|r| r.n == Some(n)).collect();
            let d: Vec<f64> = runs.iter().map(|r| r.max_distance()).collect();
            SweepSummary {
                n,
                median_max_distance: median(&d),
                failures: runs.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect();
    emit(&summary, None)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Kappa(a) => run_kappa(a),
        Command::Demix(a) => run_demix(a),
        Command::PartialLabel(a) => run_partial_label(a),
        Command::Synth(a) => run_synth(a),
        Command::Evaluate(a) => run_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        builder = builder.num_threads(w);
    }
    let outcome = builder
        .build()
        .map_err(anyhow::Error::from)
        .and_then(|pool| pool.install(|| run(&cli)));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
