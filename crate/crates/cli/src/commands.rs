use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use efold::report::write_simulation_outputs;
use efold::{
    compute_stats, load_external_scores, load_interactions, make_partition_plan, prune_kcore,
    ranking_report, run_efold, sample_permutations, score_fold, simulate_all, to_implicit,
    Algorithm, CacheRow, Dataset, EfoldRecord, Error, ExternalScoreTable, InputFormat,
    PartitionPlan, ScoreCache,
};

use crate::config::Settings;
use crate::CliError;

const DEFAULT_SWEEP: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Args)]
pub struct FormatArgs {
    /// Input preset: canonical (= tsv, ml-100k), ml-1m or csv
    #[arg(long, default_value = "canonical")]
    format: String,
    /// Custom delimiter (tab, comma, :: or a literal); overrides --format
    #[arg(long)]
    delimiter: Option<String>,
    /// Custom column list such as user,item,rating,timestamp (`_` skips)
    #[arg(long)]
    columns: Option<String>,
    /// Skip the first line of a custom format
    #[arg(long)]
    skip_header: bool,
}

impl FormatArgs {
    fn resolve(&self) -> Result<InputFormat, CliError> {
        if self.delimiter.is_none() && self.columns.is_none() {
            return Ok(self.format.parse()?);
        }
        Ok(InputFormat::parse(
            self.delimiter.as_deref().unwrap_or("tab"),
            self.columns
                .as_deref()
                .unwrap_or("user,item,rating,timestamp"),
            self.skip_header,
        )?)
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    /// Canonical tab-separated output file
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
    /// Minimum interactions per user and per item
    #[arg(long, default_value_t = 5)]
    core: usize,
    /// Statistics JSON [default: OUTPUT with extension .stats.json]
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Preprocessed dataset, as PATH or NAME=PATH
    #[arg(long)]
    dataset: String,
    /// Plan file [default: OUT_DIR/NAME.plan.kK.seedSEED.csv]
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Preprocessed dataset as NAME=PATH (repeatable)
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// pop, itemknn or external:NAME=PATH (repeatable). PATH may contain
    /// `{fold}` to read one file per fold.
    #[arg(long = "algorithm")]
    algorithms: Vec<String>,
    /// Score cache CSV [default: OUT_DIR/scores.csv]
    #[arg(long)]
    cache: Option<PathBuf>,
    /// ItemKNN neighbourhood size [default: 100]
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EfoldArgs {
    /// Dataset as NAME=PATH; only NAME is needed with --from-cache
    #[arg(long)]
    dataset: String,
    /// pop, itemknn or external:NAME=PATH; only the name is used with --from-cache
    #[arg(long)]
    algorithm: String,
    /// Partition plan [default: OUT_DIR/NAME.plan.kK.seedSEED.csv, created if missing]
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Replay fold scores from this score cache instead of training
    #[arg(long)]
    from_cache: Option<PathBuf>,
    /// Run once per alpha and write a sweep table instead of a single run
    #[arg(long)]
    sweep: bool,
    /// Alphas for --sweep
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
    alphas: Vec<f64>,
    /// ItemKNN neighbourhood size [default: 100]
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Score cache CSV [default: OUT_DIR/scores.csv]
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

/// Splits `NAME=PATH`; a bare path is named after its file stem.
fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.to_owned(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_owned());
            (name, path)
        }
    }
}

fn load_canonical(path: &Path) -> efold::Result<Dataset> {
    load_interactions(path, &InputFormat::canonical())
}

fn create_file(path: &Path) -> efold::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(&efold::report::to_json_bytes(value)?)
        .map_err(|e| io_error(Path::new("<stdout>"), e))?;
    Ok(())
}

fn default_plan_path(s: &Settings, name: &str) -> PathBuf {
    s.out_dir
        .join(format!("{name}.plan.k{}.seed{}.csv", s.k, s.seed))
}

/// Loads the plan at `path` if present, otherwise creates and saves it.
fn plan_for(s: &Settings, ds: &Dataset, path: &Path) -> efold::Result<PartitionPlan> {
    if path.exists() {
        log::info!("using partition plan {}", path.display());
        return PartitionPlan::load_csv(path, s.k, s.seed);
    }
    let plan = make_partition_plan(ds, s.k, s.seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    plan.save_csv(path)?;
    Ok(plan)
}

#[derive(Debug, Clone)]
enum AlgoSpec {
    Pop,
    ItemKnn,
    External { name: String, path: String },
}

impl AlgoSpec {
    fn parse(spec: &str) -> Result<Self, CliError> {
        match spec.to_ascii_lowercase().as_str() {
            "pop" => return Ok(AlgoSpec::Pop),
            "itemknn" => return Ok(AlgoSpec::ItemKnn),
            _ => {}
        }
        spec.strip_prefix("external:")
            .and_then(|rest| rest.split_once('='))
            .filter(|(name, path)| !name.is_empty() && !path.is_empty())
            .map(|(name, path)| AlgoSpec::External {
                name: name.to_owned(),
                path: path.to_owned(),
            })
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown algorithm '{spec}' (expected pop, itemknn or external:NAME=PATH)"
                ))
            })
    }

    fn name(&self) -> &str {
        match self {
            AlgoSpec::Pop => "Pop",
            AlgoSpec::ItemKnn => "ItemKNN",
            AlgoSpec::External { name, .. } => name,
        }
    }

    fn build(
        &self,
        s: &Settings,
        ds: &Dataset,
        plan: &PartitionPlan,
        neighbors: usize,
    ) -> efold::Result<Algorithm> {
        Ok(match self {
            AlgoSpec::Pop => Algorithm::Pop,
            AlgoSpec::ItemKnn => Algorithm::ItemKnn { neighbors },
            AlgoSpec::External { name, path } => {
                let table = load_external(name, path, s.k, s.n)?;
                table.check_leakage(ds, plan)?;
                Algorithm::External(table)
            }
        })
    }
}

/// Reads external ranked lists from one file, or from one file per fold when
/// `template` contains `{fold}`.
fn load_external(
    name: &str,
    template: &str,
    k: usize,
    min_rows: usize,
) -> efold::Result<ExternalScoreTable> {
    if !template.contains("{fold}") {
        return load_external_scores(Path::new(template), name, k, min_rows);
    }
    let mut lists = BTreeMap::new();
    for fold in 0..k {
        let path = PathBuf::from(template.replace("{fold}", &fold.to_string()));
        if !path.exists() {
            return Err(Error::Model(format!(
                "external scores for {name}: no file for fold {fold} ({})",
                path.display()
            )));
        }
        let table = load_external_scores(&path, name, k, min_rows)?;
        for ((f, user), list) in table.lists {
            if f != fold {
                return Err(Error::Model(format!(
                    "{}: row for fold {f} in the file for fold {fold}",
                    path.display()
                )));
            }
            lists.insert((f, user), list);
        }
    }
    Ok(ExternalScoreTable {
        algorithm: name.to_owned(),
        lists,
    })
}

pub fn preprocess(_s: &Settings, args: PreprocessArgs) -> Result<(), CliError> {
    let raw = load_interactions(&args.input, &args.format.resolve()?)?;
    let ds = prune_kcore(&to_implicit(&raw), args.core)?;
    let mut out = create_file(&args.output)?;
    ds.write_canonical(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| io_error(&args.output, e))?;
    let stats = compute_stats(&ds)?;
    let stats_path = args
        .stats
        .unwrap_or_else(|| args.output.with_extension("stats.json"));
    efold::report::write_json(&stats_path, &stats)?;
    print_json(&stats)
}

pub fn split(s: &Settings, args: SplitArgs) -> Result<(), CliError> {
    let (name, path) = named_path(&args.dataset);
    let ds = load_canonical(&path)?;
    let plan = make_partition_plan(&ds, s.k, s.seed)?;
    let output = args.output.unwrap_or_else(|| default_plan_path(s, &name));
    plan.write_csv(create_file(&output)?)?;
    let sizes = plan.partition_sizes();
    println!(
        "{}: k={} seed={} partition sizes {:?}",
        output.display(),
        s.k,
        s.seed,
        sizes
    );
    Ok(())
}

pub fn stats(_s: &Settings, args: StatsArgs) -> Result<(), CliError> {
    let ds = load_interactions(&args.dataset, &args.format.resolve()?)?;
    print_json(&compute_stats(&ds)?)
}

pub fn evaluate(s: &Settings, args: EvaluateArgs) -> Result<(), CliError> {
    let datasets = if args.datasets.is_empty() {
        s.file.datasets.clone()
    } else {
        args.datasets
    };
    let algorithms = if args.algorithms.is_empty() {
        s.file.algorithms.clone()
    } else {
        args.algorithms
    };
    if datasets.is_empty() {
        return Err(CliError::Usage(
            "evaluate needs at least one --dataset".into(),
        ));
    }
    if algorithms.is_empty() {
        return Err(CliError::Usage(
            "evaluate needs at least one --algorithm".into(),
        ));
    }
    let specs = algorithms
        .iter()
        .map(|a| AlgoSpec::parse(a))
        .collect::<Result<Vec<_>, _>>()?;
    let neighbors = s.neighbors(args.neighbors);
    let cache_path = args
        .cache
        .or_else(|| s.file.cache.clone())
        .unwrap_or_else(|| s.out_dir.join("scores.csv"));
    let mut cache = ScoreCache::open(&cache_path)?;
    let metric = s.metric();

    let mut failures = 0;
    for spec in &datasets {
        let (name, path) = named_path(spec);
        let loaded = load_canonical(&path).and_then(|ds| {
            let plan = plan_for(s, &ds, &default_plan_path(s, &name))?;
            Ok((ds, plan))
        });
        let (ds, plan) = match loaded {
            Ok(v) => v,
            Err(e) => {
                eprintln!("{}: {name}: {e}", e.code());
                failures += specs.len();
                continue;
            }
        };
        for algo in &specs {
            let pending: Vec<usize> = (0..s.k)
                .filter(|&f| !cache.contains(&name, algo.name(), f, s.seed, s.k))
                .collect();
            let outcome = if pending.is_empty() {
                Ok(())
            } else {
                algo.build(s, &ds, &plan, neighbors).and_then(|model| {
                    for &fold in &pending {
                        let score = score_fold(&model, &ds, &plan, fold, s.n)?;
                        log::info!(
                            "{name}/{}: fold {fold} {metric} = {}",
                            algo.name(),
                            score.value
                        );
                        cache.append(CacheRow {
                            dataset: name.clone(),
                            algorithm: algo.name().to_owned(),
                            fold_index: fold,
                            metric: metric.clone(),
                            value: score.value,
                            seed: s.seed,
                            k: s.k,
                        })?;
                    }
                    Ok(())
                })
            };
            match outcome {
                Ok(()) => println!(
                    "{name}/{}: {} new rows, {} cached",
                    algo.name(),
                    pending.len(),
                    s.k - pending.len()
                ),
                Err(e) => {
                    eprintln!("{}: {name}/{}: {e}", e.code(), algo.name());
                    failures += 1;
                }
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Reported);
    }
    Ok(())
}

/// Fold scores from a cache, for replaying a run without training.
fn cached_scores(
    s: &Settings,
    cache: &Path,
    dataset: &str,
    algorithm: &str,
) -> efold::Result<Vec<Option<f64>>> {
    let cache = ScoreCache::open(cache)?;
    let metric = s.metric();
    let mut scores = vec![None; s.k];
    for row in cache.rows() {
        if row.dataset == dataset
            && row.algorithm == algorithm
            && row.seed == s.seed
            && row.k == s.k
            && row.metric == metric
        {
            scores[row.fold_index] = Some(row.value);
        }
    }
    Ok(scores)
}

pub fn efold(s: &Settings, args: EfoldArgs) -> Result<(), CliError> {
    let config = s.efold_config();
    config.validate()?;
    let (name, path) = named_path(&args.dataset);
    let algo = AlgoSpec::parse(&args.algorithm)?;
    let order: Vec<usize> = (0..s.k).collect();

    let mut memo: Vec<Option<f64>> = vec![None; s.k];
    let mut live: Option<(Dataset, PartitionPlan)> = None;
    if let Some(cache) = &args.from_cache {
        memo = cached_scores(s, cache, &name, algo.name())?;
    } else {
        let ds = load_canonical(&path)?;
        let plan_path = args
            .plan
            .clone()
            .unwrap_or_else(|| default_plan_path(s, &name));
        let plan = plan_for(s, &ds, &plan_path)?;
        live = Some((ds, plan));
    }
    let model = match &live {
        Some((ds, plan)) => Some(algo.build(s, ds, plan, s.neighbors(args.neighbors))?),
        None => None,
    };
    let metric = s.metric();
    let mut scorer = |fold: usize| -> efold::Result<f64> {
        if let Some(v) = memo[fold] {
            return Ok(v);
        }
        let value = match (&live, &model) {
            (Some((ds, plan)), Some(model)) => score_fold(model, ds, plan, fold, s.n)?.value,
            _ => {
                return Err(Error::Cache(format!(
                    "no cached {metric} score for {name}/{} fold {fold} (seed {}, k {})",
                    algo.name(),
                    s.seed,
                    s.k
                )))
            }
        };
        log::info!("{name}/{}: fold {fold} {metric} = {value}", algo.name());
        memo[fold] = Some(value);
        Ok(value)
    };

    std::fs::create_dir_all(&s.out_dir).map_err(|e| io_error(&s.out_dir, e))?;
    let stem = format!("efold_{name}_{}", algo.name());
    if args.sweep {
        let path = s.out_dir.join(format!("{stem}_sweep.csv"));
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        w.write_record(["alpha", "stop_fold", "efold_mean", "energy_fraction"])
            .map_err(Error::from)?;
        for &alpha in &args.alphas {
            let result = run_efold(&mut scorer, &order, &config.with_alpha(alpha))?;
            let record = EfoldRecord::new(&result, &config, &name, algo.name());
            w.write_record([
                alpha.to_string(),
                result.stop_fold.to_string(),
                result.final_mean.to_string(),
                record.energy_fraction.to_string(),
            ])
            .map_err(Error::from)?;
            println!(
                "alpha {alpha}: stopped at fold {} of {}, mean {}",
                result.stop_fold, s.k, result.final_mean
            );
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        return Ok(());
    }

    let result = run_efold(&mut scorer, &order, &config)?;
    let record = EfoldRecord::new(&result, &config, &name, algo.name());
    efold::report::write_json(&s.out_dir.join(format!("{stem}.json")), &record)?;
    let trace = s.out_dir.join(format!("{stem}_trace.csv"));
    record.write_trace_csv(create_file(&trace)?)?;
    println!(
        "{name}/{}: stopped at fold {} of {}, mean {} ({} folds saved)",
        algo.name(),
        result.stop_fold,
        s.k,
        result.final_mean,
        s.k - result.stop_fold
    );
    Ok(())
}

pub fn simulate(s: &Settings, args: SimulateArgs) -> Result<(), CliError> {
    let config = s.efold_config();
    config.validate()?;
    let cache_path = args
        .cache
        .or_else(|| s.file.cache.clone())
        .unwrap_or_else(|| s.out_dir.join("scores.csv"));
    let cache = ScoreCache::open(&cache_path)?;
    if cache.is_empty() {
        return Err(Error::Cache(format!("score cache {} is empty", cache_path.display())).into());
    }
    let seqs = cache.sequences(s.k, s.seed, &s.metric())?;
    let perms = sample_permutations(s.k, s.perms, s.seed)?;
    let report = simulate_all(&seqs, &perms, &config)?;
    let ranking = ranking_report(&report)?;
    write_simulation_outputs(&s.out_dir, &report, &ranking)?;
    for cell in &report.cells {
        println!(
            "{}/{}: mean stop {:.2} of {}, mean difference {:.3}%, energy {:.1}%",
            cell.dataset,
            cell.algorithm,
            cell.mean_stop_fold,
            s.k,
            cell.mean_percent_diff,
            cell.mean_energy_fraction * 100.0
        );
    }
    println!(
        "overall: mean stop {:.2}, mean difference {:.3}%, energy {:.1}%",
        report.overall.mean_stop_fold,
        report.overall.mean_percent_diff,
        report.overall.mean_energy_fraction * 100.0
    );
    Ok(())
}
