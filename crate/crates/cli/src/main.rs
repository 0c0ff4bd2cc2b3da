//! Command-line pipeline: parse guidelines, synthesize and validate plans,
//! execute cases, generate benchmark suites, and evaluate them.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ifct_core::basefn::EmbeddingProvider;
use ifct_core::bench::{
    self,
    files::{load_case, Manifest},
    BenchProviders, Mode, PhantomLabelProvider, SuiteConfig,
};
use ifct_core::executor::{execute_plan, ExecProviders, PatientRecord};
use ifct_core::guideline::{
    enumerate_paths, parse_guideline, parse_guideline_unchecked, path_text, serialize_guideline,
    validate_tree, GuidelineTree,
};
use ifct_core::planner::{plan_loop, validate_plan, FunctionRegistry, Plan, StepOp};
use ifct_core::volume::read_volume;
use ifct_remote::RemoteEmbedding;

const PROVIDER_URL_ENV: &str = "IFCT_PROVIDER_URL";

#[derive(Parser)]
#[command(
    name = "ifct",
    about = "Compile guideline decision trees into validated inspection plans, run them on CT volumes, and evaluate the recommendations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Args)]
struct ProviderArg {
    /// Embedding provider: local:<seed> or remote:<url>. Defaults to the
    /// IFCT_PROVIDER_URL environment variable, else local:0.
    #[arg(long)]
    provider: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a guideline document.
    ParseGuideline {
        /// Guideline document path.
        document: PathBuf,
        /// Write the canonical document form here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every invariant violation in a guideline document.
    ValidateTree {
        document: PathBuf,
    },
    /// Print one rendered root-to-leaf path per line.
    EnumeratePaths {
        document: PathBuf,
    },
    /// Synthesize a validated plan from a guideline tree.
    Plan {
        #[arg(long)]
        tree: PathBuf,
        /// Function registry manifest; defaults to the built-in registry.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Refinement iteration budget.
        #[arg(long, default_value_t = 3)]
        max_iter: usize,
        /// Diameter estimation method override.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a plan against the STOP criterion.
    ValidatePlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Execute a plan against one volume and patient record.
    RunCase {
        #[arg(long)]
        tree: PathBuf,
        /// Plan file; synthesized from the tree when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        volume: PathBuf,
        /// Patient record (JSON).
        #[arg(long)]
        patient: PathBuf,
        #[command(flatten)]
        provider: ProviderArg,
        /// Write the case result here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded synthetic benchmark suite.
    GenBench {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
        /// Cubic grid size in voxels.
        #[arg(long, default_value_t = 56)]
        grid: u32,
    },
    /// Run a benchmark manifest and print the metrics.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// full, ablated, baseline, or random; overrides the manifest.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        provider: ProviderArg,
        /// Seed for random-mode predictions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the evaluation result (JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Path-similarity baseline over a benchmark manifest.
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        provider: ProviderArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn load_tree(path: &Path) -> Result<GuidelineTree, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_guideline(&text).map_err(|e| e.to_string())
}

fn load_registry(path: &Option<PathBuf>) -> Result<FunctionRegistry, String> {
    match path {
        None => Ok(FunctionRegistry::default()),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            FunctionRegistry::from_manifest(&text).map_err(|e| e.to_string())
        }
    }
}

enum Provider {
    Local { seed: u64 },
    Remote(RemoteEmbedding),
}

impl Provider {
    /// Resolves the provider flag, then the environment, then local:0.
    fn resolve(arg: &ProviderArg) -> Result<Self, String> {
        let spec = match &arg.provider {
            Some(spec) => spec.clone(),
            None => match std::env::var(PROVIDER_URL_ENV) {
                Ok(url) if !url.is_empty() => format!("remote:{url}"),
                _ => "local:0".to_string(),
            },
        };
        if let Some(seed) = spec.strip_prefix("local:") {
            let seed: u64 = seed
                .parse()
                .map_err(|_| format!("invalid local provider seed {seed:?}"))?;
            Ok(Provider::Local { seed })
        } else if let Some(url) = spec.strip_prefix("remote:") {
            Ok(Provider::Remote(
                RemoteEmbedding::connect(url).map_err(|e| e.to_string())?,
            ))
        } else {
            Err(format!(
                "invalid provider {spec:?}; expected local:<seed> or remote:<url>"
            ))
        }
    }

    /// The embedding provider for a given tree. The local variant is
    /// calibrated to the synthetic phantom's HU bands and behaves exactly
    /// like the plain hash provider on any other text.
    fn for_tree<'a>(
        &'a self,
        tree: &GuidelineTree,
    ) -> Result<Box<dyn EmbeddingProvider + 'a>, String> {
        match self {
            Provider::Local { seed } => Ok(Box::new(
                PhantomLabelProvider::for_tree(tree, *seed).map_err(|e| e.to_string())?,
            )),
            Provider::Remote(remote) => Ok(Box::new(ProviderRef(remote))),
        }
    }
}

/// Borrowed provider adapter so both arms box uniformly.
struct ProviderRef<'a>(&'a RemoteEmbedding);

impl EmbeddingProvider for ProviderRef<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, ifct_core::basefn::ProviderError> {
        self.0.embed(text)
    }
    fn embed_batch(
        &self,
        texts: &[&str],
    ) -> Result<Vec<Vec<f64>>, ifct_core::basefn::ProviderError> {
        self.0.embed_batch(texts)
    }
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn override_method(plan: &mut Plan, method: &str) -> Result<(), String> {
    method.parse::<ifct_core::basefn::DiameterMethod>()?;
    for step in &mut plan.steps {
        if let StepOp::MeasureEach { method: m, .. } = &mut step.op {
            if matches!(m.as_str(), "feret" | "equiv_sphere" | "bbox") {
                *m = method.to_string();
            }
        }
    }
    Ok(())
}

fn print_eval(mode: Mode, outcome: &bench::RunOutcome) {
    let eval = &outcome.eval;
    println!("mode {mode}");
    println!("cases {}", eval.n_cases);
    println!("accuracy {:.3}", eval.accuracy);
    println!("weighted_f1 {:.3}", eval.weighted_f1);
    println!("explanation_accuracy {:.3}", eval.explanation_accuracy);
    for class in &eval.per_class {
        println!(
            "class {} precision {:.3} recall {:.3} f1 {:.3} support {}",
            class.class, class.precision, class.recall, class.f1, class.support
        );
    }
    for (case_id, error) in &outcome.case_errors {
        println!("case-error {case_id}: {error}");
    }
    println!("{}", eval.csv_line(&mode.to_string()));
}

fn run_manifest(
    manifest_path: &Path,
    mode: Mode,
    provider_arg: &ProviderArg,
    random_seed: u64,
    out: &Option<PathBuf>,
) -> Result<(), String> {
    let manifest = Manifest::load(manifest_path).map_err(|e| e.to_string())?;
    let base = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let tree = load_tree(&base.join(&manifest.tree))?;
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for case_path in &manifest.cases {
        cases.push(load_case(&base.join(case_path)).map_err(|e| e.to_string())?);
    }
    let provider = Provider::resolve(provider_arg)?;
    let embedding = provider.for_tree(&tree)?;
    let mut providers = BenchProviders::new(embedding.as_ref());
    providers.random_seed = random_seed;
    let outcome = bench::run_benchmark(&tree, &cases, mode, &providers).map_err(|e| e.to_string())?;
    print_eval(mode, &outcome);
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&outcome.eval).expect("eval serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), String> {
    match command {
        Command::ParseGuideline { document, out } => {
            let tree = load_tree(&document)?;
            let canonical = serialize_guideline(&tree);
            if out.is_some() {
                write_or_print(&out, &canonical)?;
            }
            println!(
                "{} v{}: {} nodes, {} attributes, {} paths",
                tree.organ,
                tree.version(),
                tree.nodes.len(),
                tree.attributes.len(),
                enumerate_paths(&tree).len()
            );
            Ok(())
        }
        Command::ValidateTree { document } => {
            let text = std::fs::read_to_string(&document)
                .map_err(|e| format!("{}: {e}", document.display()))?;
            let tree = parse_guideline_unchecked(&text);
            match tree {
                Ok(tree) => {
                    let issues = validate_tree(&tree);
                    if issues.is_empty() {
                        println!("valid: no issues");
                        Ok(())
                    } else {
                        for issue in &issues {
                            println!("{issue}");
                        }
                        Err(format!("{} issue(s)", issues.len()))
                    }
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::EnumeratePaths { document } => {
            let tree = load_tree(&document)?;
            for path in enumerate_paths(&tree) {
                println!("{}", path_text(&tree, &path).map_err(|e| e.to_string())?);
            }
            Ok(())
        }
        Command::Plan {
            tree,
            registry,
            max_iter,
            method,
            out,
        } => {
            let tree = load_tree(&tree)?;
            let registry = load_registry(&registry)?;
            let mut plan = plan_loop(&tree, &registry, max_iter).map_err(|e| e.to_string())?;
            if let Some(method) = method {
                override_method(&mut plan, &method)?;
                let report = validate_plan(&plan, &tree, &registry);
                if !report.ok() {
                    return Err(format!("method override invalidated the plan: {report:?}"));
                }
            }
            write_or_print(&out, &plan.to_document())?;
            if out.is_some() {
                println!("plan {} with {} steps", plan.plan_id, plan.steps.len());
            }
            Ok(())
        }
        Command::ValidatePlan {
            plan,
            tree,
            registry,
        } => {
            let text =
                std::fs::read_to_string(&plan).map_err(|e| format!("{}: {e}", plan.display()))?;
            let plan = Plan::from_document(&text).map_err(|e| e.to_string())?;
            let tree = load_tree(&tree)?;
            let registry = load_registry(&registry)?;
            let report = validate_plan(&plan, &tree, &registry);
            println!(
                "syntactic_ok {} semantic_ok {}",
                report.syntactic_ok, report.semantic_ok
            );
            for issue in &report.issues {
                println!("{issue}");
            }
            if report.ok() {
                Ok(())
            } else {
                Err(format!("{} issue(s)", report.issues.len()))
            }
        }
        Command::RunCase {
            tree,
            plan,
            volume,
            patient,
            provider,
            out,
        } => {
            let tree = load_tree(&tree)?;
            let registry = FunctionRegistry::default();
            let plan = match plan {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| format!("{}: {e}", path.display()))?;
                    Plan::from_document(&text).map_err(|e| e.to_string())?
                }
                None => plan_loop(&tree, &registry, 3).map_err(|e| e.to_string())?,
            };
            let volume = read_volume(&volume).map_err(|e| e.to_string())?;
            let patient_text = std::fs::read_to_string(&patient)
                .map_err(|e| format!("{}: {e}", patient.display()))?;
            let patient: PatientRecord =
                serde_json::from_str(&patient_text).map_err(|e| format!("patient record: {e}"))?;
            let provider = Provider::resolve(&provider)?;
            let embedding = provider.for_tree(&tree)?;
            let result = execute_plan(
                &plan,
                &tree,
                &volume,
                &patient,
                &ExecProviders {
                    embedding: embedding.as_ref(),
                },
            )
            .map_err(|e| e.to_string())?;
            println!("recommendation: {}", result.aggregated.recommendation);
            println!("trajectory: {}", result.trajectory);
            if out.is_some() {
                write_or_print(&out, &result.to_document())?;
            }
            Ok(())
        }
        Command::GenBench {
            tree,
            out,
            seed,
            cases,
            grid,
        } => {
            let tree_model = load_tree(&tree)?;
            let config = SuiteConfig {
                n_cases: cases,
                seed,
                grid,
                max_lesions: 2,
            };
            let suite = bench::generate_suite(&tree_model, &config).map_err(|e| e.to_string())?;
            let case_dir = out.join("cases");
            let mut case_paths = Vec::with_capacity(suite.len());
            for (n, case) in suite.iter().enumerate() {
                let stem = format!("{}-{n:04}", tree_model.organ);
                bench::files::save_case(case, &case_dir, &stem).map_err(|e| e.to_string())?;
                case_paths.push(format!("cases/{stem}.json"));
            }
            std::fs::write(out.join("tree.json"), serialize_guideline(&tree_model))
                .map_err(|e| e.to_string())?;
            let manifest = Manifest {
                tree: "tree.json".to_string(),
                seed,
                mode: None,
                cases: case_paths,
            };
            std::fs::write(out.join("manifest.json"), manifest.to_document())
                .map_err(|e| e.to_string())?;
            println!(
                "wrote {} cases to {} (manifest.json)",
                suite.len(),
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            manifest,
            mode,
            provider,
            seed,
            out,
        } => {
            let mode_str = match &mode {
                Some(mode) => mode.clone(),
                None => Manifest::load(&manifest)
                    .map_err(|e| e.to_string())?
                    .mode
                    .unwrap_or_else(|| "full".to_string()),
            };
            let mode: Mode = mode_str.parse()?;
            run_manifest(&manifest, mode, &provider, seed, &out)
        }
        Command::Baseline {
            manifest,
            provider,
            out,
        } => run_manifest(&manifest, Mode::Baseline, &provider, 0, &out),
    }
}
