use clap::{Parser, Subcommand, ValueEnum};
use cryptoscan::analysis::{analyze, AnalysisOptions, Fidelity};
use cryptoscan::benchkit::{self, score, Category};
use cryptoscan::callgraph::CallGraph;
use cryptoscan::cir::{parse_program_named, validate_program, Program, ProgramInfo};
use cryptoscan::detectors::rules::{load_rules, RuleSet};
use cryptoscan::report::{emit, Format};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cryptoscan", version, about = "Cryptographic API misuse analyzer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    Paper,
    Fixed,
}

impl FidelityArg {
    fn to_fidelity(self) -> Fidelity {
        match self {
            FidelityArg::Paper => Fidelity::Paper,
            FidelityArg::Fixed => Fidelity::Fixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFormat {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analyze one or more CIR files and report findings.
    Analyze {
        /// Input files; multiple files are merged into one program.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Rules file overriding the built-in catalog.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        /// Disable callsite refinements (ablation baseline).
        #[arg(long)]
        no_refinements: bool,
        #[arg(long, default_value_t = 20)]
        max_layers: usize,
        /// Treat escaped fields of uncalled methods as initialized by any
        /// constructor/static initializer (library perspective).
        #[arg(long)]
        library_mode: bool,
        #[arg(long, value_enum, default_value_t = FidelityArg::Fixed)]
        fidelity: FidelityArg,
        /// Print the call graph in DOT format instead of analyzing.
        #[arg(long)]
        dump_callgraph: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Access-path depth bound K.
        #[arg(long, default_value_t = 2)]
        max_access_path: usize,
    },
    /// Run the built-in benchmark corpus and print per-category metrics.
    Bench {
        #[arg(long)]
        category: Option<String>,
        #[arg(long, value_enum, default_value_t = FidelityArg::Fixed)]
        fidelity: FidelityArg,
        #[arg(long)]
        no_refinements: bool,
        #[arg(long, value_enum, default_value_t = BenchFormat::Table)]
        format: BenchFormat,
    },
}

fn load_merged(files: &[PathBuf]) -> Result<Program, String> {
    let mut merged = Program::default();
    for path in files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("input");
        let p = parse_program_named(&text, name)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        for e in p.externs {
            if !merged.externs.contains(&e) {
                merged.externs.push(e);
            }
        }
        merged.classes.extend(p.classes);
        merged.functions.extend(p.functions);
    }
    let diags = validate_program(&merged);
    if !diags.is_empty() {
        let mut msg = String::new();
        for d in &diags {
            msg.push_str(&format!("{}: {}\n", d.location, d.message));
        }
        return Err(msg.trim_end().to_string());
    }
    Ok(merged)
}

fn run_analyze(
    files: &[PathBuf],
    rules_path: Option<&PathBuf>,
    format: OutFormat,
    opts: &AnalysisOptions,
    dump_callgraph: bool,
) -> Result<u8, String> {
    let program = load_merged(files)?;
    let rules = match rules_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            load_rules(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RuleSet::default(),
    };
    if dump_callgraph {
        let info = ProgramInfo::build(&program);
        let cg = CallGraph::build(&program, &info);
        print!("{}", cg.to_dot());
        return Ok(0);
    }
    let report = analyze(&program, &rules, opts);
    let fmt = match format {
        OutFormat::Text => Format::Text,
        OutFormat::Json => Format::Json,
    };
    print!("{}", emit(&report, fmt));
    if report.budget_exhausted {
        return Ok(3);
    }
    Ok(if report.findings.is_empty() { 0 } else { 1 })
}

fn run_bench(
    category: Option<&str>,
    opts: &AnalysisOptions,
    format: BenchFormat,
) -> Result<u8, String> {
    let cat = match category {
        Some(id) => Some(
            Category::from_id(id)
                .ok_or_else(|| format!("unknown category '{id}'"))?,
        ),
        None => None,
    };
    let runs = benchkit::run_corpus(opts, cat);
    let (rows, total) = score::score(&runs);
    match format {
        BenchFormat::Table => print!("{}", score::render_table(&rows, &total)),
        BenchFormat::Json => print!("{}", score::render_json(&rows, &total)),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Analyze {
            files,
            rules,
            format,
            no_refinements,
            max_layers,
            library_mode,
            fidelity,
            dump_callgraph,
            workers,
            max_access_path,
        } => {
            let opts = AnalysisOptions {
                refinements: !no_refinements,
                fidelity: fidelity.to_fidelity(),
                library_mode: *library_mode,
                max_layers: *max_layers,
                workers: *workers,
                max_access_path: *max_access_path,
                ..AnalysisOptions::default()
            };
            run_analyze(files, rules.as_ref(), *format, &opts, *dump_callgraph)
        }
        Cmd::Bench { category, fidelity, no_refinements, format } => {
            let opts = AnalysisOptions {
                refinements: !no_refinements,
                fidelity: fidelity.to_fidelity(),
                ..AnalysisOptions::default()
            };
            run_bench(category.as_deref(), &opts, *format)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
