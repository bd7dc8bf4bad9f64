use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssp_lab::format::{parse_ssp, write_ssp};
use ssp_lab::harness::{self, ExperimentConfig, HarnessError, Summary, TrialRecord, Verdict};
use ssp_lab::instances::{generate, InstanceSpec};
use ssp_lab::keyvalue::KvDoc;
use ssp_lab::oracle;

#[derive(Parser)]
#[command(name = "ssp-lab", version, about = "Stochastic shortest path PAC learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate an instance file.
    Validate { file: PathBuf },
    /// Print oracle constants, V* and pi*.
    Solve { file: PathBuf },
    /// Generate an instance from a family and KEY=VALUE parameters.
    Gen {
        family: String,
        params: Vec<String>,
        /// Writes PREFIX.ssp and PREFIX.manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run seeded trials and write the CSV.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the epsilon grid and print the scaling of mean samples.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Aggregate a trial CSV.
    Report { csv: PathBuf },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    budget_cap: Option<u64>,
}

enum Failure {
    Usage(String),
    Data(String),
    Budget(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn print_summary(summary: &[Summary]) {
    print!("{}", harness::render_summary(summary));
}

fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(t) = o.trials {
        cfg.trials = t;
    }
    if let Some(s) = o.base_seed {
        cfg.base_seed = s;
    }
    if let Some(p) = &o.output {
        cfg.output = Some(p.clone());
    }
    if o.budget_cap.is_some() {
        cfg.budget_cap = o.budget_cap;
    }
    cfg.check()?;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Vec<Summary>), Failure> {
    let (records, summary) = harness::run_trials(cfg)?;
    match cfg.output_path() {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(data)?;
            }
            let f = std::fs::File::create(&p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            harness::write_csv(&records, f)?;
            print_summary(&summary);
        }
        None => harness::write_csv(&records, std::io::stdout())?,
    }
    Ok((records, summary))
}

fn budget_check(records: &[TrialRecord]) -> Result<(), Failure> {
    let aborted = records.iter().filter(|r| r.verdict == Verdict::BudgetAbort.as_str()).count();
    if aborted > 0 {
        return Err(Failure::Budget(format!("{aborted} of {} trials hit the sample budget", records.len())));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Validate { file } => {
            let m = parse_ssp(&read(&file)?).map_err(data)?;
            println!("valid S={} A={} c_min={}", m.n_states(), m.n_actions(), m.c_min());
        }
        Cmd::Solve { file } => {
            let m = parse_ssp(&read(&file)?).map_err(data)?;
            let k = oracle::constants(&m).map_err(data)?;
            println!("S = {}", m.n_states());
            println!("A = {}", m.n_actions());
            println!("c_min = {}", m.c_min());
            println!("B_star = {}", k.b_star);
            println!("T_star = {}", k.t_star);
            println!("T_ddagger = {}", k.t_ddagger);
            println!("D = {}", k.diameter);
            println!("V_star = {}", join(&k.v_star[..m.n_states()]));
            println!("pi_star = {}", join(&k.pi_star));
        }
        Cmd::Gen { family, params, out } => {
            let mut doc = KvDoc::new();
            doc.push("family", &family);
            for p in &params {
                let (k, v) = p.split_once('=').ok_or_else(|| Failure::Usage(format!("expected KEY=VALUE, got `{p}`")))?;
                doc.push(k.trim(), v.trim());
            }
            let spec = InstanceSpec::from_kv(&doc).map_err(data)?;
            let (m, manifest) = generate(&spec).map_err(data)?;
            let with_ext = |ext: &str| {
                let mut s = out.clone().into_os_string();
                s.push(ext);
                PathBuf::from(s)
            };
            std::fs::write(with_ext(".ssp"), write_ssp(&m)).map_err(data)?;
            std::fs::write(with_ext(".manifest"), manifest.render()).map_err(data)?;
            println!("wrote {} (S={} A={} B_star={})", with_ext(".ssp").display(), m.n_states(), m.n_actions(), manifest.b_star);
        }
        Cmd::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (records, _) = execute(&cfg)?;
            budget_check(&records)?;
        }
        Cmd::Sweep { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (records, summary) = execute(&cfg)?;
            println!("epsilon_a,epsilon_b,sample_ratio,inverse_square_ratio");
            for w in summary.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                println!("{},{},{},{}", a.epsilon, b.epsilon, b.mean_samples / a.mean_samples, (a.epsilon / b.epsilon).powi(2));
            }
            budget_check(&records)?;
        }
        Cmd::Report { csv } => {
            let f = std::fs::File::open(&csv).map_err(|e| Failure::Data(format!("{}: {e}", csv.display())))?;
            let records = harness::read_csv(f)?;
            if records.is_empty() {
                return Err(Failure::Data("no trial rows".into()));
            }
            print_summary(&harness::summarize(&records));
        }
    }
    Ok(())
}

fn fail(kind: &str, code: u8, msg: &str) -> ExitCode {
    let msg = msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n");
    eprintln!("error kind={kind} code={code} message=\"{msg}\"");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", 1, e.to_string().trim()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => fail("usage", 1, &m),
        Err(Failure::Data(m)) => fail("data", 2, &m),
        Err(Failure::Budget(m)) => fail("budget", 3, &m),
    }
}
