use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use plmforge::formats::plm_to_json;
use plmforge::input::parse_input;
use plmforge::suites::{report_json, run_suite, Config, Suite};
use plmforge_core::circuit::Circuit;
use plmforge_core::f2::BitVec;
use plmforge_core::obf::{qeval, qobf, word_bits, EvalOptions, ObfError, ObfParams};
use plmforge_core::plm::{compile, projectivity_check};
use plmforge_core::rng::SplitRng;
use plmforge_core::statevec::fidelity;
use plmforge_core::world::WorldError;

const USAGE: u8 = 1;
const INPUT: u8 = 2;
const ASSERTION: u8 = 3;

/// Factor cap used under `--big`.
const BIG_CAP: usize = 64;

#[derive(Parser)]
#[command(name = "plmforge", version, about = "Compile, obfuscate and evaluate small quantum circuits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Security parameter of the authentication code.
    #[arg(long, global = true, default_value_t = 1)]
    lambda: usize,
    /// PRF output length in bits.
    #[arg(long, global = true, default_value_t = 32)]
    kappa: usize,
    /// Random seed.
    #[arg(long, global = true, env = "PLMFORGE_SEED", default_value_t = 0)]
    seed: u64,
    /// Largest number of qubits one simulated factor may hold.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Print the evaluation transcript.
    #[arg(long, global = true)]
    verbose: bool,
    /// Print the oracle's secret keys.
    #[arg(long, global = true)]
    insecure_dump: bool,
    /// Raise the default factor cap for larger runs.
    #[arg(long, global = true)]
    big: bool,
}

impl Common {
    fn params(&self) -> ObfParams {
        let cap = self.cap.unwrap_or(if self.big { BIG_CAP } else { ObfParams::default().cap });
        ObfParams { lambda: self.lambda, kappa: self.kappa, cap }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a circuit into a PLM program.
    Compile {
        input: PathBuf,
        output: PathBuf,
        /// Check that the compiled measurements are projective.
        #[arg(long)]
        check_projectivity: bool,
    },
    /// Obfuscate a unitary circuit and evaluate it on one input.
    ObfEval {
        input: PathBuf,
        /// Per-qubit labels over 0 1 + - i j, `bell`, or `random:SEED`.
        state: String,
    },
    /// Run a self-test suite and print a JSON report.
    Selftest {
        #[arg(value_parser = suite_name)]
        suite: Suite,
        /// Report wall-clock time; off by default to keep output reproducible.
        #[arg(long)]
        timing: bool,
    },
}

fn suite_name(s: &str) -> Result<Suite, String> {
    Suite::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
        format!("unknown suite `{s}`; expected one of {}", names.join(", "))
    })
}

struct Failure(u8, String);

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure(INPUT, e.to_string())
}

fn read_circuit(path: &PathBuf) -> Result<Circuit, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    Circuit::parse(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn cmd_compile(common: &Common, input: &PathBuf, output: &PathBuf, check: bool) -> Result<(), Failure> {
    let q = read_circuit(input)?;
    let p = compile(&q).map_err(input_err)?;
    let text = serde_json::to_string_pretty(&plm_to_json(&p)).expect("JSON values serialize");
    fs::write(output, text + "\n").map_err(|e| input_err(format!("{}: {e}", output.display())))?;
    println!("wrote {} ({} instructions, width {})", output.display(), p.t(), p.width());
    if check {
        let mut rng = SplitRng::new(common.seed);
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        for v in 0u64..1 << q.n_c {
            let i = BitVec::from_u64(v, q.n_c);
            let r = projectivity_check(&p, &i, 2, &mut rng).map_err(input_err)?;
            worst = worst.max(r.max_deviation);
            cases += r.cases;
        }
        println!("projectivity max_deviation {worst:.3e} cases {cases}");
        if !(worst <= 1e-8) {
            return Err(Failure(ASSERTION, format!("projectivity deviation {worst:.3e} exceeds 1e-8")));
        }
    }
    Ok(())
}

fn obf_failure(e: ObfError) -> Failure {
    match e {
        ObfError::Rejected { .. } => Failure(ASSERTION, e.to_string()),
        ObfError::World(WorldError::CapExceeded { .. }) => {
            Failure(INPUT, format!("{e}; raise it with --cap or --big"))
        }
        other => input_err(other),
    }
}

fn cmd_obf_eval(common: &Common, input: &PathBuf, label: &str) -> Result<(), Failure> {
    let q = read_circuit(input)?;
    let state = parse_input(label, q.n_q).map_err(input_err)?;
    let params = common.params();
    let mut rng = SplitRng::new(common.seed);
    let mut pkg = qobf(&q, None, &params, &mut rng).map_err(obf_failure)?;
    println!("program qubits {} instructions {} lambda {} kappa {}", q.n_q, pkg.public.t(), params.lambda, params.kappa);
    if common.insecure_dump {
        print!("{}", pkg.oracle.insecure_dump());
    }
    let ev = qeval(&mut pkg, &state, &EvalOptions::default(), &mut rng).map_err(obf_failure)?;
    if common.verbose {
        println!("input key {}", ev.transcript.input_key.to_bit_string());
        for (j, w) in ev.transcript.responses.iter().enumerate() {
            println!("response {j} {}", word_bits(w).to_bit_string());
        }
        println!("max factor width {} entries {}", ev.transcript.max_factor_width, ev.transcript.max_factor_entries);
    }
    let want = plmforge::suites::ideal_output(&q, &state).map_err(input_err)?;
    let f = fidelity(&ev.output, &want);
    println!("fidelity {f:.12}");
    if f < 0.999 {
        return Err(Failure(ASSERTION, format!("fidelity {f:.6} below 0.999")));
    }
    Ok(())
}

fn cmd_selftest(common: &Common, suite: Suite, timing: bool) -> Result<(), Failure> {
    let cfg = Config { seed: common.seed, params: common.params() };
    let start = Instant::now();
    let cases = run_suite(suite, &cfg);
    let wall = timing.then(|| start.elapsed().as_millis());
    let report = report_json(suite, common.seed, &cases, wall);
    println!("{}", serde_json::to_string_pretty(&report).expect("JSON values serialize"));
    let failed = cases.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(Failure(ASSERTION, format!("{failed} of {} cases failed", cases.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let out = match &cli.cmd {
        Cmd::Compile { input, output, check_projectivity } => cmd_compile(&cli.common, input, output, *check_projectivity),
        Cmd::ObfEval { input, state } => cmd_obf_eval(&cli.common, input, state),
        Cmd::Selftest { suite, timing } => cmd_selftest(&cli.common, *suite, *timing),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("plmforge: {msg}");
            ExitCode::from(code)
        }
    }
}
