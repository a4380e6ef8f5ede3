//! `qcoin`: build and inspect game circuits, play single games, run batches.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcoin::circuits::{self, Circuit, Design};
use qcoin::coins::CoinSpec;
use qcoin::config::{CoinSource, ExperimentConfig};
use qcoin::consensus::{ConsensusMode, ReviewReport, Thresholds};
use qcoin::harness::{self, Schedule};
use qcoin::protocol::{Engine, LiePolicy, PlayerBehavior, Transcript, WinnerRule};
use qcoin::qstate::pauli_x2;
use qcoin::Error;

const DEFAULT_AMPLITUDE_CAP: usize = 64;

#[derive(Debug, Parser)]
#[command(
    name = "qcoin",
    version,
    about = "Entangled-state coin flipping simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a design's preparation circuit and print the prepared state.
    Prepare(PrepareArgs),
    /// Play a single game and print its transcript as JSON.
    Run(RunArgs),
    /// Run many seeded games and write aggregate statistics.
    Batch(BatchArgs),
    /// Print qubit count and circuit depth of a design.
    Resources(DesignArgs),
    /// Evaluate the peer review stored in a transcript or report file.
    Review(ReviewArgs),
    /// Classical two-player game with a last-announcing cheater.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// classical, two-party, two-party-witness, central, p2p, ring or hybrid.
    #[arg(long, default_value = "two-party")]
    design: Design,
    /// Number of players.
    #[arg(long, default_value_t = 2)]
    players: usize,
}

#[derive(Debug, Args)]
struct CoinArgs {
    /// Coin tensor file (TOML list of [bitstring, re, im] entries).
    #[arg(long, conflicts_with = "fair_a")]
    coin_file: Option<PathBuf>,
    /// Two-player fair coin with tie weight `a`.
    #[arg(long)]
    fair_a: Option<f64>,
    /// Phases of the fair coin entries hh,ht,th,tt.
    #[arg(long, value_delimiter = ',', num_args = 4, requires = "fair_a")]
    phases: Option<Vec<f64>>,
}

impl CoinArgs {
    fn source(&self) -> Option<CoinSource> {
        if let Some(path) = &self.coin_file {
            return Some(CoinSource::File { path: path.clone() });
        }
        let a = self.fair_a?;
        let mut phases = [0.0; 4];
        if let Some(p) = &self.phases {
            phases.copy_from_slice(p);
        }
        Some(CoinSource::Fair { a, phases })
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    coin: CoinArgs,
    /// Print every nonzero amplitude instead of the first 64.
    #[arg(long)]
    full: bool,
    /// Use the direct-CNOT construction (p2p only).
    #[arg(long)]
    direct: bool,
    /// Write the circuit as a gate list to this file.
    #[arg(long)]
    gates_out: Option<PathBuf>,
}

/// Options shared by `run` and `batch`; flags override the config file.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    design: Option<Design>,
    #[arg(long)]
    players: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    coin: CoinArgs,
    /// Player behavior as PLAYER=KIND, where KIND is honest,
    /// liar[:heads|tails|invert], early or flip-confirmation. Repeatable.
    #[arg(long = "behavior", value_name = "PLAYER=KIND")]
    behaviors: Vec<String>,
    /// Announcement delay per player, comma separated.
    #[arg(long, value_delimiter = ',')]
    delays: Option<Vec<u64>>,
    /// unique-heads, majority or xor-parity.
    #[arg(long)]
    winner: Option<WinnerRule>,
    /// Peer agreement threshold r.
    #[arg(long)]
    agreement: Option<f64>,
    /// witness-primary or p2p-primary (hybrid only).
    #[arg(long)]
    mode: Option<ConsensusMode>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Write the transcript here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    trials: Option<u64>,
    /// Maximum rounds per trial before it counts as undecided.
    #[arg(long)]
    replay_cap: Option<u32>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for stats.csv (and transcripts.jsonl).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write every transcript as JSON lines.
    #[arg(long)]
    transcripts: bool,
}

#[derive(Debug, Args)]
struct ReviewArgs {
    /// Transcript JSON (first line of a JSONL file) or a bare review report.
    input: PathBuf,
    /// Override the agreement threshold r.
    #[arg(long)]
    agreement: Option<f64>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// Cheating player: A, B, 0 or 1. Omit for two honest players.
    #[arg(long)]
    cheater: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Announcement delays of A and B; by default the cheater goes last.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    delays: Option<Vec<u64>>,
    #[arg(long, default_value_t = 64)]
    replay_cap: u32,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(msg) => Failure::Io(msg),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::Resources(a) => resources(a),
        Command::Review(a) => review(a),
        Command::Baseline(a) => baseline(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn build_circuit(design: Design, players: usize, direct: bool) -> CliResult<Circuit> {
    if direct {
        if design != Design::PeerToPeer {
            return Err(Failure::Config("--direct only applies to p2p".into()));
        }
        return Ok(circuits::build_p2p_direct(players)?);
    }
    Ok(circuits::build(design, players)?)
}

fn bits(index: usize, n: usize) -> String {
    format!("{index:0n$b}")
}

fn prepare(args: PrepareArgs) -> CliResult<String> {
    let DesignArgs { design, players } = args.design;
    let circuit = build_circuit(design, players, args.direct)?;
    let coin = match args.coin.source() {
        Some(source) => source.build(players)?,
        None => CoinSpec::uniform(players)?,
    };
    let state = circuit.prepare(&coin)?;
    if let Some(path) = &args.gates_out {
        fs::write(path, circuit.to_gate_list()).map_err(|e| io_err(path, e))?;
    }

    let layout = &circuit.layout;
    let (qubits, depth) = circuits::resource_report(&circuit);
    let mut out = String::new();
    writeln!(
        out,
        "design={design} players={players} qubits={qubits} depth={depth}"
    )
    .unwrap();
    for p in 0..players {
        let conf: Vec<String> = layout.confirmation_qubits[p]
            .iter()
            .map(|(reviewed, q)| format!("{q}:{reviewed}"))
            .collect();
        writeln!(
            out,
            "player {p}: coin={} confirmations=[{}]",
            layout.coin_qubits[p],
            conf.join(" ")
        )
        .unwrap();
    }
    if !layout.witness_qubits.is_empty() {
        let w: Vec<String> = layout
            .witness_qubits
            .iter()
            .map(|q| q.to_string())
            .collect();
        writeln!(out, "witness: [{}]", w.join(" ")).unwrap();
    }
    let support = state.support(qcoin::qstate::ZERO_BRANCH_EPS);
    writeln!(out, "nonzero={}", support.len()).unwrap();
    let cap = if args.full {
        usize::MAX
    } else {
        DEFAULT_AMPLITUDE_CAP
    };
    for &(index, _) in support.iter().take(cap) {
        let a = state.amplitude(index);
        writeln!(out, "{} {:.12} {:.12}", bits(index, qubits), a.re, a.im).unwrap();
    }
    if support.len() > cap {
        writeln!(out, "... {} more (use --full)", support.len() - cap).unwrap();
    }
    for (p, &q) in layout.coin_qubits.iter().enumerate() {
        let (h, t) = state.marginal(q)?;
        writeln!(out, "marginal player={p} heads={h:.12} tails={t:.12}").unwrap();
    }
    Ok(out)
}

fn parse_behavior(spec: &str, players: usize) -> CliResult<(usize, PlayerBehavior)> {
    let bad = || Failure::Config(format!("bad --behavior {spec:?}"));
    let (player, kind) = spec.split_once('=').ok_or_else(bad)?;
    let player: usize = player.trim().parse().map_err(|_| bad())?;
    if player >= players {
        return Err(Error::PlayerOutOfRange {
            player,
            num_players: players,
        }
        .into());
    }
    let behavior = match kind.trim() {
        "honest" => PlayerBehavior::Honest,
        "liar" | "liar:invert" => PlayerBehavior::ClassicalLiar {
            policy: LiePolicy::Invert,
        },
        "liar:heads" => PlayerBehavior::ClassicalLiar {
            policy: LiePolicy::AlwaysHeads,
        },
        "liar:tails" => PlayerBehavior::ClassicalLiar {
            policy: LiePolicy::AlwaysTails,
        },
        "early" => PlayerBehavior::EarlyConfirmMeasurer,
        "flip-confirmation" => PlayerBehavior::UnitaryManipulator {
            matrix: pauli_x2(),
            target: None,
        },
        _ => return Err(bad()),
    };
    Ok((player, behavior))
}

fn experiment_config(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(args.design.unwrap_or(Design::TwoParty), 2),
    };
    if let Some(d) = args.design {
        config.design = d;
    }
    if let Some(n) = args.players {
        if n != config.players {
            config.behaviors.clear();
            config.delays.clear();
        }
        config.players = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(source) = args.coin.source() {
        config.coin = source;
    }
    if !args.behaviors.is_empty() {
        let mut behaviors = config.behaviors();
        behaviors.resize(config.players, PlayerBehavior::Honest);
        for spec in &args.behaviors {
            let (p, b) = parse_behavior(spec, config.players)?;
            behaviors[p] = b;
        }
        config.behaviors = behaviors;
    }
    if let Some(d) = &args.delays {
        config.delays = d.clone();
    }
    if let Some(w) = args.winner {
        config.rules.winner = w;
    }
    if let Some(r) = args.agreement {
        config.rules.thresholds = Thresholds::new(r, 1.0 - r)?;
    }
    if let Some(m) = args.mode {
        config.rules.mode = m;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> CliResult<String> {
    let config = experiment_config(&args.experiment)?;
    let coin = config.coin_spec()?;
    let engine = Engine::new(config.design, &coin, config.rules)?;
    let order = Schedule::new(config.delays()).order();
    let transcript = engine.run(&order, &config.behaviors(), config.seed)?;
    let json = transcript.to_json() + "\n";
    match &args.out {
        Some(path) => {
            fs::write(path, &json).map_err(|e| io_err(path, e))?;
            Ok(format!("verdict={}\n", transcript.verdict.label()))
        }
        None => Ok(json),
    }
}

fn batch(args: BatchArgs) -> CliResult<String> {
    let mut config = experiment_config(&args.experiment)?;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(c) = args.replay_cap {
        config.replay_cap = c;
    }
    if let Some(t) = args.threads {
        config.threads = Some(t);
    }
    config.validate()?;
    let result = harness::run_batch(&config, args.transcripts)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let csv_path = args.out_dir.join("stats.csv");
    fs::write(&csv_path, result.stats.to_csv()).map_err(|e| io_err(&csv_path, e))?;
    if args.transcripts {
        let path = args.out_dir.join("transcripts.jsonl");
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        harness::write_jsonl(std::io::BufWriter::new(file), &result.transcripts)
            .map_err(|e| io_err(&path, e))?;
    }
    let s = &result.stats;
    Ok(format!(
        "trials={} decided={} undecided={} confirmation_mismatches={}\n",
        s.trials, s.decided, s.undecided, s.confirmation_mismatches
    ))
}

fn resources(args: DesignArgs) -> CliResult<String> {
    let circuit = circuits::build(args.design, args.players)?;
    let (qubits, depth) = circuits::resource_report(&circuit);
    Ok(format!("qubits={qubits} depth={depth}\n"))
}

fn review(args: ReviewArgs) -> CliResult<String> {
    let text = fs::read_to_string(&args.input).map_err(|e| io_err(&args.input, e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut report = match Transcript::from_json(first) {
        Ok(t) => t
            .review
            .ok_or_else(|| Failure::Config(format!("{} design has no peer review", t.design)))?,
        Err(_) => serde_json::from_str::<ReviewReport>(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", args.input.display())))?,
    };
    if let Some(r) = args.agreement {
        report.thresholds = Thresholds::new(r, 1.0 - r)?;
    }
    let mut out = String::new();
    for p in 0..report.num_players {
        writeln!(
            out,
            "player={p} announced={} r={:?} R={:?} accepted={}",
            report.self_results[p],
            report.agreement_ratio(p)?,
            report.disagreement_ratio(p)?,
            report.accept_result(p)?
        )
        .unwrap();
    }
    Ok(out)
}

fn baseline(args: BaselineArgs) -> CliResult<String> {
    let cheater = match args.cheater.as_deref() {
        None => None,
        Some("A" | "a" | "0") => Some(0),
        Some("B" | "b" | "1") => Some(1),
        Some(other) => return Err(Failure::Config(format!("unknown cheater {other:?}"))),
    };
    let delays = match (&args.delays, cheater) {
        (Some(d), _) => d.clone(),
        (None, Some(0)) => vec![1, 0],
        (None, _) => vec![0, 1],
    };
    let stats = harness::run_classical_baseline(
        args.trials,
        cheater,
        &Schedule::new(delays),
        args.seed,
        args.replay_cap,
    )?;
    let mut out = String::new();
    if let Some(rate) = stats.cheater_win_rate() {
        writeln!(out, "cheater_win_rate={rate:?}").unwrap();
    }
    writeln!(out, "win_rate_a={:?}", stats.win_rate(0)).unwrap();
    writeln!(out, "win_rate_b={:?}", stats.win_rate(1)).unwrap();
    writeln!(
        out,
        "decided={} undecided={}",
        stats.decided, stats.undecided
    )
    .unwrap();
    Ok(out)
}
