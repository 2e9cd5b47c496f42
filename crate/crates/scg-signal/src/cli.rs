//! Command-line entry point: generators, solvers, verifiers, the sampler
//! and baseline comparison.
//!
//! Exit codes: 0 success, 2 input error, 3 size guard, 4 numerical
//! failure, 5 invariant violation detected.

use crate::equilibrium::Selection;
use crate::game::{GameError, Instance};
use crate::instances::io::{
    format_rational, parse_rational, private_scheme_to_string, public_scheme_to_string,
    read_edge_list, read_instance, read_scheme, write_instance, write_scheme_string, SchemeFile,
};
use crate::instances::{
    coloring_scheme, gen_figure1, gen_hardness, gen_random, gen_table1, InstancesError,
};
use crate::lp::LpError;
use crate::private::{
    check_obedience, check_reduced_feasibility, explicit_from_reduced, sample_private,
    solve_optimal_ce, solve_optimal_private, PrivateError, PrivateOptions,
};
use crate::public::{
    evaluate_public_scheme, full_info_scheme, no_info_scheme, solve_optimal_public, validate_scheme,
    PublicError, PublicOptions,
};
use crate::scalar::Scalar;
use crate::Rational;
use clap::{Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "scg-signal",
    about = "Optimal public and private signaling for singleton congestion games",
    version
)]
pub struct Cli {
    /// Worker threads for per-signature solves (also SCG_SIGNAL_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMode {
    Public,
    Private,
    Ce,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Best,
    Worst,
}

impl From<SelectionArg> for Selection {
    fn from(value: SelectionArg) -> Self {
        match value {
            SelectionArg::Best => Selection::Best,
            SelectionArg::Worst => Selection::Worst,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ArithMode {
    Rational,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance to a file.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Solve for an optimal scheme and report its value.
    Solve {
        #[arg(value_enum)]
        mode: SolveMode,
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the scheme document here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "best")]
        selection: SelectionArg,
        /// Verification tolerance recorded in the report.
        #[arg(long)]
        tolerance: Option<String>,
        /// Overrides every size-guard cap.
        #[arg(long)]
        max_size: Option<u128>,
        #[arg(long, value_enum, default_value = "rational")]
        arith: ArithMode,
    },
    /// Check a scheme document against an instance.
    Verify {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        tolerance: Option<String>,
    },
    /// Draw action profiles from a private scheme.
    Sample {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        /// State name or zero-based index.
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
    /// Solve everything and print the baseline comparison table.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "rational")]
        arith: ArithMode,
        #[arg(long)]
        tolerance: Option<String>,
        #[arg(long)]
        max_size: Option<u128>,
    },
}

#[derive(Subcommand)]
enum GenerateKind {
    /// The worked two-resource three-agent fixture.
    Table1 {
        #[arg(long)]
        out: PathBuf,
        /// Prior as "p1,p2" (default 0.5,0.5).
        #[arg(long)]
        prior: Option<String>,
    },
    /// The introductory routing example with a reconstruction parameter h.
    Figure1 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value = "2")]
        h: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Graph-based symmetric family (one state per vertex plus a backup
    /// resource).
    Hardness {
        /// Edge list file: first line is the vertex count, then "u v"
        /// lines with 1-based vertices.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the color-revealing public scheme here (requires a
        /// coloring in the graph file via "c v k" lines).
        #[arg(long)]
        scheme_out: Option<PathBuf>,
    },
    /// Seed-reproducible random instance.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        asymmetric: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn violation(message: impl Into<String>) -> Self {
        Self {
            code: 5,
            message: message.into(),
        }
    }
}

impl From<InstancesError> for Failure {
    fn from(e: InstancesError) -> Self {
        let code = match &e {
            InstancesError::Game(GameError::SizeGuard { .. }) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        let code = match &e {
            GameError::SizeGuard { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<LpError> for Failure {
    fn from(e: LpError) -> Self {
        Failure {
            code: 4,
            message: e.to_string(),
        }
    }
}

impl From<PublicError> for Failure {
    fn from(e: PublicError) -> Self {
        match e {
            PublicError::Game(g) => g.into(),
            PublicError::Lp(l) => l.into(),
            PublicError::SizeGuard { .. } => Failure {
                code: 3,
                message: e.to_string(),
            },
            PublicError::InvalidScheme(_) => Failure {
                code: 5,
                message: e.to_string(),
            },
        }
    }
}

impl From<PrivateError> for Failure {
    fn from(e: PrivateError) -> Self {
        match e {
            PrivateError::Game(g) => g.into(),
            PrivateError::Lp(l) => l.into(),
            PrivateError::SizeGuard { .. } => Failure {
                code: 3,
                message: e.to_string(),
            },
            PrivateError::NotSingleState(_) => Failure {
                code: 2,
                message: e.to_string(),
            },
            other => Failure {
                code: 4,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Serialize)]
struct InstanceRef {
    name: String,
    digest: String,
}

#[derive(Serialize)]
struct RunReport {
    command: String,
    instance: Option<InstanceRef>,
    arith: String,
    threads: usize,
    tolerance: String,
    seed: Option<u64>,
    values: IndexMap<String, String>,
    timings_ms: IndexMap<String, u128>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    draws: Vec<Vec<usize>>,
}

impl RunReport {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            instance: None,
            arith: "rational".into(),
            threads: rayon::current_num_threads(),
            tolerance: "0".into(),
            seed: None,
            values: IndexMap::new(),
            timings_ms: IndexMap::new(),
            draws: Vec::new(),
        }
    }

    fn set_instance(&mut self, inst: &Instance<Rational>) {
        self.instance = Some(InstanceRef {
            name: inst.name().to_string(),
            digest: instance_digest(inst),
        });
    }

    fn emit(&self) {
        println!(
            "{}",
            serde_json::to_string_pretty(self).expect("report serialization")
        );
        eprintln!("== {} ==", self.command);
        for (key, value) in &self.values {
            eprintln!("{key:<28} {value}");
        }
        for (key, ms) in &self.timings_ms {
            eprintln!("{:<28} {} ms", format!("[{key}]"), ms);
        }
    }
}

pub fn instance_digest(inst: &Instance<Rational>) -> String {
    let canonical = crate::instances::io::instance_to_string(inst);
    let hash = Sha256::digest(canonical.as_bytes());
    format!("sha256:{hash:x}")
}

fn init_threads(threads: Option<usize>) -> usize {
    let requested = threads.or_else(|| {
        std::env::var("SCG_SIGNAL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = requested {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global();
    }
    rayon::current_num_threads()
}

fn parse_tolerance(flag: &Option<String>, default: Rational) -> Result<Rational, Failure> {
    match flag {
        None => Ok(default),
        Some(text) => parse_rational(text)
            .map_err(|e| Failure::input(format!("bad --tolerance: {e}"))),
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let threads = init_threads(cli.threads);
    match dispatch(cli.command, threads) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn dispatch(command: Command, threads: usize) -> Result<(), Failure> {
    match command {
        Command::Generate { kind } => cmd_generate(kind, threads),
        Command::Solve {
            mode,
            input,
            out,
            selection,
            tolerance,
            max_size,
            arith,
        } => cmd_solve(mode, &input, out, selection, tolerance, max_size, arith, threads),
        Command::Verify {
            scheme,
            instance,
            tolerance,
        } => cmd_verify(&scheme, &instance, tolerance, threads),
        Command::Sample {
            scheme,
            instance,
            state,
            seed,
            draws,
        } => cmd_sample(&scheme, &instance, &state, seed, draws, threads),
        Command::Compare {
            input,
            arith,
            tolerance,
            max_size,
        } => cmd_compare(&input, arith, tolerance, max_size, threads),
    }
}

fn cmd_generate(kind: GenerateKind, threads: usize) -> Result<(), Failure> {
    let mut report = RunReport::new("generate");
    report.threads = threads;
    let (inst, out) = match kind {
        GenerateKind::Table1 { out, prior } => {
            let prior = match prior {
                None => None,
                Some(text) => {
                    let parts: Vec<&str> = text.split(',').collect();
                    if parts.len() != 2 {
                        return Err(Failure::input("--prior expects \"p1,p2\""));
                    }
                    Some((
                        parse_rational(parts[0])?,
                        parse_rational(parts[1])?,
                    ))
                }
            };
            (gen_table1(prior)?, out)
        }
        GenerateKind::Figure1 { n, eps, h, out } => {
            let eps = parse_rational(&eps)?;
            let h = parse_rational(&h)?;
            (gen_figure1(n, &eps, &h)?, out)
        }
        GenerateKind::Hardness {
            graph,
            q,
            k,
            eps,
            out,
            scheme_out,
        } => {
            let spec = read_edge_list(&graph)?;
            let eps = parse_rational(&eps)?;
            let inst = gen_hardness(&spec, q, k, &eps)?;
            if let Some(scheme_out) = scheme_out {
                let coloring = spec.coloring.clone().ok_or_else(|| {
                    Failure::input("--scheme-out needs a coloring in the graph file")
                })?;
                let scheme = coloring_scheme(&inst, &spec, &coloring)?;
                write_scheme_string(&scheme_out, &public_scheme_to_string(&inst, &scheme))?;
            }
            (inst, out)
        }
        GenerateKind::Random {
            n,
            r,
            states,
            seed,
            asymmetric,
            out,
        } => (gen_random(n, r, states, seed, asymmetric)?, out),
    };
    write_instance(&out, &inst)?;
    report.set_instance(&inst);
    report
        .values
        .insert("written".into(), out.display().to_string());
    report.emit();
    Ok(())
}

fn apply_caps_public(opts: &mut PublicOptions, max_size: Option<u128>) {
    if let Some(cap) = max_size {
        opts.signature_cap = cap;
        opts.config_cap = cap;
    }
}

fn apply_caps_private(opts: &mut PrivateOptions, max_size: Option<u128>) {
    if let Some(cap) = max_size {
        opts.reduced_cap = cap;
        opts.oracle_cap = cap;
        opts.config_cap = cap;
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    mode: SolveMode,
    input: &Path,
    out: Option<PathBuf>,
    selection: SelectionArg,
    tolerance: Option<String>,
    max_size: Option<u128>,
    arith: ArithMode,
    threads: usize,
) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let tol = parse_tolerance(&tolerance, Rational::zero())?;
    let mut report = RunReport::new("solve");
    report.threads = threads;
    report.set_instance(&inst);
    report.tolerance = format_rational(&tol);
    match arith {
        ArithMode::Rational => {
            report.arith = "rational".into();
            solve_with::<Rational>(&inst, inst.clone(), mode, out, selection, max_size, report)
        }
        ArithMode::Float => {
            report.arith = "float".into();
            let float = inst.map_scalar::<f64>();
            solve_with::<f64>(&inst, float, mode, out, selection, max_size, report)
        }
    }
}

fn solve_with<T: Scalar>(
    canonical: &Instance<Rational>,
    inst: Instance<T>,
    mode: SolveMode,
    out: Option<PathBuf>,
    selection: SelectionArg,
    max_size: Option<u128>,
    mut report: RunReport,
) -> Result<(), Failure> {
    let started = Instant::now();
    match mode {
        SolveMode::Public => {
            let mut opts = PublicOptions::default();
            apply_caps_public(&mut opts, max_size);
            let (scheme, value) = solve_optimal_public(&inst, &opts)?;
            report
                .timings_ms
                .insert("solve".into(), started.elapsed().as_millis());
            report
                .values
                .insert("public_value".into(), render(&value));
            let eval_started = Instant::now();
            let eval = evaluate_public_scheme(&inst, &scheme, selection.into())?;
            report
                .timings_ms
                .insert("evaluate".into(), eval_started.elapsed().as_millis());
            let key = match selection {
                SelectionArg::Best => "evaluation_best",
                SelectionArg::Worst => "evaluation_worst",
            };
            report.values.insert(key.into(), render(&eval));
            if let Some(out) = out {
                let exact = map_public(&scheme);
                write_scheme_string(&out, &public_scheme_to_string(canonical, &exact))?;
                report
                    .values
                    .insert("written".into(), out.display().to_string());
            }
        }
        SolveMode::Private | SolveMode::Ce => {
            let mut opts = PrivateOptions::default();
            apply_caps_private(&mut opts, max_size);
            let (reduced, value) = match mode {
                SolveMode::Ce => solve_optimal_ce(&inst, &opts)?,
                _ => solve_optimal_private(&inst, &opts)?,
            };
            report
                .timings_ms
                .insert("solve".into(), started.elapsed().as_millis());
            let key = match mode {
                SolveMode::Ce => "ce_value",
                _ => "private_value",
            };
            report.values.insert(key.into(), render(&value));
            if let Some(out) = out {
                let exact = reduced.map_scalar::<Rational>();
                let explicit = explicit_from_reduced(canonical, &exact)?;
                write_scheme_string(
                    &out,
                    &private_scheme_to_string(canonical, &exact, Some(&explicit)),
                )?;
                report
                    .values
                    .insert("written".into(), out.display().to_string());
            }
        }
    }
    report.emit();
    Ok(())
}

fn render<T: Scalar>(value: &T) -> String {
    format_rational(&value.to_rational())
}

fn map_public<T: Scalar>(scheme: &crate::public::PublicScheme<T>) -> crate::public::PublicScheme<Rational> {
    crate::public::PublicScheme {
        signals: scheme
            .signals
            .iter()
            .map(|s| crate::public::PublicSignal {
                emission: s.emission.iter().map(|v| v.to_rational()).collect(),
                probability: s.probability.to_rational(),
                posterior: crate::game::Posterior::new_unchecked(
                    s.posterior.probs().iter().map(|v| v.to_rational()).collect(),
                ),
                config: s.config.clone(),
                assignment: s.assignment.clone(),
                expected_cost: s.expected_cost.to_rational(),
            })
            .collect(),
    }
}

fn cmd_verify(
    scheme_path: &Path,
    instance_path: &Path,
    tolerance: Option<String>,
    threads: usize,
) -> Result<(), Failure> {
    let inst = read_instance(instance_path)?;
    let tol = parse_tolerance(&tolerance, Rational::ratio(1, 1_000_000_000))?;
    let mut report = RunReport::new("verify");
    report.threads = threads;
    report.set_instance(&inst);
    report.tolerance = format_rational(&tol);
    match read_scheme(scheme_path, &inst)? {
        SchemeFile::Public(scheme) => {
            validate_scheme(&inst, &scheme, &tol).map_err(|e| Failure::violation(e.to_string()))?;
            let best = evaluate_public_scheme(&inst, &scheme, Selection::Best)?;
            let worst = evaluate_public_scheme(&inst, &scheme, Selection::Worst)?;
            report.values.insert("scheme".into(), "public".into());
            report
                .values
                .insert("evaluation_best".into(), render(&best));
            report
                .values
                .insert("evaluation_worst".into(), render(&worst));
        }
        SchemeFile::Private { reduced, explicit } => {
            let feasibility = check_reduced_feasibility(&inst, &reduced, &tol);
            if let Some(first) = feasibility.first() {
                return Err(Failure::violation(format!(
                    "reduced form infeasible ({} violations): {first}",
                    feasibility.len()
                )));
            }
            let explicit = match explicit {
                Some(e) => e,
                None => explicit_from_reduced(&inst, &reduced)?,
            };
            let obedience = check_obedience(&inst, &explicit, &tol);
            if let Some(first) = obedience.first() {
                return Err(Failure::violation(format!(
                    "scheme is not obedient ({} violations): agent {} prefers {} over {} \
                     (regret {})",
                    obedience.len(),
                    first.agent,
                    first.alternative,
                    first.recommended,
                    render(&first.residual),
                )));
            }
            report.values.insert("scheme".into(), "private".into());
            report
                .values
                .insert("value".into(), render(&explicit.value(&inst)));
        }
    }
    report.values.insert("status".into(), "OK".into());
    report.emit();
    Ok(())
}

fn cmd_sample(
    scheme_path: &Path,
    instance_path: &Path,
    state: &str,
    seed: u64,
    draws: usize,
    threads: usize,
) -> Result<(), Failure> {
    let inst = read_instance(instance_path)?;
    let state_idx = inst
        .states()
        .iter()
        .position(|s| s.name == state)
        .or_else(|| state.parse::<usize>().ok().filter(|&i| i < inst.num_states()))
        .ok_or_else(|| Failure::input(format!("unknown state {state:?}")))?;
    let SchemeFile::Private { reduced, .. } = read_scheme(scheme_path, &inst)? else {
        return Err(Failure::input("sampling needs a private scheme document"));
    };
    let mut report = RunReport::new("sample");
    report.threads = threads;
    report.set_instance(&inst);
    report.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    for _ in 0..draws {
        let profile = sample_private(&inst, &reduced, state_idx, &mut rng)?;
        report.draws.push(profile.actions().to_vec());
    }
    report
        .timings_ms
        .insert("sample".into(), started.elapsed().as_millis());
    report
        .values
        .insert("state".into(), inst.states()[state_idx].name.clone());
    report.values.insert("draws".into(), draws.to_string());
    report.emit();
    Ok(())
}

fn cmd_compare(
    input: &Path,
    arith: ArithMode,
    tolerance: Option<String>,
    max_size: Option<u128>,
    threads: usize,
) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let default_tol = match arith {
        ArithMode::Rational => Rational::zero(),
        ArithMode::Float => Rational::ratio(1, 10_000_000),
    };
    let tol = parse_tolerance(&tolerance, default_tol)?;
    let mut report = RunReport::new("compare");
    report.threads = threads;
    report.set_instance(&inst);
    report.tolerance = format_rational(&tol);
    match arith {
        ArithMode::Rational => {
            report.arith = "rational".into();
            compare_with::<Rational>(inst.clone(), tol, max_size, report)
        }
        ArithMode::Float => {
            report.arith = "float".into();
            compare_with::<f64>(inst.map_scalar(), tol, max_size, report)
        }
    }
}

fn compare_with<T: Scalar>(
    inst: Instance<T>,
    tol: Rational,
    max_size: Option<u128>,
    mut report: RunReport,
) -> Result<(), Failure> {
    let mut public_opts = PublicOptions::default();
    apply_caps_public(&mut public_opts, max_size);
    let mut private_opts = PrivateOptions::default();
    apply_caps_private(&mut private_opts, max_size);

    let started = Instant::now();
    let (_, private_value) = solve_optimal_private(&inst, &private_opts)?;
    report
        .timings_ms
        .insert("private".into(), started.elapsed().as_millis());
    let started = Instant::now();
    let (public_scheme, public_value) = solve_optimal_public(&inst, &public_opts)?;
    report
        .timings_ms
        .insert("public".into(), started.elapsed().as_millis());
    let public_worst = evaluate_public_scheme(&inst, &public_scheme, Selection::Worst)?;

    let full = full_info_scheme(&inst)?;
    let none = no_info_scheme(&inst)?;
    let full_best = evaluate_public_scheme(&inst, &full, Selection::Best)?;
    let full_worst = evaluate_public_scheme(&inst, &full, Selection::Worst)?;
    let none_best = evaluate_public_scheme(&inst, &none, Selection::Best)?;
    let none_worst = evaluate_public_scheme(&inst, &none, Selection::Worst)?;

    for (key, value) in [
        ("private", &private_value),
        ("public_best", &public_value),
        ("public_worst_eval", &public_worst),
        ("full_info_best", &full_best),
        ("full_info_worst", &full_worst),
        ("no_info_best", &none_best),
        ("no_info_worst", &none_worst),
    ] {
        report.values.insert(key.into(), render(value));
    }
    report.emit();

    let chain_ok = |lo: &T, hi: &T| lo.to_rational() <= hi.to_rational() + tol.clone();
    let baseline_best = if full_best.to_rational() <= none_best.to_rational() {
        &full_best
    } else {
        &none_best
    };
    if !chain_ok(&private_value, &public_value) || !chain_ok(&public_value, baseline_best) {
        return Err(Failure::violation(
            "value chain violated: expected private <= public <= min(full-info, no-info)"
                .to_string(),
        ));
    }
    Ok(())
}
