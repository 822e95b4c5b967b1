//! Command-line front end for the flux-modulation magnetometry toolkit.
//!
//! Every subcommand loads a scenario (bundled name or file path), runs one
//! computation from the library, and prints a report to stdout in the
//! requested `--format`. Curve-producing commands write their curve as CSV
//! to `--out`; `--format csv` prints the identical bytes to stdout instead,
//! so records synthesized here can be piped straight back into `asd`.
//! Identical inputs and seeds produce byte-identical files.
//!
//! All input and output is SI: tesla, seconds, hertz, meters, watts.

mod report;

use std::f64::consts::TAU;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fluxmag::consts::PhysicalConstants;
use fluxmag::dsp::{
    noise_floor, recover_tone, synthesize_timeseries, welch_asd, DriftModel, SynthesisConfig, Tone,
    WelchConfig,
};
use fluxmag::error::{Error, Result};
use fluxmag::fluxmod::{
    efficiency_vs_amplitude, phase_sweep, ConcentratorFit, TransferCurve, GAUSS,
};
use fluxmag::inhomogeneity::{
    contrast_vs_remanence, effective_contrast, ensemble_cosine_signal, QuadratureOptions,
};
use fluxmag::io;
use fluxmag::params::ProtocolParams;
use fluxmag::photon::{photon_number, pl_rate, rate_profile, OpticalParams};
use fluxmag::scenario::{NamedProtocol, ScenarioConfig};
use fluxmag::sensitivity::{duty_cycle, evaluate_sensitivity, improvement_ledger};
use fluxmag::spindyn::{
    decay_envelope, fringe_curve, fringe_period, max_slope, per_tesla_response, PulseSequence,
    SequenceKind, DIFFERENTIAL_GAIN,
};

use report::{render_csv, short, si, Format, Report};

/// Simulator and analysis toolkit for dc magnetometry with modulated flux
/// concentrators.
#[derive(Parser)]
#[command(name = "fluxmag", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Budget(BudgetArgs),
    Ledger(LedgerArgs),
    Fringe(FringeArgs),
    Sweep(SweepArgs),
    Phase(PhaseArgs),
    Contrast(ContrastArgs),
    Photons(PhotonsArgs),
    Synth(SynthArgs),
    Asd(AsdArgs),
}

/// Stdout format and optional CSV artifact path, shared by every subcommand.
#[derive(Args)]
struct OutputArgs {
    /// Stdout format: aligned table, the CSV artifact, or a JSON mirror of
    /// the table including raw curve data.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also write the command's CSV artifact to this path (always CSV,
    /// regardless of --format).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Evaluate the sensitivity budget of every protocol in a scenario.
///
/// One row per protocol; the final column is the predicted sensitivity in
/// T/sqrt(Hz). The CSV artifact carries raw SI values (times in s), the
/// table shows rounded engineering notation.
#[derive(Args)]
struct BudgetArgs {
    /// Scenario file path, or a bundled name: table_s1.cfg,
    /// table_s3_present.cfg, table_s3_improved.cfg.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    #[command(flatten)]
    output: OutputArgs,
}

/// Factorize the sensitivity improvement between two scenarios.
///
/// Each changed parameter contributes one multiplicative factor; the factors
/// compose exactly to the direct sensitivity ratio. The closing rows give
/// both that ratio and the product of factors rounded to one decimal place,
/// the convention budget tables print.
#[derive(Args)]
struct LedgerArgs {
    /// Baseline scenario (file path or bundled name).
    #[arg(long)]
    from: String,
    /// Improved scenario (file path or bundled name).
    #[arg(long)]
    to: String,
    /// Protocol name inside --from (default: its first protocol).
    #[arg(long)]
    from_protocol: Option<String>,
    /// Protocol name inside --to (default: its first protocol).
    #[arg(long)]
    to_protocol: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SeqArg {
    /// Ramsey when the protocol coefficient A is 1, spin echo otherwise.
    Auto,
    Ramsey,
    Echo,
}

/// Export a differential readout fringe S(B_a) for one protocol.
///
/// The curve is S = 2·C·e^(-(tau/T_coh)^p)·sin(kappa·B_a) over an
/// applied-field grid in tesla; the report gives the per-tesla response,
/// fringe period, and maximum slope.
#[derive(Args)]
struct FringeArgs {
    /// Scenario file path or bundled name.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// Protocol name (default: the scenario's first protocol).
    #[arg(long)]
    protocol: Option<String>,
    /// Pulse sequence the fringe is computed for.
    #[arg(long, value_enum, default_value_t = SeqArg::Auto)]
    sequence: SeqArg,
    /// Number of field samples.
    #[arg(long, default_value_t = 241)]
    points: usize,
    /// Total applied-field span in T (default: one fringe period).
    #[arg(long)]
    span: Option<f64>,
    /// Center applied field in T.
    #[arg(long, default_value_t = 0.0)]
    center: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SweepQuantity {
    /// Concentrator magnification G vs gap width (m).
    Magnification,
    /// Modulation efficiency E_F vs vibration amplitude (m).
    Efficiency,
    /// Sensitivity eta vs free-evolution time (s).
    EtaTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum FitArg {
    /// Two-anchor fit to the magnetostatic simulation.
    Simulated,
    /// Simulated fit rescaled to the measured magnification.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum CurveArg {
    /// Monotone interpolation of the measured gap-field anchors.
    Measured,
    /// Ideal reluctance curve calibrated to --target-ef at full depth.
    Ideal,
}

/// Sweep one model quantity over a grid and export the curve as CSV.
///
/// Grids are in the SI unit of the swept variable: meters for
/// magnification (gap width) and efficiency (vibration amplitude), seconds
/// for eta-tau (free-evolution time).
#[derive(Args)]
struct SweepArgs {
    /// Quantity to sweep.
    #[arg(value_enum)]
    quantity: SweepQuantity,
    /// Scenario file path or bundled name.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// Grid minimum (m or s; default depends on the quantity).
    #[arg(long)]
    min: Option<f64>,
    /// Grid maximum (m or s; default depends on the quantity).
    #[arg(long)]
    max: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Log-spaced grid (requires a positive --min).
    #[arg(long)]
    log: bool,
    /// Concentrator fit used by the magnification sweep.
    #[arg(long, value_enum, default_value_t = FitArg::Simulated)]
    fit: FitArg,
    /// Transfer curve used by the efficiency sweep.
    #[arg(long, value_enum, default_value_t = CurveArg::Measured)]
    curve: CurveArg,
    /// Equilibrium chip height in m for the efficiency sweep (default: the
    /// scenario's modulation block).
    #[arg(long)]
    h_eq: Option<f64>,
    /// Full-depth modulation efficiency the ideal curve is calibrated to.
    #[arg(long, default_value_t = 0.568)]
    target_ef: f64,
    /// Protocol name for the eta-tau sweep (default: first in the scenario).
    #[arg(long)]
    protocol: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Sweep the trigger phase of the synchronized modulation over a full turn.
///
/// At each phase in [0, 2pi) the spin-echo response to the modulated field
/// is evaluated and divided by the equilibrium field, giving the signed
/// per-tesla response in rad/T. Requires f_mod·tau within a factor 2 of 1.
#[derive(Args)]
struct PhaseArgs {
    /// Scenario file path or bundled name.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// Protocol name (default: the scenario's first spin-echo protocol).
    #[arg(long)]
    protocol: Option<String>,
    /// Transfer curve the chip height is mapped through.
    #[arg(long, value_enum, default_value_t = CurveArg::Measured)]
    curve: CurveArg,
    /// Number of phases across [0, 2pi).
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ContrastSweep {
    /// Effective contrast vs mean remanence (T).
    Remanence,
    /// Ensemble-averaged signal vs applied field (T) over one fringe period.
    Field,
}

/// Ensemble-averaged contrast under concentrator dispersion.
///
/// Averages the fringe over Gaussian spreads of magnification and remanence
/// (scenario [dispersion] block) and reports the effective contrast; the
/// CSV artifact is the selected sweep curve.
#[derive(Args)]
struct ContrastArgs {
    /// Scenario file path or bundled name.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// Curve to export.
    #[arg(long, value_enum, default_value_t = ContrastSweep::Remanence)]
    sweep: ContrastSweep,
    /// Number of grid points (default: 26 for remanence, 241 for field).
    #[arg(long)]
    points: Option<usize>,
    /// Remanence grid maximum in T.
    #[arg(long, default_value_t = 50e-6)]
    max: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SetupArg {
    /// The scenario's [optical] block.
    Scenario,
    /// Built-in present setup.
    Current,
    /// Built-in improved projection.
    Improved,
}

/// Detected-photon budget and per-depth photoluminescence profile.
///
/// Integrates the saturating single-NV rate over the attenuated excitation
/// column; the CSV artifact is the per-depth profile (depth in m, detected
/// photons per measurement per meter of column).
#[derive(Args)]
struct PhotonsArgs {
    /// Scenario file path or bundled name.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// Optical parameter set to evaluate.
    #[arg(long, value_enum, default_value_t = SetupArg::Scenario)]
    setup: SetupArg,
    /// Number of profile points.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

/// Synthesize a seeded magnetometer record (white floor plus tones).
///
/// The record is written to --out as time_s,field_T rows with sampling
/// rate, seed, and tone declarations in comments, so `asd` can mask and
/// recover the tones without re-supplying them. `--format csv` prints the
/// identical record to stdout instead.
#[derive(Args)]
struct SynthArgs {
    /// Scenario file path or bundled name; its [dsp] block supplies
    /// defaults for every flag below.
    #[arg(long, default_value = "table_s1.cfg")]
    scenario: String,
    /// RNG seed; the same seed reproduces the record bit for bit.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling rate in Hz.
    #[arg(long)]
    fs: Option<f64>,
    /// Record duration in s.
    #[arg(long)]
    duration: Option<f64>,
    /// White-noise amplitude spectral density in T/sqrt(Hz).
    #[arg(long)]
    floor: Option<f64>,
    /// Injected tone as freq_Hz,amplitude_T[,phase_rad]; repeatable,
    /// replaces the scenario's tone list.
    #[arg(long, value_parser = parse_tone, value_name = "F,A[,PH]")]
    tone: Vec<Tone>,
    /// Add 1/f drift with this corner frequency in Hz (where drift equals
    /// the white floor).
    #[arg(long, value_name = "HZ")]
    drift_corner: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Welch amplitude spectral density of a record produced by synth (or any
/// uniform time_s,field_T CSV).
///
/// Prints the median noise floor over --band with declared tones masked,
/// and the window-gain-corrected amplitude of each declared tone. The CSV
/// artifact is the one-sided spectrum in T/sqrt(Hz).
#[derive(Args)]
struct AsdArgs {
    /// Input record CSV (time_s,field_T).
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Welch window length in samples (Blackman-Harris).
    #[arg(long, default_value_t = 1380)]
    window: usize,
    /// Fractional segment overlap in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    /// Noise-floor band lo_Hz,hi_Hz.
    #[arg(long, value_parser = parse_band, default_value = "0.02,0.5", value_name = "LO,HI")]
    band: (f64, f64),
    /// Extra tone frequency in Hz to recover; repeatable.
    #[arg(long, value_name = "HZ")]
    tone: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let (report, output) = match &cli.command {
        Command::Budget(a) => (cmd_budget(a)?, &a.output),
        Command::Ledger(a) => (cmd_ledger(a)?, &a.output),
        Command::Fringe(a) => (cmd_fringe(a)?, &a.output),
        Command::Sweep(a) => (cmd_sweep(a)?, &a.output),
        Command::Phase(a) => (cmd_phase(a)?, &a.output),
        Command::Contrast(a) => (cmd_contrast(a)?, &a.output),
        Command::Photons(a) => (cmd_photons(a)?, &a.output),
        Command::Synth(a) => (cmd_synth(a)?, &a.output),
        Command::Asd(a) => (cmd_asd(a)?, &a.output),
    };
    if let Some(path) = &output.out {
        let artifact = report
            .csv
            .as_ref()
            .cloned()
            .unwrap_or_else(|| render_csv(&report.headers, &report.rows));
        std::fs::write(path, artifact)?;
    }
    emit(&report.render(output.format))
}

/// Writes to stdout, treating a closed pipe as a normal exit rather than a
/// panic so `fluxmag ... | head` works.
fn emit(text: &str) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => Ok(other?),
    }
}

fn consts() -> PhysicalConstants {
    PhysicalConstants::default()
}

fn bad(message: String) -> Error {
    Error::Domain(message)
}

fn parse_tone(s: &str) -> std::result::Result<Tone, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 && parts.len() != 3 {
        return Err(format!(
            "tone wants freq_Hz,amplitude_T[,phase_rad], got {s:?}"
        ));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("tone field is not a number: {p:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(Tone {
        frequency: nums[0],
        amplitude: nums[1],
        phase: nums.get(2).copied().unwrap_or(0.0),
    })
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("band wants lo_Hz,hi_Hz, got {s:?}"))?;
    let parse = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| format!("band edge is not a number: {p:?}"))
    };
    Ok((parse(lo)?, parse(hi)?))
}

fn pick_protocol<'a>(cfg: &'a ScenarioConfig, name: Option<&str>) -> Result<&'a NamedProtocol> {
    match name {
        None => cfg
            .protocols
            .first()
            .ok_or_else(|| bad("scenario defines no protocols".into())),
        Some(n) => cfg.protocols.iter().find(|p| p.name == n).ok_or_else(|| {
            let names: Vec<&str> = cfg.protocols.iter().map(|p| p.name.as_str()).collect();
            bad(format!(
                "protocol {n:?} not in scenario; available: {}",
                names.join(", ")
            ))
        }),
    }
}

/// First spin-echo protocol (A != 1), falling back to the first protocol.
fn pick_echo_protocol<'a>(
    cfg: &'a ScenarioConfig,
    name: Option<&str>,
) -> Result<&'a NamedProtocol> {
    if name.is_some() {
        return pick_protocol(cfg, name);
    }
    cfg.protocols
        .iter()
        .find(|p| (p.params.a_coeff - 1.0).abs() > 1e-9)
        .map_or_else(|| pick_protocol(cfg, None), Ok)
}

fn sequence_for(p: &ProtocolParams, arg: SeqArg) -> SequenceKind {
    match arg {
        SeqArg::Ramsey => SequenceKind::Ramsey,
        SeqArg::Echo => SequenceKind::SpinEcho,
        SeqArg::Auto if (p.a_coeff - 1.0).abs() < 1e-9 => SequenceKind::Ramsey,
        SeqArg::Auto => SequenceKind::SpinEcho,
    }
}

fn kind_name(kind: SequenceKind) -> &'static str {
    match kind {
        SequenceKind::Ramsey => "ramsey",
        SequenceKind::SpinEcho => "spin echo",
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad(format!(
            "grid needs finite min < max, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(bad(format!("grid needs at least 2 points, got {n}")));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

fn logspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && lo > 0.0) {
        return Err(bad(format!("log grid needs a positive minimum, got {lo}")));
    }
    Ok(linspace(lo.ln(), hi.ln(), n)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn grid(lo: f64, hi: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if log {
        logspace(lo, hi, n)
    } else {
        linspace(lo, hi, n)
    }
}

fn pairs_csv(header: (&str, &str), x: &[f64], y: &[f64]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{},{}", header.0, header.1);
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

fn eta_pretty(eta: f64) -> String {
    format!("{}/sqrt(Hz)", si(eta, 2, "T"))
}

/// Value formatting for budget and ledger cells, chosen per parameter.
fn param_cell(name: &str, value: f64) -> String {
    match name {
        "T_coh" | "tau" | "t_m" => si(value, 3, "s"),
        "N" => format!("{value:.2e}"),
        _ => short(value),
    }
}

fn cmd_budget(args: &BudgetArgs) -> Result<Report> {
    let consts = consts();
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let headers = vec![
        "protocol",
        "A",
        "G",
        "alpha",
        "E_F",
        "C",
        "N",
        "T_coh",
        "p",
        "tau",
        "t_m",
        "n_f",
        "sensitivity",
    ];
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    let mut protocols = Vec::new();
    for np in &cfg.protocols {
        let p = &np.params;
        let eta = evaluate_sensitivity(p, &consts)?;
        rows.push(vec![
            np.name.clone(),
            short(p.a_coeff),
            short(p.magnification),
            short(p.angle_factor),
            short(p.mod_efficiency),
            short(p.contrast),
            format!("{:.2e}", p.photons),
            si(p.coherence_time, 3, "s"),
            short(p.stretch_exp),
            si(p.evolution_time, 3, "s"),
            si(p.overhead_time, 3, "s"),
            short(p.noise_ratio),
            eta_pretty(eta),
        ]);
        csv_rows.push(vec![
            np.name.clone(),
            p.a_coeff.to_string(),
            p.magnification.to_string(),
            p.angle_factor.to_string(),
            p.mod_efficiency.to_string(),
            p.contrast.to_string(),
            p.photons.to_string(),
            p.coherence_time.to_string(),
            p.stretch_exp.to_string(),
            p.evolution_time.to_string(),
            p.overhead_time.to_string(),
            p.noise_ratio.to_string(),
            p.delta_ms.to_string(),
            eta.to_string(),
        ]);
        protocols.push(json!({
            "name": np.name,
            "params": p,
            "duty_cycle": duty_cycle(p)?,
            "eta_T_per_sqrtHz": eta,
            "eta": eta_pretty(eta),
        }));
    }
    let csv_headers = vec![
        "protocol",
        "A",
        "G",
        "alpha",
        "E_F",
        "C",
        "N",
        "T_coh_s",
        "p",
        "tau_s",
        "t_m_s",
        "n_f",
        "delta_ms",
        "eta_T_per_sqrtHz",
    ];
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "budget",
            "scenario": args.scenario,
            "protocols": protocols,
        }),
        csv: Some(render_csv(&csv_headers, &csv_rows)),
    })
}

fn cmd_ledger(args: &LedgerArgs) -> Result<Report> {
    let consts = consts();
    let from = ScenarioConfig::resolve(&args.from)?;
    let to = ScenarioConfig::resolve(&args.to)?;
    let present = pick_protocol(&from, args.from_protocol.as_deref())?;
    let improved = pick_protocol(&to, args.to_protocol.as_deref())?;
    let ledger = improvement_ledger(&present.params, &improved.params, &consts)?;

    let headers = vec!["parameter", "present", "improved", "factor"];
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for e in &ledger.entries {
        rows.push(vec![
            e.parameter.to_string(),
            param_cell(e.parameter, e.present),
            param_cell(e.parameter, e.improved),
            format!("{:.1}", e.factor),
        ]);
        csv_rows.push(vec![
            e.parameter.to_string(),
            e.present.to_string(),
            e.improved.to_string(),
            e.factor.to_string(),
        ]);
    }
    rows.push(vec![
        "eta".into(),
        eta_pretty(ledger.eta_present),
        eta_pretty(ledger.eta_improved),
        format!("{:.1}", ledger.total_ratio),
    ]);
    rows.push(vec![
        "rounded factors".into(),
        String::new(),
        String::new(),
        format!("{:.1}", ledger.rounded_factor_product),
    ]);
    csv_rows.push(vec![
        "eta".into(),
        ledger.eta_present.to_string(),
        ledger.eta_improved.to_string(),
        ledger.total_ratio.to_string(),
    ]);
    csv_rows.push(vec![
        "rounded_factors".into(),
        String::new(),
        String::new(),
        ledger.rounded_factor_product.to_string(),
    ]);
    let csv = render_csv(&headers, &csv_rows);
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "ledger",
            "from": args.from,
            "to": args.to,
            "from_protocol": present.name,
            "to_protocol": improved.name,
            "ledger": ledger,
        }),
        csv: Some(csv),
    })
}

fn cmd_fringe(args: &FringeArgs) -> Result<Report> {
    let consts = consts();
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let np = pick_protocol(&cfg, args.protocol.as_deref())?;
    let p = &np.params;
    let kind = sequence_for(p, args.sequence);
    let seq = PulseSequence::new(kind, p.evolution_time)?;
    let period = fringe_period(p, &seq, &consts)?;
    let span = args.span.unwrap_or(period);
    if !(span.is_finite() && span > 0.0) {
        return Err(bad(format!("span must be positive, got {span}")));
    }
    let grid = linspace(
        args.center - span / 2.0,
        args.center + span / 2.0,
        args.points,
    )?;
    let curve = fringe_curve(p, &seq, &consts, &grid)?;
    let kappa = per_tesla_response(p, &seq, &consts)?;
    let amplitude =
        DIFFERENTIAL_GAIN * p.contrast * decay_envelope(seq.tau, p.coherence_time, p.stretch_exp)?;
    let slope = max_slope(&curve)?;

    let headers = vec!["quantity", "value"];
    let rows = vec![
        vec!["scenario".into(), args.scenario.clone()],
        vec!["protocol".into(), np.name.clone()],
        vec!["sequence".into(), kind_name(kind).into()],
        vec!["per-tesla response".into(), format!("{kappa:.6e} rad/T")],
        vec!["fringe period".into(), si(period, 3, "T")],
        vec!["differential amplitude".into(), format!("{amplitude:.3e}")],
        vec![
            "max |dS/dB|".into(),
            format!(
                "{:.3} /mT at {}",
                slope.slope * 1e-3,
                si(slope.at_field, 3, "T")
            ),
        ],
        vec![
            "grid".into(),
            format!("{} points over {}", args.points, si(span, 3, "T")),
        ],
    ];
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "fringe",
            "scenario": args.scenario,
            "protocol": np.name,
            "sequence": kind_name(kind),
            "kappa_rad_per_T": kappa,
            "period_T": period,
            "amplitude": amplitude,
            "slope": slope,
            "curve": curve,
        }),
        csv: Some(pairs_csv(
            ("field_T", "signal"),
            &curve.applied_field,
            &curve.signal,
        )),
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<Report> {
    let consts = consts();
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    match args.quantity {
        SweepQuantity::Magnification => {
            let fit = match args.fit {
                FitArg::Simulated => ConcentratorFit::simulated(),
                FitArg::Measured => ConcentratorFit::measured(),
            };
            let lo = args.min.unwrap_or(1e-5);
            let hi = args.max.unwrap_or(1e-3);
            let d = grid(lo, hi, args.points, args.log)?;
            let g: Vec<f64> = d
                .iter()
                .map(|&x| fit.magnification(x))
                .collect::<Result<_>>()?;
            let headers = vec!["quantity", "value"];
            let rows = vec![
                vec!["sweep".into(), "magnification vs gap width".into()],
                vec![
                    "fit".into(),
                    format!(
                        "a = {:.4e} m, b = {:.4e} m, scale = {}",
                        fit.a,
                        fit.b,
                        short(fit.calibration_scale)
                    ),
                ],
                vec![
                    "G(0.4 mm)".into(),
                    format!("{:.1}", fit.magnification(0.4e-3)?),
                ],
                vec![
                    "G(0.04 mm)".into(),
                    format!("{:.1}", fit.magnification(0.04e-3)?),
                ],
                vec![
                    "grid".into(),
                    format!(
                        "{} points over [{}, {}]",
                        args.points,
                        si(lo, 3, "m"),
                        si(hi, 3, "m")
                    ),
                ],
            ];
            Ok(Report {
                headers,
                rows,
                json: json!({
                    "command": "sweep",
                    "quantity": "magnification",
                    "fit": fit,
                    "distance_m": d,
                    "magnification": g,
                }),
                csv: Some(pairs_csv(("distance_m", "magnification"), &d, &g)),
            })
        }
        SweepQuantity::Efficiency => {
            let h_eq = args.h_eq.unwrap_or(cfg.modulation.h_eq);
            // B_sat matters only as an overall field scale; efficiency is a
            // field ratio, so any positive value serves the ideal curve.
            let curve = match args.curve {
                CurveArg::Measured => TransferCurve::measured_default(),
                CurveArg::Ideal => {
                    TransferCurve::ideal_with_efficiency(10.47 * GAUSS, h_eq, args.target_ef)?
                }
            };
            let (dom_lo, dom_hi) = curve.domain();
            let default_hi = (h_eq - dom_lo).min(dom_hi - h_eq);
            let lo = args.min.unwrap_or(0.0);
            let hi = args.max.unwrap_or(default_hi);
            let a = grid(lo, hi, args.points, args.log)?;
            let ec = efficiency_vs_amplitude(h_eq, &a, &curve)?;
            let full = ec.efficiency.last().copied().unwrap_or(0.0);
            let headers = vec!["quantity", "value"];
            let rows = vec![
                vec!["sweep".into(), "modulation efficiency vs amplitude".into()],
                vec![
                    "transfer curve".into(),
                    match args.curve {
                        CurveArg::Measured => "measured anchors".to_string(),
                        CurveArg::Ideal => {
                            format!("ideal, E_F = {} at full depth", short(args.target_ef))
                        }
                    },
                ],
                vec!["h_eq".into(), si(h_eq, 3, "m")],
                vec![
                    "E_F at max amplitude".into(),
                    format!("{:.4} ({:.2}%)", full, full * 100.0),
                ],
                vec![
                    "grid".into(),
                    format!(
                        "{} points over [{}, {}]",
                        args.points,
                        si(lo, 3, "m"),
                        si(hi, 3, "m")
                    ),
                ],
            ];
            Ok(Report {
                headers,
                rows,
                json: json!({
                    "command": "sweep",
                    "quantity": "efficiency",
                    "h_eq_m": h_eq,
                    "curve": ec,
                }),
                csv: Some(pairs_csv(
                    ("amplitude_m", "efficiency"),
                    &ec.amplitude,
                    &ec.efficiency,
                )),
            })
        }
        SweepQuantity::EtaTau => {
            let np = pick_protocol(&cfg, args.protocol.as_deref())?;
            let p = &np.params;
            let lo = args.min.unwrap_or(0.05 * p.coherence_time);
            let hi = args.max.unwrap_or(3.0 * p.coherence_time);
            let tau = grid(lo, hi, args.points, args.log)?;
            let eta: Vec<f64> = tau
                .iter()
                .map(|&t| {
                    evaluate_sensitivity(
                        &ProtocolParams {
                            evolution_time: t,
                            ..*p
                        },
                        &consts,
                    )
                })
                .collect::<Result<_>>()?;
            let (i_best, &eta_best) = eta
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .expect("grid is nonempty");
            let eta_at_configured = evaluate_sensitivity(p, &consts)?;
            let headers = vec!["quantity", "value"];
            let rows = vec![
                vec!["sweep".into(), "sensitivity vs evolution time".into()],
                vec!["protocol".into(), np.name.clone()],
                vec!["tau* (grid minimum)".into(), si(tau[i_best], 3, "s")],
                vec!["eta(tau*)".into(), eta_pretty(eta_best)],
                vec![
                    format!("eta at configured tau = {}", si(p.evolution_time, 3, "s")),
                    eta_pretty(eta_at_configured),
                ],
                vec![
                    "grid".into(),
                    format!(
                        "{} points over [{}, {}]",
                        args.points,
                        si(lo, 3, "s"),
                        si(hi, 3, "s")
                    ),
                ],
            ];
            Ok(Report {
                headers,
                rows,
                json: json!({
                    "command": "sweep",
                    "quantity": "eta-tau",
                    "protocol": np.name,
                    "tau_star_s": tau[i_best],
                    "eta_star_T_per_sqrtHz": eta_best,
                    "tau_s": tau,
                    "eta_T_per_sqrtHz": eta,
                }),
                csv: Some(pairs_csv(("tau_s", "eta_T_per_sqrtHz"), &tau, &eta)),
            })
        }
    }
}

fn cmd_phase(args: &PhaseArgs) -> Result<Report> {
    let consts = consts();
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let np = pick_echo_protocol(&cfg, args.protocol.as_deref())?;
    let p = &np.params;
    let drive = cfg.modulation.drive()?;
    let seq = PulseSequence::new(SequenceKind::SpinEcho, p.evolution_time)?;
    let curve = match args.curve {
        CurveArg::Measured => TransferCurve::measured_default(),
        CurveArg::Ideal => TransferCurve::ideal_with_efficiency(10.47 * GAUSS, drive.h_eq, 0.568)?,
    };
    let sweep = phase_sweep(&drive, &seq, &curve, &consts, args.points)?;
    let i_opt = sweep
        .phase
        .iter()
        .position(|&ph| ph == sweep.optimal_phase)
        .expect("optimal phase comes from the sweep grid");
    let cycles = drive.f_mod * seq.tau;

    let headers = vec!["quantity", "value"];
    let rows = vec![
        vec!["scenario".into(), args.scenario.clone()],
        vec!["protocol".into(), np.name.clone()],
        vec![
            "modulation".into(),
            format!(
                "{} at {}, h_eq {}",
                si(drive.f_mod, 4, "Hz"),
                si(drive.amplitude, 3, "m"),
                si(drive.h_eq, 3, "m")
            ),
        ],
        vec!["f_mod x tau".into(), format!("{cycles:.4} cycles")],
        vec![
            "optimal phase".into(),
            format!(
                "{:.4} rad ({:.1} deg)",
                sweep.optimal_phase,
                sweep.optimal_phase.to_degrees()
            ),
        ],
        vec![
            "response at optimum".into(),
            format!("{:.6e} rad/T", sweep.response[i_opt]),
        ],
        vec![
            "fringe frequency at optimum".into(),
            format!("{:.6e} 1/T", sweep.fringe_frequency[i_opt]),
        ],
    ];
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "phase",
            "scenario": args.scenario,
            "protocol": np.name,
            "cycles": cycles,
            "sweep": sweep,
        }),
        csv: Some(pairs_csv(
            ("phase_rad", "response_rad_per_T"),
            &sweep.phase,
            &sweep.response,
        )),
    })
}

fn cmd_contrast(args: &ContrastArgs) -> Result<Report> {
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let d = cfg.dispersion;
    let opts = QuadratureOptions::default();
    let c_eff = effective_contrast(&d, &opts)?;
    let summary = |sweep: &str| -> Vec<Vec<String>> {
        vec![
            vec!["scenario".into(), args.scenario.clone()],
            vec!["sweep".into(), sweep.into()],
            vec!["kappa".into(), format!("{:.6e} rad/T", d.kappa)],
            vec!["intrinsic contrast".into(), short(d.contrast)],
            vec![
                "spreads".into(),
                format!(
                    "k = {}, m = {}, B_r0 = {}",
                    short(d.magnification_spread),
                    short(d.remanence_spread),
                    si(d.remanence, 3, "T")
                ),
            ],
            vec!["effective contrast".into(), format!("{c_eff:.4e}")],
            vec!["reduction".into(), format!("{:.3}", c_eff / d.contrast)],
        ]
    };
    let headers = vec!["quantity", "value"];
    match args.sweep {
        ContrastSweep::Remanence => {
            let n = args.points.unwrap_or(26);
            let grid = linspace(0.0, args.max, n)?;
            let curve = contrast_vs_remanence(&d, &grid, &opts)?;
            Ok(Report {
                headers,
                rows: summary("effective contrast vs remanence"),
                json: json!({
                    "command": "contrast",
                    "scenario": args.scenario,
                    "dispersion": d,
                    "effective_contrast": c_eff,
                    "curve": curve,
                }),
                csv: Some(pairs_csv(
                    ("remanence_T", "effective_contrast"),
                    &curve.remanence,
                    &curve.contrast,
                )),
            })
        }
        ContrastSweep::Field => {
            let n = args.points.unwrap_or(241);
            let period = TAU / (d.kappa * d.magnification);
            let grid = linspace(-period / 2.0, period / 2.0, n)?;
            let signal: Vec<f64> = grid
                .iter()
                .map(|&b| ensemble_cosine_signal(b, &d, &opts))
                .collect::<Result<_>>()?;
            Ok(Report {
                headers,
                rows: summary("ensemble signal vs applied field"),
                json: json!({
                    "command": "contrast",
                    "scenario": args.scenario,
                    "dispersion": d,
                    "effective_contrast": c_eff,
                    "field_T": grid,
                    "ensemble_signal": signal,
                }),
                csv: Some(pairs_csv(("field_T", "ensemble_signal"), &grid, &signal)),
            })
        }
    }
}

fn cmd_photons(args: &PhotonsArgs) -> Result<Report> {
    let consts = consts();
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let (label, o) = match args.setup {
        SetupArg::Scenario => ("scenario [optical] block", cfg.optical),
        SetupArg::Current => ("built-in current setup", OpticalParams::current()),
        SetupArg::Improved => ("built-in improved setup", OpticalParams::improved()),
    };
    let n = photon_number(&o, &consts)?;
    let beta = o.beta(&consts);
    let i0 = o.peak_intensity();
    let surface_rate = pl_rate(i0, o.max_rate, o.saturation_intensity)?;
    let profile = rate_profile(&o, &consts, args.points)?;
    let (depth, per_m): (Vec<f64>, Vec<f64>) = profile.into_iter().unzip();

    let headers = vec!["quantity", "value"];
    let rows = vec![
        vec!["setup".into(), label.into()],
        vec!["laser power".into(), si(o.laser_power, 3, "W")],
        vec!["spot area".into(), format!("{:.3e} m^2", o.spot_area)],
        vec!["peak intensity".into(), format!("{i0:.3e} W/m^2")],
        vec![
            "saturation intensity".into(),
            format!("{:.3e} W/m^2", o.saturation_intensity),
        ],
        vec!["absorption beta".into(), format!("{beta:.2} /m")],
        vec![
            "attenuation over column".into(),
            format!("{:.3}", (-beta * o.max_path).exp()),
        ],
        vec!["surface PL rate per NV".into(), si(surface_rate, 3, "Hz")],
        vec!["detected photons N".into(), format!("{n:.3e}")],
    ];
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "photons",
            "scenario": args.scenario,
            "setup": label,
            "optical": o,
            "beta_per_m": beta,
            "peak_intensity_W_per_m2": i0,
            "surface_rate_Hz": surface_rate,
            "photon_number": n,
            "depth_m": depth,
            "photons_per_m": per_m,
        }),
        csv: Some(pairs_csv(("depth_m", "photons_per_m"), &depth, &per_m)),
    })
}

fn cmd_synth(args: &SynthArgs) -> Result<Report> {
    let cfg = ScenarioConfig::resolve(&args.scenario)?;
    let block = &cfg.dsp;
    if args.output.out.is_none() && args.output.format != Format::Csv {
        return Err(bad(
            "synth writes the record to --out; pass --out FILE or --format csv to print it".into(),
        ));
    }
    let synth = SynthesisConfig {
        target_floor: args.floor.unwrap_or(block.floor),
        fs: args.fs.unwrap_or(block.fs),
        duration: args.duration.unwrap_or(block.duration),
        tones: if args.tone.is_empty() {
            block.tones.clone()
        } else {
            args.tone.clone()
        },
        seed: args.seed,
        drift: args
            .drift_corner
            .map(|corner_hz| DriftModel { corner_hz })
            .or(block.drift),
    };
    let ts = synthesize_timeseries(&synth)?;
    let sigma = synth.target_floor * (synth.fs / 2.0).sqrt();

    let headers = vec!["quantity", "value"];
    let mut rows = vec![
        vec!["samples".into(), ts.len().to_string()],
        vec!["sampling rate".into(), si(synth.fs, 4, "Hz")],
        vec!["duration".into(), si(synth.duration, 4, "s")],
        vec![
            "white floor".into(),
            format!("{}/sqrt(Hz)", si(synth.target_floor, 3, "T")),
        ],
        vec!["per-sample sigma".into(), si(sigma, 3, "T")],
        vec!["seed".into(), synth.seed.to_string()],
        vec![
            "drift".into(),
            match synth.drift {
                Some(d) => format!("1/f below {}", si(d.corner_hz, 3, "Hz")),
                None => "none".into(),
            },
        ],
    ];
    for t in &synth.tones {
        rows.push(vec![
            "tone".into(),
            format!(
                "{} at {}",
                si(t.frequency, 3, "Hz"),
                si(t.amplitude, 3, "T")
            ),
        ]);
    }
    if let Some(path) = &args.output.out {
        rows.push(vec!["output".into(), path.display().to_string()]);
    }
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "synth",
            "scenario": args.scenario,
            "config": synth,
            "samples": ts.len(),
            "sigma_T": sigma,
        }),
        csv: Some(io::timeseries_text(&ts)),
    })
}

fn cmd_asd(args: &AsdArgs) -> Result<Report> {
    let ts = io::read_timeseries(&args.input)?;
    let cfg = WelchConfig {
        window_len: args.window,
        overlap: args.overlap,
    };
    let sp = welch_asd(&ts, &cfg)?;
    let floor = noise_floor(&sp, args.band)?;

    let headers = vec!["quantity", "value"];
    let mut rows = vec![
        vec!["input".into(), args.input.display().to_string()],
        vec!["samples".into(), ts.len().to_string()],
        vec!["sampling rate".into(), si(ts.fs(), 4, "Hz")],
        vec![
            "window".into(),
            format!(
                "{} of {} at {:.0}% overlap",
                sp.meta.name,
                sp.meta.len,
                sp.meta.overlap * 100.0
            ),
        ],
        vec!["segments".into(), sp.meta.segments.to_string()],
        vec!["bin width".into(), si(sp.bin_width(), 4, "Hz")],
        vec![
            format!(
                "median floor in [{}, {}]",
                si(args.band.0, 3, "Hz"),
                si(args.band.1, 3, "Hz")
            ),
            format!("{}/sqrt(Hz)", si(floor, 3, "T")),
        ],
    ];
    let mut tone_reports = Vec::new();
    let declared: Vec<(f64, Option<f64>)> = ts
        .tones()
        .iter()
        .map(|t| (t.frequency, Some(t.amplitude)))
        .chain(args.tone.iter().map(|&f| (f, None)))
        .collect();
    for (freq, declared_amp) in declared {
        let label = format!("tone at {}", si(freq, 3, "Hz"));
        let (cell, recovered) = match recover_tone(&sp, freq) {
            Ok(a) => {
                let note = match declared_amp {
                    Some(d) => format!("{} (declared {})", si(a, 3, "T"), si(d, 3, "T")),
                    None => si(a, 3, "T"),
                };
                (note, Some(a))
            }
            Err(Error::ToneNotDetected { peak, floor, .. }) => (
                format!("not detected (peak {peak:.2e} < 3x floor {floor:.2e})"),
                None,
            ),
            Err(e) => return Err(e),
        };
        rows.push(vec![label, cell]);
        tone_reports.push(json!({
            "frequency_Hz": freq,
            "declared_T": declared_amp,
            "recovered_T": recovered,
        }));
    }
    Ok(Report {
        headers,
        rows,
        json: json!({
            "command": "asd",
            "input": args.input.display().to_string(),
            "meta": sp.meta,
            "band_Hz": [args.band.0, args.band.1],
            "floor_T_per_sqrtHz": floor,
            "tones": tone_reports,
            "frequency_Hz": sp.frequency,
            "asd_T_per_sqrtHz": sp.asd,
        }),
        csv: Some(io::spectrum_text(&sp)),
    })
}
