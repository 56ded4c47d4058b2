//! Command-line front end: pattern/profile extraction, pattern
//! probabilities, high-profile estimation, analytic bounds, the built-in
//! reference table, unseen-symbol prediction, and the convergence
//! experiment. JSON for single results, TSV for tables; all floating
//! output is rounded to 12 significant digits so identical invocations
//! are byte-identical.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage or input
//! error, 3 unconverged result (the result is still printed).

use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use profilest::bounds::BoundsReport;
use profilest::estimators::{convergence_experiment_with, expected_new_symbols, AlphaVector};
use profilest::patterns::{
    canonical_pattern, pattern_of, profile_of, Pattern, Profile, TokenSequence,
};
use profilest::pml_em::{em_pml, EmConfig};
use profilest::pml_exact::{pml_search, pml_trivial, SearchConfig};
use profilest::probability::{pattern_prob_with_budget, Distribution, EvalBudget};
use profilest::Error;

#[derive(Parser)]
#[command(
    name = "profilest",
    version,
    about = "Pattern and profile statistics with high-profile estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Tokens separated by whitespace
    #[value(name = "whitespace-tokens", alias = "whitespace")]
    WhitespaceTokens,
    /// One token per line
    #[value(name = "line-tokens", alias = "lines")]
    LineTokens,
    /// A pattern as space-separated indices, e.g. "1 1 2 3"
    #[value(name = "pattern-literal", alias = "pattern")]
    PatternLiteral,
    /// A profile in caret form, e.g. "2^1 1^2"
    #[value(name = "profile-literal", alias = "profile")]
    ProfileLiteral,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Ml,
    Pml,
}

#[derive(Subcommand)]
enum Command {
    /// Print the pattern and profile of the input
    Pattern {
        #[arg(long, value_enum, default_value = "whitespace-tokens")]
        format: Format,
        /// Input file, or - for standard input
        #[arg(default_value = "-")]
        input: String,
    },
    /// Probability the given distribution assigns to the input's pattern
    Prob {
        #[arg(long, value_enum, default_value = "whitespace-tokens")]
        format: Format,
        #[arg(default_value = "-")]
        input: String,
        /// Comma-separated atom probabilities, e.g. 0.5,0.5
        #[arg(long)]
        dist: String,
        /// Explicit continuous mass; defaults to 1 minus the atom sum
        #[arg(long)]
        q: Option<f64>,
        /// Emit a JSON object instead of plain lines
        #[arg(long)]
        json: bool,
    },
    /// High-profile distribution of the input (JSON)
    Pml {
        #[arg(long, value_enum, default_value = "whitespace-tokens")]
        format: Format,
        #[arg(default_value = "-")]
        input: String,
        /// Exact computation: closed forms plus bounded numeric search
        /// (the default)
        #[arg(long, conflicts_with = "em")]
        exact: bool,
        /// EM approximation over latent assignments
        #[arg(long)]
        em: bool,
        /// Largest support size to consider (exact) or the support size
        /// to fit (EM); exact search requires it when the profile has
        /// singletons
        #[arg(long)]
        kmax: Option<u64>,
        #[arg(long)]
        starts: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        chains: Option<u32>,
        /// Emit a flat TSV row instead of JSON
        #[arg(long)]
        tsv: bool,
    },
    /// Analytic certificates of the input's profile (JSON)
    Bounds {
        #[arg(long, value_enum, default_value = "whitespace-tokens")]
        format: Format,
        #[arg(default_value = "-")]
        input: String,
        /// Emit a flat TSV row instead of JSON
        #[arg(long)]
        tsv: bool,
    },
    /// Verify the built-in reference results for all profiles of length
    /// at most 4
    Table1 {
        /// Emit a JSON array instead of TSV rows
        #[arg(long)]
        json: bool,
    },
    /// Expected number of never-seen symbol values in future draws
    Predict {
        #[arg(long, value_enum, default_value = "whitespace-tokens")]
        format: Format,
        #[arg(default_value = "-")]
        input: String,
        /// Number of future draws
        #[arg(long)]
        future: u64,
        #[arg(long, value_enum, default_value = "ml")]
        estimator: Estimator,
        #[arg(long)]
        kmax: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convergence of the high-profile estimate toward a fixed
    /// composition as the sample grows (TSV)
    Converge {
        /// Comma-separated composition, e.g. 0.6,0.4
        #[arg(long)]
        alpha: String,
        /// Comma-separated sample sizes, e.g. 10,20,50,100
        #[arg(long)]
        n: String,
        #[arg(long)]
        kmax: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Emit a JSON array instead of the TSV table
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn budget_from_env() -> EvalBudget {
    match std::env::var("PROFILEST_MAX_WORK") {
        Ok(v) => match v.parse::<f64>() {
            Ok(cap) if cap > 0.0 => EvalBudget::new(cap),
            _ => EvalBudget::default(),
        },
        Err(_) => EvalBudget::default(),
    }
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Pattern { format, input } => cmd_pattern(format, &input),
        Command::Prob {
            format,
            input,
            dist,
            q,
            json,
        } => cmd_prob(format, &input, &dist, q, json),
        Command::Pml {
            format,
            input,
            exact: _,
            em,
            kmax,
            starts,
            seed,
            iterations,
            chains,
            tsv,
        } => cmd_pml(format, &input, em, kmax, starts, seed, iterations, chains, tsv),
        Command::Bounds { format, input, tsv } => cmd_bounds(format, &input, tsv),
        Command::Table1 { json } => cmd_table1(json),
        Command::Predict {
            format,
            input,
            future,
            estimator,
            kmax,
            seed,
        } => cmd_predict(format, &input, future, estimator, kmax, seed),
        Command::Converge {
            alpha,
            n,
            kmax,
            seed,
            json,
        } => cmd_converge(&alpha, &n, kmax, seed, json),
    }
}

fn read_input(path: &str) -> Result<String, Error> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Error::InvalidInput(format!("reading stdin: {e}")))?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("reading {path}: {e}")))
    }
}

/// The input reduced to a profile plus a pattern carrying it (profile
/// literals determine the canonical pattern).
fn load_profile(format: Format, path: &str) -> Result<(Profile, Pattern), Error> {
    let text = read_input(path)?;
    match format {
        Format::WhitespaceTokens => {
            let seq = TokenSequence::from_whitespace(&text)?;
            let pattern = pattern_of(&seq);
            Ok((profile_of(&pattern), pattern))
        }
        Format::LineTokens => {
            let seq = TokenSequence::from_tokens(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_owned),
            )?;
            let pattern = pattern_of(&seq);
            Ok((profile_of(&pattern), pattern))
        }
        Format::PatternLiteral => {
            let pattern = Pattern::parse(&text)?;
            Ok((profile_of(&pattern), pattern))
        }
        Format::ProfileLiteral => {
            let profile = Profile::parse_text(&text)?;
            let pattern = canonical_pattern(&profile);
            Ok((profile, pattern))
        }
    }
}

fn cmd_pattern(format: Format, input: &str) -> Result<u8, Error> {
    let (profile, pattern) = load_profile(format, input)?;
    println!("{pattern}");
    println!("{}", profile.to_text());
    Ok(0)
}

fn parse_dist(dist: &str, q: Option<f64>) -> Result<Distribution, Error> {
    let atoms = dist
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad probability {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match q {
        Some(q) => Distribution::with_continuous(atoms, q),
        None => Distribution::new(atoms),
    }
}

fn cmd_prob(format: Format, input: &str, dist: &str, q: Option<f64>, json: bool) -> Result<u8, Error> {
    let (_, pattern) = load_profile(format, input)?;
    let d = parse_dist(dist, q)?;
    let p = pattern_prob_with_budget(&d, &pattern, &budget_from_env())?;
    if json {
        let value = serde_json::json!({
            "probability": round_sig12(p.value),
            "log2_probability": round_sig12(p.log2_value()),
        });
        println!("{}", serde_json::to_string_pretty(&value).expect("valid JSON"));
    } else {
        println!("{}", sig12(p.value));
        println!("{}", sig12(p.log2_value()));
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_pml(
    format: Format,
    input: &str,
    em: bool,
    kmax: Option<u64>,
    starts: Option<u32>,
    seed: Option<u64>,
    iterations: Option<u32>,
    chains: Option<u32>,
    tsv: bool,
) -> Result<u8, Error> {
    let (profile, pattern) = load_profile(format, input)?;
    let budget = budget_from_env();
    let result = if profilest::patterns::is_trivial(&profile) {
        pml_trivial(&profile)?
    } else if em {
        let mut cfg = EmConfig {
            k: kmax.unwrap_or_else(|| profile.m()),
            q_enabled: profile.phi1() > 0 && !profilest::bounds::is_discrete_forced(&profile),
            budget,
            ..EmConfig::default()
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(i) = iterations {
            cfg.iterations = i;
        }
        if let Some(c) = chains {
            cfg.chains = c;
        }
        em_pml(&pattern, &cfg)?
    } else {
        let mut cfg = SearchConfig {
            budget,
            ..SearchConfig::default()
        };
        if let Some(kmax) = kmax {
            let floor = profile.m().saturating_sub(profile.phi1()).max(1);
            cfg.k_range_override = Some(floor..=kmax);
        }
        if let Some(s) = starts {
            cfg.starts = s;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(i) = iterations {
            cfg.max_iterations = i;
        }
        pml_search(&profile, &cfg)?
    };
    if tsv {
        let atoms: Vec<String> = result
            .distribution
            .atoms()
            .iter()
            .map(|&a| sig12(a))
            .collect();
        println!("k\tq\tprobability\tlog_probability\tmethod\tconverged\tatoms");
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            result.distribution.k(),
            sig12(result.distribution.continuous_mass()),
            sig12(result.probability),
            sig12(result.log2_probability()),
            method_name(&result),
            result.converged,
            atoms.join(",")
        );
    } else {
        println!("{}", to_rounded_json(&result)?);
    }
    Ok(if result.converged { 0 } else { 3 })
}

fn method_name(result: &profilest::pml_exact::PmlResult) -> String {
    serde_json::to_value(result)
        .ok()
        .and_then(|v| v["method"].as_str().map(str::to_owned))
        .unwrap_or_else(|| "unknown".into())
}

fn cmd_bounds(format: Format, input: &str, tsv: bool) -> Result<u8, Error> {
    let (profile, _) = load_profile(format, input)?;
    let report = BoundsReport::of(&profile)?;
    if tsv {
        let json = serde_json::to_value(&report)
            .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
        let fields = [
            "support_upper",
            "support_lower",
            "continuous_cap",
            "discrete_forced",
            "distinct_values_cap",
            "k_equals_m",
            "s_exceeds_m",
        ];
        println!("{}", fields.join("\t"));
        let cells: Vec<String> = fields
            .iter()
            .map(|f| match &json[f] {
                serde_json::Value::Number(n) if n.is_f64() => {
                    sig12(n.as_f64().expect("checked"))
                }
                other => other.to_string().trim_matches('"').to_owned(),
            })
            .collect();
        println!("{}", cells.join("\t"));
    } else {
        println!("{}", to_rounded_json(&report)?);
    }
    Ok(0)
}

/// Reference results for every nontrivial profile of length at most 4.
fn table1_rows() -> Vec<(&'static str, Vec<f64>, f64)> {
    vec![
        ("2^1", vec![1.0], 0.0),
        ("3^1", vec![1.0], 0.0),
        ("4^1", vec![1.0], 0.0),
        ("1^2", vec![], 1.0),
        ("1^3", vec![], 1.0),
        ("1^4", vec![], 1.0),
        ("2^1 1^1", vec![0.5, 0.5], 0.0),
        ("3^1 1^1", vec![0.5, 0.5], 0.0),
        ("2^2", vec![0.5, 0.5], 0.0),
        ("2^1 1^2", vec![0.2, 0.2, 0.2, 0.2, 0.2], 0.0),
    ]
}

fn cmd_table1(json: bool) -> Result<u8, Error> {
    let budget = budget_from_env();
    let mut all_match = true;
    let mut json_rows = Vec::new();
    for (literal, atoms, q) in table1_rows() {
        let profile = Profile::parse_text(literal)?;
        let pattern = canonical_pattern(&profile);
        let expected = if q > 0.0 {
            Distribution::with_continuous(atoms, q)?
        } else {
            Distribution::new(atoms)?
        };
        let cfg = SearchConfig {
            budget,
            ..SearchConfig::default()
        };
        // singleton profiles need an explicit bracket; the table only goes
        // to n = 4, so a small span past m suffices
        let computed = profilest::pml_exact::pml_search_bounded(&profile, &cfg, 6)?;
        let p_expected =
            profilest::probability::profile_prob_with_budget(&expected, &profile, &budget)?.value;
        let p_computed = computed.probability;
        let row_match = (p_expected - p_computed).abs() <= 1e-6;
        all_match &= row_match;
        if json {
            json_rows.push(serde_json::json!({
                "profile": literal,
                "pattern": pattern.to_string(),
                "expected": fmt_dist(&expected),
                "computed": fmt_dist(&computed.distribution),
                "probability": round_sig12(p_computed),
                "match": row_match,
            }));
        } else {
            println!(
                "{literal}\t{pattern}\t{}\t{}\t{}",
                fmt_dist(&expected),
                fmt_dist(&computed.distribution),
                if row_match { "match" } else { "MISMATCH" }
            );
        }
    }
    if json {
        let value = serde_json::Value::Array(json_rows);
        println!("{}", serde_json::to_string_pretty(&value).expect("valid JSON"));
    }
    Ok(if all_match { 0 } else { 1 })
}

fn cmd_predict(
    format: Format,
    input: &str,
    future: u64,
    estimator: Estimator,
    kmax: Option<u64>,
    seed: Option<u64>,
) -> Result<u8, Error> {
    let (profile, _) = load_profile(format, input)?;
    let observed_m = profile.m() as usize;
    let d = match estimator {
        Estimator::Ml => {
            // relative frequencies are profile-determined
            let n = profile.n() as f64;
            let atoms = profile
                .multiplicities_desc()
                .into_iter()
                .map(|c| c as f64 / n)
                .collect();
            Distribution::new(atoms)?
        }
        Estimator::Pml => {
            let mut cfg = SearchConfig {
                budget: budget_from_env(),
                ..SearchConfig::default()
            };
            if let Some(kmax) = kmax {
                let floor = profile.m().saturating_sub(profile.phi1()).max(1);
                cfg.k_range_override = Some(floor..=kmax);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if profilest::patterns::is_trivial(&profile) {
                pml_trivial(&profile)?.distribution
            } else {
                pml_search(&profile, &cfg)?.distribution
            }
        }
    };
    println!("{}", sig12(expected_new_symbols(&d, observed_m, future)));
    Ok(0)
}

fn cmd_converge(
    alpha: &str,
    n: &str,
    kmax: Option<u64>,
    seed: Option<u64>,
    json: bool,
) -> Result<u8, Error> {
    let alpha_probs = alpha
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad alpha entry {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n_values = n
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| Error::InvalidInput(format!("bad sample size {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let alpha = AlphaVector::new(alpha_probs)?;
    let mut cfg = SearchConfig {
        budget: budget_from_env(),
        ..SearchConfig::default()
    };
    if let Some(kmax) = kmax {
        cfg.k_range_override = Some(1..=kmax);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = convergence_experiment_with(&alpha, &n_values, &cfg)?;
    if json {
        let values: Vec<serde_json::Value> = rows
            .iter()
            .map(|row| {
                serde_json::json!({
                    "n": row.n,
                    "k_hat": row.k_hat,
                    "q_hat": round_sig12(row.q_hat),
                    "d_bits": round_sig12(row.d_bits),
                    "l1": round_sig12(row.l1),
                })
            })
            .collect();
        let value = serde_json::Value::Array(values);
        println!("{}", serde_json::to_string_pretty(&value).expect("valid JSON"));
    } else {
        println!("n\tk_hat\tq_hat\td_bits\tl1");
        for row in rows {
            println!(
                "{}\t{}\t{}\t{}\t{}",
                row.n,
                row.k_hat,
                sig12(row.q_hat),
                sig12(row.d_bits),
                sig12(row.l1)
            );
        }
    }
    Ok(0)
}

fn fmt_dist(d: &Distribution) -> String {
    let atoms: Vec<String> = d.atoms().iter().map(|&a| sig12(a)).collect();
    let q = d.continuous_mass();
    if q > 0.0 {
        format!("({}) q={}", atoms.join(", "), sig12(q))
    } else {
        format!("({})", atoms.join(", "))
    }
}

/// Rounds to 12 significant digits; the shortest round-trip printing of
/// the rounded value keeps golden output stable.
fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - magnitude);
    (x * scale).round() / scale
}

fn sig12(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // 12 significant digits in scientific form, then rendered as plain
    // decimal for moderate exponents; pure string surgery so no second
    // float rounding can reintroduce noise digits
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };
    let body = if (-5..15).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                let mut s = digits.to_string();
                s.push_str(&"0".repeat(int_len - digits.len()));
                s
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        }
    } else if digits.len() == 1 {
        format!("{digits}e{exp}")
    } else {
        format!("{}.{}e{exp}", &digits[..1], &digits[1..])
    };
    format!("{sign}{body}")
}

/// Serializes with every float rounded to 12 significant digits.
fn to_rounded_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    let mut json = serde_json::to_value(value)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    round_json(&mut json);
    serde_json::to_string_pretty(&json)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))
}

fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("checked");
                if let Some(rounded) = serde_json::Number::from_f64(round_sig12(x)) {
                    *n = rounded;
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}
