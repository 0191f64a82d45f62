//! Command-line front end. `run` returns the rendered output and exit code
//! so commands can be exercised without a process.
//!
//! Exit codes: 0 success / medium consistent, 1 input error, 2 weakly but
//! not medium consistent, 3 inconsistent (or a compound query refused on an
//! inconsistent family), 4 a demo check failed.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::CqtError;
use crate::framework::{
    event_projector, noncontextuality_check, pure_truth_values, truth_value, EventMask, Framework,
};
use crate::histories::{
    classify_with, event_probability, ClassifyOptions, DecoherenceReport, DynamicEvent, Family, HistoryIndex,
    Verdict,
};
use crate::numerics::tol;
use crate::oracles::{self, CzInstance, NoGoInstance};
use crate::random;
use crate::report::CheckReport;
use crate::scenario::{Query, Scenario};

pub const REPORT_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_WEAK_ONLY: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cqt", version, about = "Frameworks, histories and consistency checks in finite dimensions")]
pub struct Cli {
    /// Off-diagonal tolerance for consistency checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Seed for demos that draw random instances.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a scenario's family and run its queries.
    Check { file: PathBuf },
    /// Probability of one history, or of a compound event on a consistent family.
    Prob {
        file: PathBuf,
        /// One-based member indices per time, e.g. `1,2`; `1+2,1` expands to
        /// `1,1` and `2,1`. Repeatable.
        #[arg(long = "history", required = true)]
        history: Vec<String>,
    },
    /// Probability of an event of one step's framework.
    Static {
        file: PathBuf,
        /// One-based member indices joined into the event, e.g. `1,3`.
        #[arg(long)]
        event: String,
        /// One-based step.
        #[arg(long, default_value_t = 1)]
        step: usize,
    },
    /// Run a bundled demonstration.
    Demo {
        #[arg(value_enum)]
        name: Demo,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    TwoSlit,
    Mermin,
    Cz,
    Diosi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String, code: i32) -> Self {
        Self { stdout, stderr: String::new(), code }
    }

    fn error(message: impl std::fmt::Display, code: i32) -> Self {
        Self { stdout: String::new(), stderr: format!("error: {message}\n"), code }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let opts = ClassifyOptions { tol: cli.tol.unwrap_or(tol::DEC), ..ClassifyOptions::default() };
    if !(opts.tol.is_finite() && opts.tol >= 0.0) {
        return Outcome::error("--tol must be a finite non-negative number", EXIT_INPUT);
    }
    match &cli.command {
        Command::Check { file } => with_scenario(file, |s| cmd_check(s, opts, cli.format)),
        Command::Prob { file, history } => with_scenario(file, |s| cmd_prob(s, history, opts, cli.format)),
        Command::Static { file, event, step } => with_scenario(file, |s| cmd_static(s, event, *step, cli.format)),
        Command::Demo { name } => cmd_demo(*name, cli.seed, cli.format),
    }
}

fn with_scenario(file: &std::path::Path, f: impl FnOnce(&Scenario) -> Outcome) -> Outcome {
    match Scenario::load(file) {
        Ok(s) => f(&s),
        Err(e) => Outcome::error(e, EXIT_INPUT),
    }
}

fn fmt12(x: f64) -> String {
    format!("{x:.12}")
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Expand `1+2,1` into one-based histories `[1,1]` and `[2,1]`.
pub fn expand_history_spec(spec: &str) -> Result<Vec<Vec<usize>>, CqtError> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for part in spec.split(',') {
        let choices = part
            .split('+')
            .map(|s| match s.trim().parse::<usize>() {
                Ok(j) if j > 0 => Ok(j),
                _ => Err(CqtError::Invalid(format!("bad history index {s:?} in {spec:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&j| {
                    let mut p = prefix.clone();
                    p.push(j);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

fn zero_based(fam: &Family, one_based: &[usize]) -> Result<HistoryIndex, CqtError> {
    let counts = fam.member_counts();
    if one_based.len() != counts.len() {
        return Err(CqtError::Invalid(format!(
            "history has {} indices but the family has {} times",
            one_based.len(),
            counts.len()
        )));
    }
    one_based
        .iter()
        .zip(&counts)
        .map(|(&j, &m)| {
            if j == 0 || j > m {
                Err(CqtError::IndexOutOfRange { what: "member (one-based)", index: j, len: m })
            } else {
                Ok(j - 1)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(HistoryIndex)
}

fn mask_text(mask: EventMask) -> String {
    let parts: Vec<String> = mask.indices().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

// ---------------------------------------------------------------------------
// check

fn decoherence_json(s: &Scenario, r: &DecoherenceReport) -> Value {
    json!({
        "version": REPORT_VERSION,
        "scenario_hash": s.hash(),
        "verdict": r.verdict.as_str(),
        "tol": r.tol,
        "D_offdiag_max": r.offdiag_max,
        "D_offdiag_re_max": r.offdiag_re_max,
        "worst_pair": r.worst_offdiag.as_ref().map(|w| json!({
            "first": w.first.to_string(),
            "second": w.second.to_string(),
            "re": w.re,
            "im": w.im,
            "magnitude": w.magnitude,
        })),
        "probabilities": r.histories.iter().zip(&r.probabilities).map(|(h, p)| json!({
            "history": h.to_string(),
            "probability": p,
        })).collect::<Vec<_>>(),
    })
}

fn evaluate_query(fam: &Family, report: &DecoherenceReport, q: &Query) -> Value {
    let result = (|| -> Result<Value, CqtError> {
        match q {
            Query::Probability { histories } => {
                let hs = histories.iter().map(|h| zero_based(fam, h)).collect::<Result<Vec<_>, _>>()?;
                let labels: Vec<String> = hs.iter().map(ToString::to_string).collect();
                let p = if hs.len() == 1 {
                    fam.born_probability(&hs[0])?
                } else {
                    event_probability(fam, &DynamicEvent::new(fam, hs)?, report)?
                };
                Ok(json!({"kind": "probability", "histories": labels, "probability": p}))
            }
            Query::Classify {} => Ok(json!({"kind": "classify", "verdict": report.verdict.as_str()})),
            Query::Truth { step } => {
                let psi = fam
                    .state()
                    .pure_vector()
                    .ok_or_else(|| CqtError::InvalidState("truth values need a pure state".into()))?;
                let fw = Framework::new(fam.heisenberg_space(step - 1)?);
                let values = pure_truth_values(psi, &fw)?;
                let events: Vec<Value> = values
                    .iter()
                    .enumerate()
                    .map(|(m, v)| json!({"event": mask_text(EventMask(m as u64)), "value": v.to_string()}))
                    .collect();
                Ok(json!({"kind": "truth", "step": step, "events": events}))
            }
            Query::Noncontextuality { steps } => {
                let fw1 = Framework::new(fam.heisenberg_space(steps[0] - 1)?);
                let fw2 = Framework::new(fam.heisenberg_space(steps[1] - 1)?);
                let r = noncontextuality_check(fam.state(), &fw1, &fw2)?;
                Ok(json!({
                    "kind": "noncontextuality",
                    "steps": steps,
                    "shared": r.shared.len(),
                    "nontrivial_shared": r.nontrivial_shared(),
                    "max_deviation": r.max_deviation,
                    "exhaustive": r.exhaustive,
                }))
            }
        }
    })();
    result.unwrap_or_else(|e| {
        let kind = match q {
            Query::Probability { .. } => "probability",
            Query::Classify {} => "classify",
            Query::Truth { .. } => "truth",
            Query::Noncontextuality { .. } => "noncontextuality",
        };
        json!({"kind": kind, "error": e.to_string()})
    })
}

fn query_line(v: &Value) -> String {
    if let Some(e) = v.get("error") {
        return format!("{}: error: {}", v["kind"].as_str().unwrap_or("?"), e.as_str().unwrap_or(""));
    }
    match v["kind"].as_str().unwrap_or("") {
        "probability" => {
            let hs: Vec<&str> = v["histories"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
            format!("probability {}: {}", hs.join(" "), fmt12(v["probability"].as_f64().unwrap_or(f64::NAN)))
        }
        "classify" => format!("classify: {}", v["verdict"].as_str().unwrap_or("")),
        "truth" => {
            let parts: Vec<String> = v["events"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|e| format!("{}={}", e["event"].as_str().unwrap_or(""), e["value"].as_str().unwrap_or("")))
                .collect();
            format!("truth step {}: {}", v["step"], parts.join(" "))
        }
        _ => format!(
            "noncontextuality steps {}: {} shared ({} nontrivial), max deviation {:.3e}{}",
            v["steps"],
            v["shared"],
            v["nontrivial_shared"],
            v["max_deviation"].as_f64().unwrap_or(f64::NAN),
            if v["exhaustive"] == json!(false) { " (atoms only)" } else { "" },
        ),
    }
}

pub fn cmd_check(s: &Scenario, opts: ClassifyOptions, format: Format) -> Outcome {
    let fam = s.family();
    let report = match classify_with(fam, opts) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e, EXIT_INPUT),
    };
    let queries: Vec<Value> = s.queries().iter().map(|q| evaluate_query(fam, &report, q)).collect();
    let code = report.verdict.exit_code();
    let text = match format {
        Format::Json => {
            let mut v = decoherence_json(s, &report);
            v["queries"] = Value::Array(queries);
            to_json(&v)
        }
        Format::Table => {
            let mut out = format!("verdict: {}\n", report.verdict);
            out.push_str(&format!("max |D| off-diagonal: {:.3e}\n", report.offdiag_max));
            if let Some(w) = &report.worst_offdiag {
                out.push_str(&format!(
                    "worst pair: {} {}  D = {} {:+.12}i  |D| = {}\n",
                    w.first,
                    w.second,
                    fmt12(w.re),
                    w.im,
                    fmt12(w.magnitude)
                ));
            }
            out.push_str("history      probability\n");
            for (h, p) in report.histories.iter().zip(&report.probabilities) {
                out.push_str(&format!("{:<12} {}\n", h.to_string(), fmt12(*p)));
            }
            if !queries.is_empty() {
                out.push_str("queries:\n");
                for q in &queries {
                    out.push_str(&format!("  {}\n", query_line(q)));
                }
            }
            out
        }
    };
    Outcome::ok(text, code)
}

// ---------------------------------------------------------------------------
// prob

pub fn cmd_prob(s: &Scenario, specs: &[String], opts: ClassifyOptions, format: Format) -> Outcome {
    let fam = s.family();
    let mut histories = Vec::new();
    for spec in specs {
        let expanded = match expand_history_spec(spec) {
            Ok(x) => x,
            Err(e) => return Outcome::error(e, EXIT_INPUT),
        };
        for h in expanded {
            match zero_based(fam, &h) {
                Ok(h) => histories.push(h),
                Err(e) => return Outcome::error(e, EXIT_INPUT),
            }
        }
    }
    histories.sort();
    histories.dedup();
    let p = if histories.len() == 1 {
        match fam.born_probability(&histories[0]) {
            Ok(p) => p,
            Err(e) => return Outcome::error(e, EXIT_INPUT),
        }
    } else {
        let report = match classify_with(fam, opts) {
            Ok(r) => r,
            Err(e) => return Outcome::error(e, EXIT_INPUT),
        };
        let event = match DynamicEvent::new(fam, histories.clone()) {
            Ok(e) => e,
            Err(e) => return Outcome::error(e, EXIT_INPUT),
        };
        match event_probability(fam, &event, &report) {
            Ok(p) => p,
            Err(e @ CqtError::InconsistentFamily { .. }) => {
                let code = if report.verdict == Verdict::WeakOnly { EXIT_WEAK_ONLY } else { EXIT_INCONSISTENT };
                return Outcome::error(e, code);
            }
            Err(e) => return Outcome::error(e, EXIT_INPUT),
        }
    };
    let text = match format {
        Format::Table => format!("{}\n", fmt12(p)),
        Format::Json => to_json(&json!({
            "version": REPORT_VERSION,
            "scenario_hash": s.hash(),
            "histories": histories.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "probability": p,
        })),
    };
    Outcome::ok(text, EXIT_OK)
}

// ---------------------------------------------------------------------------
// static

pub fn cmd_static(s: &Scenario, event: &str, step: usize, format: Format) -> Outcome {
    let fam = s.family();
    if step == 0 || step > fam.len() {
        return Outcome::error(
            CqtError::IndexOutOfRange { what: "step (one-based)", index: step, len: fam.len() },
            EXIT_INPUT,
        );
    }
    let space = match fam.heisenberg_space(step - 1) {
        Ok(sp) => sp,
        Err(e) => return Outcome::error(e, EXIT_INPUT),
    };
    let mut indices = Vec::new();
    for part in event.split(',') {
        match part.trim().parse::<usize>() {
            Ok(j) if j > 0 && j <= space.len() => indices.push(j - 1),
            _ => {
                return Outcome::error(
                    format!("bad event member {part:?}: expected one-based indices up to {}", space.len()),
                    EXIT_INPUT,
                )
            }
        }
    }
    let mask = EventMask::from_indices(&indices);
    let p = match event_projector(&space, mask) {
        Ok(proj) => fam.state().expectation(proj.matrix()).re.clamp(0.0, 1.0),
        Err(e) => return Outcome::error(e, EXIT_INPUT),
    };
    let truth = fam.state().pure_vector().map(|_| truth_value(p));
    let text = match format {
        Format::Table => {
            let mut out = format!("step {step} event {}: {}", mask_text(mask), fmt12(p));
            if let Some(t) = truth {
                out.push_str(&format!("  truth {t}"));
            }
            out.push('\n');
            out
        }
        Format::Json => to_json(&json!({
            "version": REPORT_VERSION,
            "scenario_hash": s.hash(),
            "step": step,
            "event": mask_text(mask),
            "probability": p,
            "truth": truth.map(|t| t.to_string()),
        })),
    };
    Outcome::ok(text, EXIT_OK)
}

// ---------------------------------------------------------------------------
// demos

fn demo_outcome(name: &str, report: &CheckReport, preface: &str, extra: Value, format: Format) -> Outcome {
    let code = if report.all_pass() { EXIT_OK } else { EXIT_CHECK_FAILED };
    let text = match format {
        Format::Table => format!("{preface}{}", report.render_table()),
        Format::Json => {
            let mut v = json!({"version": REPORT_VERSION, "demo": name});
            v["checks"] = serde_json::to_value(&report.checks).expect("checks serialize");
            if let Some(w) = &report.witness {
                v["witness"] = w.clone();
            }
            if let Value::Object(map) = extra {
                for (k, x) in map {
                    v[k] = x;
                }
            }
            to_json(&v)
        }
    };
    Outcome::ok(text, code)
}

/// Checks behind the two-slit demo.
pub fn two_slit_report() -> Result<CheckReport, CqtError> {
    let plain = oracles::build_two_slit(false);
    let marked = oracles::build_two_slit(true);
    let merged = oracles::build_merged_two_slit();
    let rp = crate::histories::classify(&plain)?;
    let rm = crate::histories::classify(&marked)?;
    let rg = crate::histories::classify(&merged)?;
    let d = plain.decoherence_functional(&HistoryIndex(vec![0, 0]), &HistoryIndex(vec![1, 0]))?;
    let compound = plain.homogeneous_chain_probability(&[vec![0, 1], vec![0]])?;
    let elementary = rp.probabilities[0] + rp.probabilities[2];
    let mut r = CheckReport::new();
    r.push("unmarked_re_d_is_quarter", (d.re - 0.25).abs().max(d.im.abs()), tol::ZERO);
    r.push_flag("unmarked_inconsistent", rp.verdict == Verdict::Inconsistent);
    r.push("merged_chain_probability_is_one", (compound - 1.0).abs(), tol::ZERO);
    r.push("elementary_sum_is_half", (elementary - 0.5).abs(), tol::ZERO);
    r.push("discrepancy_is_twice_re_d", (compound - elementary - 2.0 * d.re).abs(), tol::ZERO);
    r.push_flag("marked_medium_consistent", rm.verdict == Verdict::MediumConsistent);
    r.push("marked_offdiag_max", rm.offdiag_max, tol::ZERO);
    r.push_flag("merged_family_medium_consistent", rg.verdict == Verdict::MediumConsistent);
    Ok(r)
}

/// Conditional-measure checks over `instances` random instances of
/// dimension 2 to 6.
pub fn cz_report(seed: u64, instances: usize, trials: usize) -> Result<CheckReport, CqtError> {
    let mut rng = random::rng(seed);
    let mut merged = CheckReport::new();
    for k in 0..instances {
        let inst = CzInstance::random(2 + k % 5, &mut rng);
        let r = oracles::cz_check(&inst, trials, &mut rng)?;
        if merged.checks.is_empty() {
            merged = r;
        } else {
            for (m, c) in merged.checks.iter_mut().zip(r.checks) {
                m.residual = m.residual.max(c.residual);
                m.pass &= c.pass;
            }
        }
    }
    Ok(merged)
}

/// Golden weak-only witness plus a random product instance.
pub fn diosi_report(seed: u64) -> Result<CheckReport, CqtError> {
    let spin = oracles::weak_only_spin_family();
    let mut report = oracles::diosi_check(&spin, &spin)?;
    let mut rng = random::rng(seed);
    let shape = |dim| random::FamilyShape { dim, steps: 2, max_members: 3, pure: true, hamiltonian_scale: 1.0 };
    let f1 = random::random_family(shape(2), &mut rng);
    let g = random::random_family(shape(3), &mut rng);
    let steps = f1.times().iter().copied().zip(g.spaces().iter().cloned()).collect();
    let f2 = Family::new(g.state().clone(), g.hamiltonian().clone(), f1.t0(), steps)?;
    let random_product = oracles::diosi_check(&f1, &f2)?;
    let residual = random_product.get("joint_factorizes").map_or(f64::NAN, |c| c.residual);
    report.push("random_product_factorizes", residual, tol::DEC);
    Ok(report)
}

pub fn cmd_demo(name: Demo, seed: u64, format: Format) -> Outcome {
    let result = match name {
        Demo::TwoSlit => two_slit_report().map(|r| {
            let preface = "two-slit: unmarked Inconsistent, marked and merged MediumConsistent\n";
            demo_outcome("two-slit", &r, preface, json!({}), format)
        }),
        Demo::Mermin => {
            let inst = NoGoInstance::peres_mermin();
            let count = oracles::mermin_no_go(&inst);
            let mut r = CheckReport::new();
            r.push_flag("no_satisfying_assignment", count == 0);
            r.push_flag("parity_obstructed", inst.parity_obstructed());
            let preface = format!("{count} satisfying assignments of 512\n");
            Ok(demo_outcome("mermin", &r, &preface, json!({"satisfying": count, "assignments": 512}), format))
        }
        Demo::Cz => cz_report(seed, 10, 20).map(|r| demo_outcome("cz", &r, "", json!({"seed": seed}), format)),
        Demo::Diosi => diosi_report(seed).map(|r| demo_outcome("diosi", &r, "", json!({"seed": seed}), format)),
    };
    result.unwrap_or_else(|e| Outcome::error(e, EXIT_INPUT))
}
