use clap::Args;
use serde::Serialize;

use corners_core::groups::PlaneSet;
use corners_core::regularity::{find_regular_boxing, Caps, RegularityConfig, RegularityRun, RunStatus};
use corners_core::Error;

use super::Completion;
use crate::manifest::{write_output, Session};

#[derive(Debug, Args, Serialize)]
pub struct RegularityArgs {
    /// Plane set over `vector 2 n`, `-` for stdin.
    #[arg(default_value = "-")]
    pub set: String,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Caps::default().max_n)]
    pub max_n: u32,
    #[arg(long, default_value_t = Caps::default().max_codim)]
    pub max_codim: u32,
    #[arg(long, default_value_t = Caps::default().max_m)]
    pub max_m: usize,
    /// Energy trajectory CSV; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<String>,
    /// Final boxing as JSON.
    #[arg(long)]
    pub boxing_out: Option<String>,
    /// Audit summary as JSON.
    #[arg(long)]
    pub audit_out: Option<String>,
}

#[derive(Serialize)]
struct AuditReport<'a> {
    schema_version: u32,
    #[serde(flatten)]
    status: &'a RunStatus,
    eps: f64,
    codim: u32,
    m: usize,
    refine_a_calls: usize,
    refine_b_calls: usize,
    uniformity_failing_fraction: f64,
    quasirandom_failing_fraction: f64,
    /// True only when every inner box was searched exhaustively.
    quasirandom_certified: bool,
    exhaustive_blocks: usize,
    structured_blocks: usize,
    sampled_blocks: usize,
    note: &'static str,
    violations: &'a [String],
}

fn audit_report<'a>(run: &'a RegularityRun, eps: f64) -> AuditReport<'a> {
    AuditReport {
        schema_version: 1,
        status: &run.status,
        eps,
        codim: run.boxing.codim(),
        m: run.boxing.m(),
        refine_a_calls: run.refine_a_calls,
        refine_b_calls: run.refine_b_calls,
        uniformity_failing_fraction: run.uniformity.failing_fraction(),
        quasirandom_failing_fraction: run.quasirandom.failing_fraction(),
        quasirandom_certified: run.quasirandom.certified(),
        exhaustive_blocks: run.quasirandom.exhaustive_blocks,
        structured_blocks: run.quasirandom.structured_blocks,
        sampled_blocks: run.quasirandom.sampled_blocks,
        note: "a quasirandomness pass on a non-exhaustive block means no witness was found, not that none exists",
        violations: &run.violations,
    }
}

pub fn run(args: &RegularityArgs, session: &mut Session) -> Result<Completion, Error> {
    let cfg = RegularityConfig {
        eps: args.eps,
        seed: args.seed,
        caps: Caps { max_n: args.max_n, max_codim: args.max_codim, max_m: args.max_m },
    };
    session.configure("regularity", serde_json::json!({ "set": &args.set, "config": &cfg }), vec![args.seed]);
    let set = PlaneSet::from_text(&session.read_input(&args.set)?)?;
    let run = find_regular_boxing(&set, &cfg)?;
    write_output(args.out.as_deref(), &run.trajectory_csv())?;
    if let Some(p) = &args.boxing_out {
        write_output(Some(p), &run.boxing.to_json_string())?;
    }
    if let Some(p) = &args.audit_out {
        write_output(Some(p), &format!("{}\n", serde_json::to_string_pretty(&audit_report(&run, args.eps))?))?;
    }
    Ok(match run.status {
        _ if !run.violations.is_empty() => Completion::InvariantViolated,
        RunStatus::Regular => Completion::Done,
        RunStatus::CapsExhausted { .. } => Completion::CapsExhausted,
    })
}
