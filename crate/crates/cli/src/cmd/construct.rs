use clap::Args;
use serde::Serialize;

use corners_core::construction::{density_csv, run_experiment_with};
use corners_core::groups::{FiniteAbelianGroup, GroupDescriptor};
use corners_core::kernel::KernelDocument;
use corners_core::{Error, Execution};

use super::Completion;
use crate::manifest::{write_output, Session};

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    /// Kernel JSON file, `-` for stdin.
    #[arg(long)]
    pub kernel: String,
    /// Group descriptor, e.g. `cyclic 512` or `vector 2 9`.
    #[arg(long)]
    pub group: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<String>,
    /// Also write the sampled set in text form.
    #[arg(long)]
    pub set_out: Option<String>,
    /// Also write `|S_d| / N²` for every `d` as CSV.
    #[arg(long)]
    pub density_out: Option<String>,
}

pub fn run(args: &ConstructArgs, session: &mut Session) -> Result<Completion, Error> {
    session.configure("construct", args, vec![args.seed]);
    let k = KernelDocument::from_json_str(&session.read_input(&args.kernel)?)?.into_discrete()?;
    let group = FiniteAbelianGroup::new(args.group.parse::<GroupDescriptor>()?)?;
    let exp = run_experiment_with(&k, &group, args.seed, Execution::default())?;
    write_output(args.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&exp.report)?))?;
    if let Some(p) = &args.set_out {
        write_output(Some(p), &exp.set.to_text())?;
    }
    if let Some(p) = &args.density_out {
        write_output(Some(p), &density_csv(&exp.census))?;
    }
    Ok(Completion::Done)
}
