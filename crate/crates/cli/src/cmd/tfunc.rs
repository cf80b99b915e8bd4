use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use corners_core::kernel::KernelDocument;
use corners_core::{DiscreteKernel, Error};

use super::Completion;
use crate::manifest::{write_output, Session};

#[derive(Debug, Subcommand)]
pub enum TfuncCommand {
    /// Print the mean and the corner functional.
    Eval(InputArgs),
    /// Write the n-th tensor power.
    Tensor {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        n: u32,
    },
    /// Multiply every value by beta.
    Scale {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        beta: f64,
    },
    /// Replace f by eps + (1 - eps) f.
    Mix {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        eps: f64,
    },
    /// Convert between the grid and the step-function forms.
    Convert {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, value_enum)]
        to: KernelForm,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Kernel JSON file, `-` for stdin.
    #[arg(default_value = "-")]
    pub kernel: String,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    Discrete,
    Piecewise,
}

#[derive(Serialize)]
struct Config<'a> {
    kernel: &'a str,
    n: Option<u32>,
    beta: Option<f64>,
    eps: Option<f64>,
    to: Option<KernelForm>,
}

/// `alpha = …, T = …`: exact rationals when the kernel qualifies, otherwise
/// 12-digit decimals.
pub fn describe(k: &DiscreteKernel) -> String {
    match k.exact() {
        Some(v) => format!("alpha = {}, T = {}", v.expectation, v.t_value),
        None => format!("alpha = {:.12}, T = {:.12}", k.expectation(), k.t_value()),
    }
}

pub fn run(cmd: &TfuncCommand, session: &mut Session) -> Result<Completion, Error> {
    let (name, io, cfg) = match cmd {
        TfuncCommand::Eval(io) => ("tfunc eval", io, Config { kernel: &io.kernel, n: None, beta: None, eps: None, to: None }),
        TfuncCommand::Tensor { io, n } => ("tfunc tensor", io, Config { kernel: &io.kernel, n: Some(*n), beta: None, eps: None, to: None }),
        TfuncCommand::Scale { io, beta } => ("tfunc scale", io, Config { kernel: &io.kernel, n: None, beta: Some(*beta), eps: None, to: None }),
        TfuncCommand::Mix { io, eps } => ("tfunc mix", io, Config { kernel: &io.kernel, n: None, beta: None, eps: Some(*eps), to: None }),
        TfuncCommand::Convert { io, to } => ("tfunc convert", io, Config { kernel: &io.kernel, n: None, beta: None, eps: None, to: Some(*to) }),
    };
    session.configure(name, &cfg, vec![]);
    let text = session.read_input(&io.kernel)?;
    let doc = KernelDocument::from_json_str(&text)?;
    let out = io.out.as_deref();
    match cmd {
        TfuncCommand::Eval(_) => {
            let k = doc.into_discrete()?;
            write_output(out, &format!("{}\n", describe(&k)))?;
        }
        TfuncCommand::Tensor { n, .. } => write_output(out, &doc.into_discrete()?.tensor_power(*n)?.to_json_string())?,
        TfuncCommand::Scale { beta, .. } => write_output(out, &doc.into_discrete()?.scale(*beta)?.to_json_string())?,
        TfuncCommand::Mix { eps, .. } => write_output(out, &doc.into_discrete()?.epsilon_mix(*eps)?.to_json_string())?,
        TfuncCommand::Convert { to, .. } => {
            let text = match to {
                KernelForm::Discrete => doc.into_discrete()?.to_json_string(),
                KernelForm::Piecewise => match doc {
                    KernelDocument::Piecewise(pk) => pk.to_json_string(),
                    KernelDocument::Discrete(k) => k.to_piecewise().to_json_string(),
                },
            };
            write_output(out, &text)?;
        }
    }
    Ok(Completion::Done)
}
