use clap::Subcommand;
use serde::Serialize;

use corners_core::groups::{census, census_oracle, max_popular_difference, PlaneSet};
use corners_core::Error;

use super::Completion;
use crate::manifest::{write_output, Session};

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CensusCommand {
    /// Full census as CSV.
    Run {
        /// Plane set file, `-` for stdin.
        #[arg(default_value = "-")]
        set: String,
        #[arg(long, short)]
        out: Option<String>,
    },
    /// Census by the plain triple loop (small groups only).
    Oracle {
        #[arg(default_value = "-")]
        set: String,
        #[arg(long, short)]
        out: Option<String>,
    },
    /// The most popular nonzero difference.
    Popular {
        #[arg(default_value = "-")]
        set: String,
    },
}

pub fn run(cmd: &CensusCommand, session: &mut Session) -> Result<Completion, Error> {
    let (name, path) = match cmd {
        CensusCommand::Run { set, .. } => ("census run", set),
        CensusCommand::Oracle { set, .. } => ("census oracle", set),
        CensusCommand::Popular { set } => ("census popular", set),
    };
    session.configure(name, cmd, vec![]);
    let set = PlaneSet::from_text(&session.read_input(path)?)?;
    match cmd {
        CensusCommand::Run { out, .. } => write_output(out.as_deref(), &census(&set).to_csv())?,
        CensusCommand::Oracle { out, .. } => write_output(out.as_deref(), &census_oracle(&set)?.to_csv())?,
        CensusCommand::Popular { .. } => {
            let c = census(&set);
            let (d, count) = max_popular_difference(&c)?;
            write_output(None, &format!("d = {d}, count = {count}, density = {}\n", c.density(d)))?;
        }
    }
    Ok(Completion::Done)
}
