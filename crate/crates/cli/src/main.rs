// Copyright 2026 The fhsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! `fhsim` command-line runner.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use fhsim::scenario::{
    bundled, bundled_names, parse_scenario, render, run_scenario, RunOptions, Scenario, EXIT_INFEASIBLE, EXIT_PARSE,
};

#[derive(Parser)]
#[command(name = "fhsim", version, about = "Packet-switched fronthaul simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report tables.
    Run {
        /// Scenario file, or `bundled:<name>`.
        scenario: String,
        /// Output directory (created if missing).
        #[arg(long, short)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the subframe count; the horizon follows.
        #[arg(long)]
        subframes: Option<u64>,
        /// Also sweep the frame size and write sweep.csv.
        #[arg(long)]
        sweep: bool,
    },
    /// Print the canonical form of a scenario.
    Render { scenario: String },
    /// List the bundled scenarios.
    List,
}

fn load(arg: &str) -> Result<Scenario> {
    let text = match arg.strip_prefix("bundled:") {
        Some(name) => bundled(name)
            .ok_or_else(|| anyhow!("no bundled scenario '{name}' (try `fhsim list`)"))?
            .to_string(),
        None => fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?,
    };
    parse_scenario(&text).with_context(|| format!("in {arg}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for n in bundled_names() {
                println!("{n}");
            }
            ExitCode::SUCCESS
        }
        Command::Render { scenario } => match load(&scenario) {
            Ok(sc) => {
                print!("{}", render(&sc));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_PARSE as u8)
            }
        },
        Command::Run {
            scenario,
            out,
            seed,
            subframes,
            sweep,
        } => {
            let sc = match load(&scenario) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(EXIT_PARSE as u8);
                }
            };
            let opts = RunOptions { seed, subframes, sweep };
            let run = match run_scenario(&sc, &opts, &out) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let g = &run.report.global;
            println!(
                "{}: injected {} delivered {} dropped {} in-flight {} violations {}",
                run.scenario.name,
                g.injected,
                g.delivered,
                g.dropped_unroutable + g.dropped_overflow,
                g.in_flight,
                g.violations
            );
            println!("wrote {} files to {}", run.files.len(), out.display());
            if run.refused.is_empty() {
                ExitCode::SUCCESS
            } else {
                for (name, why) in &run.refused {
                    eprintln!("error: mandatory session '{name}' refused: {why}");
                }
                ExitCode::from(EXIT_INFEASIBLE as u8)
            }
        }
    }
}
