//! Library side of the `attractorlab` binary: flag parsing, config files,
//! jobs and `repro.json` handling.

pub mod args;
pub mod config;
pub mod jobs;
pub mod repro;

use std::ffi::OsString;
use std::path::PathBuf;

use attractorlab::Error;
use clap::Parser;

use args::{Cli, Cmd};
use jobs::Job;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::LengthMismatch { .. } | Error::RhoTooSmall(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn scratch_dir() -> PathBuf {
    std::env::temp_dir().join(format!("attractorlab-{}", std::process::id()))
}

fn run_job(job: attractorlab::Result<Job>, out: Option<&PathBuf>) -> i32 {
    let job = match job {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let (dir, keep) = match out {
        Some(d) => (d.clone(), true),
        None => (scratch_dir(), false),
    };
    let res = repro::run_recorded(&job, &dir);
    if !keep {
        let _ = std::fs::remove_dir_all(&dir);
    }
    match res {
        Ok((summary, _)) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", job.name());
            exit_code(&e)
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.cmd {
        Cmd::GenData(a) => run_job(a.job(), Some(&a.out)),
        Cmd::Train(a) => run_job(a.job(), Some(&a.out)),
        Cmd::Evaluate(a) => run_job(a.job(), Some(&a.out)),
        Cmd::Ensemble(a) => run_job(a.job(), Some(&a.out)),
        Cmd::D2(a) => run_job(a.job(), a.out.as_ref()),
        Cmd::Lyapunov(a) => run_job(a.job(), a.out.as_ref()),
        Cmd::Kac(a) => run_job(a.job(), a.out.as_ref()),
        Cmd::Tsne(a) => run_job(a.job(), Some(&a.out)),
        Cmd::Replay(a) => {
            let r = repro::read_repro(&a.repro).and_then(|r| repro::replay(&r, &a.out));
            match r {
                Ok(o) if o.is_exact() => {
                    println!("{} artifacts reproduced bit-exactly", o.matched.len());
                    EXIT_OK
                }
                Ok(o) => {
                    for k in &o.differing {
                        println!("differs: {k}");
                    }
                    for k in &o.missing {
                        println!("missing: {k}");
                    }
                    for k in &o.extra {
                        println!("extra: {k}");
                    }
                    EXIT_NUMERICAL
                }
                Err(e) => {
                    eprintln!("error: replay failed: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}
