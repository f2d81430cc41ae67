use std::process::ExitCode;

use magnetoplate_cli::runner::{self, Subcommand};
use magnetoplate_cli::{parse_config, RunConfig};

const USAGE: &str = "\
usage: magnetoplate <static|evolve|gamma|magstat|check> [options]

options:
  --config FILE      key = value configuration file
  --out DIR          output directory (default: run.out or ./out)
  --seed N           override run.seed
  --scenario NAME    override run.scenario
  --spec NAME        gamma: ansatz profile (zero_e3, zero_e1, bump_u,
                     bump_v, rotor, tilted, generic)
  --h LIST           gamma/magstat: comma-separated thickness list
  --profile NAME     magstat: magnetization profile (e3, e1, cos_mode)
  --oracle           magstat: also run the finite-difference oracle
  --nx N --ny N --nz N   grid override

environment:
  MAGNETOPLATE_THREADS   caps the worker count of the table loops
";

fn parse_args() -> Result<(Subcommand, RunConfig, Option<String>), String> {
    let mut args = std::env::args().skip(1);
    let sub = args.next().ok_or_else(|| USAGE.to_string())?;
    let cmd = Subcommand::parse(&sub).ok_or_else(|| format!("unknown subcommand `{sub}`\n\n{USAGE}"))?;

    let mut cfg_text = String::new();
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut out_flag = None;
    while let Some(flag) = args.next() {
        let mut take = |name: &str| -> Result<String, String> {
            args.next().ok_or_else(|| format!("flag {name} needs a value"))
        };
        match flag.as_str() {
            "--config" => {
                let path = take("--config")?;
                cfg_text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("cannot read config `{path}`: {e}"))?;
            }
            "--out" => out_flag = Some(take("--out")?),
            "--seed" => overrides.push(("run.seed".into(), take("--seed")?)),
            "--scenario" => overrides.push(("run.scenario".into(), take("--scenario")?)),
            "--spec" => overrides.push(("gamma.spec".into(), take("--spec")?)),
            "--h" => {
                let list = take("--h")?;
                overrides.push(("gamma.h".into(), list.clone()));
                overrides.push(("magstat.h".into(), list));
            }
            "--profile" => overrides.push(("magstat.profile".into(), take("--profile")?)),
            "--oracle" => overrides.push(("magstat.oracle".into(), "true".into())),
            "--nx" => overrides.push(("grid.nx".into(), take("--nx")?)),
            "--ny" => overrides.push(("grid.ny".into(), take("--ny")?)),
            "--nz" => overrides.push(("grid.nz".into(), take("--nz")?)),
            other => return Err(format!("unknown flag `{other}`\n\n{USAGE}")),
        }
    }

    let mut cfg = parse_config(&cfg_text).map_err(|e| e.to_string())?;
    for (k, v) in overrides {
        cfg.set(&k, &v).map_err(|e| e.to_string())?;
    }
    Ok((cmd, cfg, out_flag))
}

fn main() -> ExitCode {
    match parse_args() {
        Ok((cmd, mut cfg, out_flag)) => {
            let code = runner::run(cmd, &mut cfg, out_flag.as_deref());
            ExitCode::from(code as u8)
        }
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
