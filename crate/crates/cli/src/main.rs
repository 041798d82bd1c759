use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wasmio_core::access::{AccessMode, TrustMode};
use wasmio_core::harness::{self, services, BoardLabels, HarnessError, ScenarioId, DEFAULT_DIVIDERS};
use wasmio_core::interrupts::{parse_scenario, trace_csv, Machine};
use wasmio_core::manifest::{embed_requirements, parse_manifest};
use wasmio_core::platform::{build_access_config, match_requirements, parse_platform, PlatformDescription};
use wasmio_core::system::requirements_of;
use wasmio_core::wasm::decode_module;

#[derive(Parser)]
#[command(name = "wasmio", version, about = "Peripheral access for WebAssembly services, simulated")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a measurement scenario and write the step-ledger report.
    Run {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long)]
        mode: AccessMode,
        #[arg(long)]
        trust: TrustMode,
        /// Comma-separated SPI clock dividers.
        #[arg(long, value_delimiter = ',')]
        dividers: Option<Vec<u32>>,
        /// Cost-model overrides (`cost <name>=<u32>` lines).
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the SPI sweep as divider/configured/measured rows.
        #[arg(long)]
        rates: Option<PathBuf>,
    },
    /// Embed a requirements manifest into a WebAssembly binary.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check whether a platform satisfies a service's requirements.
    Check {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        service: PathBuf,
        /// Service id used for assignment lookup; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Run a scenario file through the interrupt machine and print its trace.
    Simulate {
        #[arg(long)]
        platform: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        costs: Option<PathBuf>,
        /// Trace CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one of the generated measurement services.
    Generate {
        #[arg(long)]
        kind: Kind,
        #[arg(long)]
        mode: AccessMode,
        /// Measurement pin for gpio and irq services.
        #[arg(long, default_value_t = 5)]
        pin: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gpio,
    Irq,
    Spi,
}

struct Failure {
    code: u8,
    msg: String,
}

fn scenario_err(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        msg: msg.to_string(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| scenario_err(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| scenario_err(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| scenario_err(format!("{}: {e}", path.display())))
}

fn load_platform(path: &Path, costs: Option<&Path>) -> Result<PlatformDescription, Failure> {
    let mut desc = parse_platform(&read_text(path)?).map_err(|e| scenario_err(format!("{}: {e}", path.display())))?;
    if let Some(c) = costs {
        desc.costs
            .apply_overrides(&read_text(c)?)
            .map_err(|e| scenario_err(format!("{}: {e}", c.display())))?;
    }
    Ok(desc)
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run {
            platform,
            scenario,
            mode,
            trust,
            dividers,
            costs,
            out,
            rates,
        } => {
            let desc = load_platform(&platform, costs.as_deref())?;
            let dividers = dividers.unwrap_or_else(|| DEFAULT_DIVIDERS.to_vec());
            let result = harness::run_scenario(scenario, &desc, &BoardLabels::default(), mode, trust, &dividers)
                .map_err(|e| match e {
                    HarnessError::Rejected(r) => Failure {
                        code: 2,
                        msg: rejection_text(&r),
                    },
                    e => scenario_err(e),
                })?;
            harness::report_write(std::slice::from_ref(&result), &out)
                .map_err(|e| scenario_err(format!("{}: {e}", out.display())))?;
            if let Some(path) = rates {
                write(&path, harness::rate_csv(std::slice::from_ref(&result)))?;
            }
            for (name, v) in &result.metrics {
                println!("{name} = {v}");
            }
            Ok(())
        }
        Cmd::Embed { manifest, input, out } => {
            let req = parse_manifest(&read_text(&manifest)?)
                .map_err(|e| scenario_err(format!("{}: {e}", manifest.display())))?;
            let bytes = embed_requirements(&read(&input)?, &req).map_err(scenario_err)?;
            write(&out, bytes)
        }
        Cmd::Check { platform, service, id } => {
            let desc = load_platform(&platform, None)?;
            let id = id.unwrap_or_else(|| {
                service
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let module = decode_module(&read(&service)?).map_err(scenario_err)?;
            let req = requirements_of(&module).map_err(scenario_err)?;
            let cfg = build_access_config(&desc, &desc.assignment_sets()).map_err(scenario_err)?;
            match match_requirements(&id, &req, &cfg, &desc) {
                Ok(resolved) => {
                    println!("{id}: resolved {} bindings", resolved.bindings.len());
                    Ok(())
                }
                Err(r) => Err(Failure {
                    code: 2,
                    msg: rejection_text(&r),
                }),
            }
        }
        Cmd::Simulate {
            platform,
            scenario,
            costs,
            out,
        } => {
            let desc = load_platform(&platform, costs.as_deref())?;
            let sc = parse_scenario(&read_text(&scenario)?)
                .map_err(|e| scenario_err(format!("{}: {e}", scenario.display())))?;
            let base = scenario.parent().unwrap_or(Path::new("."));
            let mut m = Machine::from_scenario(desc, &sc, base).map_err(|e| match HarnessError::from(e) {
                HarnessError::Rejected(r) => Failure {
                    code: 2,
                    msg: rejection_text(&r),
                },
                e => scenario_err(e),
            })?;
            m.run_until_idle().map_err(scenario_err)?;
            let csv = trace_csv(m.trace());
            match out {
                Some(p) => write(&p, csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Cmd::Generate { kind, mode, pin, out } => {
            let labels = BoardLabels::default();
            let bytes = match kind {
                Kind::Gpio => services::gpio_service(mode, &labels, pin),
                Kind::Irq => services::irq_service(mode, &labels, pin),
                Kind::Spi => services::spi_service(mode, &labels),
            };
            write(&out, bytes)
        }
    }
}

fn rejection_text(r: &wasmio_core::platform::Rejection) -> String {
    let mut s = r.to_string();
    for m in &r.missing {
        s.push_str(&format!("\n  {m}"));
    }
    s
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("wasmio: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
