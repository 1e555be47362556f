use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mrcmt::config::{load_config, RunConfig};
use mrcmt::output::{fieldmap_csv, modes_csv, scattering_csv, sig12, spectrum_csv};
use mrcmt::resonator::{compute_spectrum, field_map, find_resonances, SolvedDevice};

#[derive(Parser)]
#[command(name = "mrcmt", version, about = "Coupled mode simulation of microresonator add/drop filters")]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for wavelength sweeps (overrides the config)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output file (overrides the path in [outputs])
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Through/drop power spectrum over the configured scan
    Spectrum,
    /// E_y over the configured grid at one wavelength
    Fieldmap {
        #[arg(long = "lambda")]
        lambda: f64,
    },
    /// Bend and straight mode tables
    Modes {
        /// Defaults to the start of the scan
        #[arg(long = "lambda")]
        lambda: Option<f64>,
    },
    /// Scattering matrix of coupler I
    Coupler {
        #[arg(long = "lambda")]
        lambda: f64,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<mrcmt::error::Error> for Failure {
    fn from(e: mrcmt::error::Error) -> Self {
        if e.is_validation() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

/// Writes the whole file or nothing.
fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    let result = std::fs::File::create(path).and_then(|mut f| {
        f.write_all(contents.as_bytes())?;
        f.sync_all()
    });
    result.map_err(|e| {
        let _ = std::fs::remove_file(path);
        Failure::Numerical(format!("{}: {e}", path.display()))
    })
}

fn positive_wavelength(lambda: f64) -> Result<f64, Failure> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Failure::Config(format!("--lambda must be a positive wavelength in μm, got {lambda}")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let mut config: RunConfig = load_config(&path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    eprintln!("# effective configuration");
    eprint!("{}", config.to_toml());

    let device = &config.device;
    match cli.command {
        Command::Spectrum => {
            let out = cli.out.unwrap_or_else(|| config.outputs.spectrum.clone());
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Failure::Config(format!("workers: {e}")))?;
            let scan = &config.scan;
            let points = pool.install(|| compute_spectrum(device, scan.lambda_start, scan.lambda_stop, scan.lambda_step))?;
            write_output(&out, &spectrum_csv(&points))?;
            if points.len() >= 3 {
                for r in find_resonances(&points)? {
                    eprintln!(
                        "resonance at {} μm, P_D = {}, {} (p = {})",
                        sig12(r.wavelength),
                        sig12(r.dropped_power),
                        r.classification,
                        r.dominant_order
                    );
                }
            }
            eprintln!("wrote {} points to {}", points.len(), out.display());
        }
        Command::Fieldmap { lambda } => {
            let lambda = positive_wavelength(lambda)?;
            let out = cli.out.unwrap_or_else(|| config.outputs.fieldmap.clone());
            let grid = config.outputs.grid;
            let (input, add) = {
                let ns = device.n_straight_modes;
                let mut input = nalgebra::DVector::zeros(ns);
                input[0] = num_complex::Complex64::new(1.0, 0.0);
                (input, nalgebra::DVector::zeros(ns))
            };
            let (map, solution) = field_map(device, lambda, &grid, &input, &add)?;
            write_output(&out, &fieldmap_csv(&map))?;
            eprintln!(
                "P_T = {}, P_D = {}; wrote {}×{} grid to {}",
                sig12(solution.through_amplitudes.iter().map(|v| v.norm_sqr()).sum()),
                sig12(solution.drop_amplitudes.iter().map(|v| v.norm_sqr()).sum()),
                grid.nx,
                grid.nz,
                out.display()
            );
        }
        Command::Modes { lambda } => {
            let lambda = positive_wavelength(lambda.unwrap_or(config.scan.lambda_start))?;
            let out = cli.out.unwrap_or_else(|| config.outputs.modes.clone());
            let solved = SolvedDevice::solve(device, lambda)?;
            write_output(&out, &modes_csv(&solved.bend_modes, &solved.straight_modes))?;
            eprintln!("wrote mode table at λ = {} μm to {}", sig12(lambda), out.display());
        }
        Command::Coupler { lambda } => {
            let lambda = positive_wavelength(lambda)?;
            let out = cli.out.unwrap_or_else(|| config.outputs.coupler.clone());
            let solved = SolvedDevice::solve(device, lambda)?;
            let coupler = &solved.coupler1;
            let orders: Vec<usize> = solved.bend_modes.iter().map(|m| m.radial_order).collect();
            write_output(&out, &scattering_csv(&coupler.scattering, &orders))?;
            eprintln!(
                "largest singular value {}, power gain {}; wrote {}",
                sig12(coupler.scattering.max_singular_value()),
                sig12(coupler.power_gain()?),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
