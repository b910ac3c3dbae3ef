use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kernel_positivity::band::DEFAULT_TRUNCATION_TOL;
use kernel_positivity::certify::{certify, CertifyOptions, Engine};
use kernel_positivity::config::KernelConfig;
use kernel_positivity::nystrom::{discretize, oracle_eigenvalues};
use kernel_positivity::spectrum::derive_spectrum;
use kernel_positivity::sweep::{run_sweep, SweepParam, SweepSpec};
use kernel_positivity::wigner::{wigner_forward, write_binary, write_csv, WignerGeometry};
use kernel_positivity::Error;

// write errors on stdout (closed pipe) are not worth a panic
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(io::stdout(), $($t)*);
    }};
}

const EXIT_POSITIVE: u8 = 0;
const EXIT_NON_POSITIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ENGINE: u8 = 3;

/// Positivity certification for integral-operator kernels.
///
/// Exit codes: 0 PositiveUpTo, 1 NonPositive, 2 usage or config error,
/// 3 engine failure.
#[derive(Parser)]
#[command(name = "kpos", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct EngineFlags {
    /// band, nystrom, both or auto (band with Nyström cross-check).
    #[arg(long, default_value = "auto")]
    engine: String,
    /// Sign tolerance: e_k passes when e_k >= -max(tol, err_k).
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Nyström node count (default: chosen from the kernel decay).
    #[arg(long)]
    grid_size: Option<usize>,
    /// Recorded in outputs; every computation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify one kernel up to depth K.
    Certify {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[command(flatten)]
        flags: EngineFlags,
        /// Skip the Nyström eigenvalue oracle.
        #[arg(long)]
        no_oracle: bool,
        /// Also write the certificate text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and write a CSV of moments, e_k, Θ_k and verdicts.
    Sweep {
        config: PathBuf,
        /// A, B, C, D, E, invA, sqrtC, alpha2, beta2, gamma2, alpha1, beta1, gamma0.
        #[arg(long)]
        param: String,
        /// lo:hi:n
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: EngineFlags,
        /// Run the eigenvalue oracle at every point.
        #[arg(long)]
        oracle: bool,
        /// Report grid-resolution intervals without bisection.
        #[arg(long)]
        no_refine: bool,
    },
    /// Print ε₀, ε, r, s of the Gaussian part and the leading N eigenvalues.
    Spectrum {
        config: PathBuf,
        #[arg(short = 'n', default_value_t = 10)]
        n: usize,
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Sample the Wigner function on an nx × np grid over center ± L.
    Wigner {
        config: PathBuf,
        /// nx:np
        #[arg(long, default_value = "256:256")]
        grid: String,
        #[arg(long)]
        window: f64,
        /// .bin writes the binary layout, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Engine(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Engine(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn parse_engine(s: &str) -> Result<Engine, Failure> {
    s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), Failure> {
    let bad = || Failure::Usage(format!("range must be lo:hi:n, got '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse().map_err(|_| bad())?;
    let hi = parts[1].trim().parse().map_err(|_| bad())?;
    let n = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((lo, hi, n))
}

fn parse_grid(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("grid must be nx:np, got '{s}'"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.cmd {
        Cmd::Certify { config, depth, flags, no_oracle, out } => {
            let spec = KernelConfig::load(&config)?.kernel_spec()?;
            let opts = CertifyOptions {
                depth,
                engine: parse_engine(&flags.engine)?,
                tol: flags.tol,
                grid_size: flags.grid_size,
                truncation_tol: DEFAULT_TRUNCATION_TOL,
                oracle: !no_oracle,
            };
            let cert = certify(&spec, &opts)?;
            out!("{cert}");
            if let Some(path) = out {
                let mut w = create(&path)?;
                write!(w, "{cert}")?;
                w.flush()?;
            }
            Ok(if cert.verdict.is_positive() { EXIT_POSITIVE } else { EXIT_NON_POSITIVE })
        }
        Cmd::Sweep { config, param, range, depth, out, flags, oracle, no_refine } => {
            let cfg = KernelConfig::load(&config)?;
            let (lo, hi, count) = parse_range(&range)?;
            let param: SweepParam = param.parse()?;
            let mut s = SweepSpec::new(cfg.gaussian_params()?, cfg.poly_coeffs(), cfg.normalize, param, lo, hi, count, depth);
            s.hbar = cfg.hbar;
            s.engine = parse_engine(&flags.engine)?;
            s.tol = flags.tol;
            s.grid_size = flags.grid_size;
            s.oracle = oracle;
            s.refine = !no_refine;
            s.seed = flags.seed;
            let result = run_sweep(&s)?;
            let mut w = create(&out)?;
            result.write_csv(&mut w)?;
            w.flush()?;
            out!("{}", result.summary());
            let failed = result.rows.iter().any(|r| r.error.is_some());
            Ok(if failed { EXIT_ENGINE } else { EXIT_POSITIVE })
        }
        Cmd::Spectrum { config, n, grid_size } => {
            let cfg = KernelConfig::load(&config)?;
            let g = cfg.gaussian_params()?;
            let sp = derive_spectrum(&g);
            outln!("eps0,{:e}", sp.eps0);
            outln!("eps,{:e}", sp.eps);
            outln!("r,{:e}", sp.r);
            outln!("s,{:e}", sp.s);
            let p = cfg.poly_coeffs();
            let pure = p.as_array()[..5].iter().all(|&c| c == 0.0) && p.gamma0 != 0.0;
            outln!("n,lambda");
            if pure {
                // the constant factor cancels under normalization
                let scale = if cfg.normalize { 1.0 } else { p.gamma0 };
                for (i, l) in sp.eigenvalues(n).into_iter().enumerate() {
                    outln!("{i},{:e}", scale * l);
                }
            } else {
                let op = discretize(&cfg.kernel_spec()?, grid_size, None)?;
                for (i, l) in oracle_eigenvalues(&op)?.into_iter().take(n).enumerate() {
                    outln!("{i},{:e}", l);
                }
            }
            Ok(EXIT_POSITIVE)
        }
        Cmd::Wigner { config, grid, window, out } => {
            let spec = KernelConfig::load(&config)?.kernel_spec()?;
            let (nx, np) = parse_grid(&grid)?;
            let w = wigner_forward(&spec, &WignerGeometry::new(nx, np, window))?;
            let mut f = create(&out)?;
            if out.extension().is_some_and(|e| e == "bin") {
                write_binary(&w, &mut f)?;
            } else {
                write_csv(&w, &mut f)?;
            }
            f.flush()?;
            outln!("integral,{:e}", w.integral());
            outln!("imag_residue,{:e}", w.imag_residue);
            Ok(EXIT_POSITIVE)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_POSITIVE };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Engine(msg)) => {
            eprintln!("engine failure: {msg}");
            ExitCode::from(EXIT_ENGINE)
        }
    }
}
