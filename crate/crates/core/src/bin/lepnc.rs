use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lepnc::gdm::diagnose;
use lepnc::harness::{find_case, run_family, to_csv, to_table, Init, RunOptions, DEFAULT_LEVELS};
use lepnc::mesh::{write_mesh, MeshFamily};
use lepnc::space::build_space;

#[derive(Parser)]
#[command(
    name = "lepnc",
    version,
    about = "Polytopal non-conforming finite elements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of one test case on one mesh family.
    Run {
        /// linear, s1, s2, p1-m1 .. p1-m4, p2
        #[arg(long)]
        case: String,
        /// cartesian, hexagonal, kershaw, locref
        #[arg(long)]
        family: MeshFamily,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        varpi: f64,
        /// Solve through static condensation.
        #[arg(long)]
        condense: bool,
        /// Initial Newton state.
        #[arg(long, value_enum, default_value_t = InitArg::Zero)]
        init: InitArg,
        /// Directory for `<case>_<family>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Writes one mesh of a family.
    Mesh {
        #[arg(long)]
        family: MeshFamily,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tables of C_D, S_D and W_D over the levels of a family.
    Gdm {
        #[arg(long)]
        family: MeshFamily,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
        levels: Vec<usize>,
    },
}

const USAGE: u8 = 1;
const FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            case,
            family,
            levels,
            varpi,
            condense,
            init,
            out,
            format: Format::Csv,
        } => {
            let Some(test) = find_case(&case) else {
                eprintln!("unknown case '{case}'");
                return ExitCode::from(USAGE);
            };
            if !(0.0..=1.0).contains(&varpi) {
                eprintln!("--varpi must lie in [0, 1]");
                return ExitCode::from(USAGE);
            }
            let opts = RunOptions {
                varpi,
                condense,
                init: match init {
                    InitArg::Zero => Init::Zero,
                    InitArg::Exact => Init::Exact,
                },
                ..Default::default()
            };
            let report = run_family(&test, family, &levels, &opts);
            print!("{}", to_table(&report));
            if let Some(dir) = out {
                let path = dir.join(format!("{}_{}.csv", test.name, family.name()));
                if let Err(e) = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(&path, to_csv(&report)))
                {
                    eprintln!("cannot write {}: {e}", path.display());
                    return ExitCode::from(FAILED);
                }
            }
            if report.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(FAILED)
            }
        }
        Command::Mesh { family, n, out } => {
            let written = family
                .generate(n)
                .map_err(|e| e.to_string())
                .and_then(|m| write_mesh(&m, &out).map_err(|e| e.to_string()));
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(FAILED)
                }
            }
        }
        Command::Gdm { family, levels } => {
            println!(
                "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "n", "h", "C_D", "C_D(ml)", "S_D", "W_D", "W_D(const)"
            );
            let mut ok = true;
            for n in levels {
                let row = family.generate(n).map_err(|e| e.to_string()).and_then(|m| {
                    let s = build_space(&m).map_err(|e| e.to_string())?;
                    let d = diagnose(&s).map_err(|e| e.to_string())?;
                    Ok((m.h_max, d))
                });
                match row {
                    Ok((h, d)) => println!(
                        "{n:>5} {h:>10.3e} {:>10.4e} {:>10.4e} {:>10.3e} {:>10.3e} {:>10.1e}",
                        d.cd, d.cd_lumped, d.sd, d.wd, d.wd_constant
                    ),
                    Err(e) => {
                        ok = false;
                        println!("{n:>5} failed: {e}");
                    }
                }
            }
            println!("S_D is the sum of norms at the least-squares minimiser (within a factor sqrt(2) of the exact minimum).");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(FAILED)
            }
        }
    }
}
