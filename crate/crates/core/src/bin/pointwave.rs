use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pointwave::effective::EffectiveField;
use pointwave::fdtd::{run, RunOptions};
use pointwave::harness::{
    compare, contrast_grid, export_report, forcing, modulation, reference_spectrum, run_sweep_with, write_csv_artifact,
    ErrorReport, ExperimentConfig,
};
use pointwave::{Error, Num, Result};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "pointwave", version, about = "Point-scatterer approximation for high-contrast inclusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replace the config's eps list by this single value.
    #[arg(long, global = true, value_name = "X")]
    eps: Option<f64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Eigensolver seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Newton spectrum and couplings of the inclusion.
    Spectrum,
    /// Forcing h(t) = Δu_free(t, 0).
    Forcing,
    /// Modulation signal q(t).
    Modulation,
    /// Free and effective field along the positive x axis.
    Effective,
    /// Full contrast FDTD run with probe traces and a final snapshot.
    Fdtd,
    /// One ε: FDTD against free and effective fields.
    Compare,
    /// Every ε of the config, with slope fits and a plot script.
    Sweep,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(e) = cli.eps {
        cfg.eps = vec![e];
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn first_eps(cfg: &ExperimentConfig) -> f64 {
    cfg.eps[0]
}

/// Points on the positive x axis from the exclusion radius out to the
/// comparison radius.
fn axis_points(cfg: &ExperimentConfig, count: usize) -> Vec<[f64; 3]> {
    let (a, b) = (cfg.compare.exclusion.max(1e-3), cfg.compare.radius);
    (0..count)
        .map(|i| [a + (b - a) * i as f64 / (count - 1) as f64, 0.0, 0.0])
        .collect()
}

fn print_report(report: &ErrorReport) {
    println!("eps\tE_free\tE_eff\tE_free_excl\tE_eff_excl\tmodes\tseconds");
    for r in &report.rows {
        println!(
            "{}\t{:.4e}\t{:.4e}\t{:.4e}\t{:.4e}\t{}\t{:.1}",
            r.eps, r.e_free, r.e_eff, r.e_free_excl, r.e_eff_excl, r.modes, r.runtime_seconds
        );
    }
    if let Some(s) = &report.slopes {
        for (name, f) in [
            ("s_free", &s.free),
            ("s_eff", &s.eff),
            ("s_free_excl", &s.free_excl),
            ("s_eff_excl", &s.eff_excl),
        ] {
            let delta = f.drop_finest_delta.map_or(String::from("n/a"), |d| format!("{d:+.3}"));
            println!(
                "{name} = {:.3}  95% CI [{:.3}, {:.3}]  drop-finest delta {delta}",
                f.slope, f.ci_low, f.ci_high
            );
        }
    }
    for (excl, label) in [(false, "full"), (true, "exclusion-ball")] {
        let bad = report.ordering_failures(excl);
        if !bad.is_empty() {
            println!("ordering E_eff < E_free fails ({label} norm) at eps = {bad:?}");
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let out = cfg.output.clone();
    let data = cfg.bundle()?;
    match cli.command {
        Command::Spectrum => {
            let dec = reference_spectrum(&cfg)?;
            let csv = dec.to_csv();
            write_csv_artifact(&out.join("spectrum.csv"), &cfg, &csv)?;
            print!("{csv}");
            println!(
                "captured mass {:.6} of |Ω| = {:.6} ({:.3}%) with {} modes",
                dec.captured_mass,
                dec.volume,
                100.0 * dec.captured_mass / dec.volume,
                dec.len()
            );
        }
        Command::Forcing => {
            let t = cfg.horizon(first_eps(&cfg));
            let h = forcing(&cfg, &data, t)?;
            write_csv_artifact(&out.join("forcing.csv"), &cfg, &h.to_csv())?;
            println!("wrote {} samples of h(t) to {}", h.values.len(), out.join("forcing.csv").display());
        }
        Command::Modulation => {
            let t = cfg.horizon(first_eps(&cfg));
            let dec = reference_spectrum(&cfg)?;
            let q = modulation(&cfg, &dec.without_vectors(), &data, t)?;
            write_csv_artifact(&out.join("modulation.csv"), &cfg, &q.to_csv())?;
            println!(
                "wrote q(t) with {} modes ({} route) to {}",
                q.modes(),
                q.route,
                out.join("modulation.csv").display()
            );
        }
        Command::Effective => {
            let eps = first_eps(&cfg);
            let t_end = cfg.horizon(eps);
            let dec = reference_spectrum(&cfg)?;
            let q = modulation(&cfg, &dec.without_vectors(), &data, t_end)?;
            let mut field = EffectiveField::new(eps, q, data.clone(), cfg.compare.exclusion)?;
            field.sphere_order = cfg.signal.sphere_order;
            let points = axis_points(&cfg, 61);
            let mut csv = String::from("t,x,u_free,u_eff\n");
            let steps = (t_end / cfg.compare.sample_interval).floor() as usize;
            for k in 0..=steps {
                let t = k as f64 * cfg.compare.sample_interval;
                let eff = field.sample(t, &points)?;
                for (x, v) in points.iter().zip(eff) {
                    let Some(v) = v else { continue };
                    let free = v - field.correction(t, *x)?;
                    csv.push_str(&format!("{},{},{},{}\n", Num(t), Num(x[0]), Num(free), Num(v)));
                }
            }
            write_csv_artifact(&out.join("effective.csv"), &cfg, &csv)?;
            println!("wrote u_free and u_eff at eps={eps} to {}", out.join("effective.csv").display());
        }
        Command::Fdtd => {
            let eps = first_eps(&cfg);
            let (plan, grid) = contrast_grid(&cfg, eps)?;
            let mut opts = RunOptions::new(plan.horizon);
            opts.probes = axis_points(&cfg, 7);
            opts.snapshot_times = vec![plan.horizon];
            opts.snapshot_half_width = Some(cfg.compare.radius);
            let result = run(&grid, &data, &opts)?;
            write_csv_artifact(&out.join("fdtd_probes.csv"), &cfg, &result.traces_csv())?;
            let snap = &result.snapshots[0];
            let meta = serde_json::json!({ "eps": eps, "config": cfg, "version": pointwave::VERSION });
            snap.write_snapshot(&out.join("fdtd_final.bin"), meta)?;
            println!(
                "eps={eps}: {}³ nodes, {} steps of dt={:.4e}; probes and final snapshot in {}",
                grid.n,
                result.steps,
                result.dt,
                out.display()
            );
        }
        Command::Compare => {
            let row = compare(&cfg, first_eps(&cfg))?;
            let report = ErrorReport::new(cfg.clone(), vec![row], 0.0)?;
            export_report(&report, &out)?;
            print_report(&report);
        }
        Command::Sweep => {
            let report = run_sweep_with(&cfg, |r| {
                eprintln!("eps={} done in {:.1}s", r.eps, r.runtime_seconds);
            })?;
            let files = export_report(&report, &out)?;
            print_report(&report);
            println!("report: {}, plot script: {}", files.csv.display(), files.plot.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
