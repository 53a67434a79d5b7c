use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::{ErrorReport, ErrorRow};
use crate::error::{Error, Result};

/// Comment lines that open every CSV artifact: code version and the
/// resolved config as one line of JSON.
pub fn artifact_header(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("# pointwave {}\n# config {json}\n", crate::VERSION))
}

/// Writes `content`, creating parent directories.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// A CSV body prefixed with the artifact header.
pub fn write_csv_artifact(path: &Path, cfg: &ExperimentConfig, body: &str) -> Result<()> {
    write_text(path, &(artifact_header(cfg)? + body))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    eps: f64,
    #[serde(rename = "E_free")]
    e_free: f64,
    #[serde(rename = "E_eff")]
    e_eff: f64,
    #[serde(rename = "E_free_excl")]
    e_free_excl: f64,
    #[serde(rename = "E_eff_excl")]
    e_eff_excl: f64,
    #[serde(rename = "T")]
    horizon: f64,
    tau: f64,
    h: f64,
    dt: f64,
    modes: usize,
    captured_mass: f64,
}

const CSV_COLUMNS: [&str; 11] = [
    "eps",
    "E_free",
    "E_eff",
    "E_free_excl",
    "E_eff_excl",
    "T",
    "tau",
    "h",
    "dt",
    "modes",
    "captured_mass",
];

impl ErrorReport {
    /// Rows as CSV, header always present. Run times are left out so that
    /// identical configs give identical files.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Config(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(fail)?;
        for r in &self.rows {
            w.serialize(CsvRow {
                eps: r.eps,
                e_free: r.e_free,
                e_eff: r.e_eff,
                e_free_excl: r.e_free_excl,
                e_eff_excl: r.e_eff_excl,
                horizon: r.horizon,
                tau: r.tau,
                h: r.h,
                dt: r.dt,
                modes: r.modes,
                captured_mass: r.captured_mass,
            })
            .map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(artifact_header(&self.config)? + &String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads the rows of a report CSV (run times come back as zero).
pub fn read_report_csv(path: &Path) -> Result<(ExperimentConfig, Vec<ErrorRow>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Format {
        path: path.to_path_buf(),
        message: m,
    };
    let config_line = text
        .lines()
        .find_map(|l| l.strip_prefix("# config "))
        .ok_or_else(|| bad("missing config header".into()))?;
    let config: ExperimentConfig = serde_json::from_str(config_line).map_err(|e| bad(e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<CsvRow>() {
        let r = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(ErrorRow {
            eps: r.eps,
            e_free: r.e_free,
            e_eff: r.e_eff,
            e_free_excl: r.e_free_excl,
            e_eff_excl: r.e_eff_excl,
            horizon: r.horizon,
            tau: r.tau,
            h: r.h,
            dt: r.dt,
            modes: r.modes,
            captured_mass: r.captured_mass,
            runtime_seconds: 0.0,
        });
    }
    Ok((config, rows))
}

pub fn read_report(path: &Path) -> Result<ErrorReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ErrorReport::from_json(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Gnuplot script drawing the four error columns of `csv_name` against ε
/// on log-log axes.
pub fn plot_script(csv_name: &str, report: &ErrorReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("# pointwave {}\n", crate::VERSION));
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\n");
    s.push_str("set logscale xy\nset xlabel 'eps'\nset ylabel 'sup_t L2 error'\nset key top left\n");
    s.push_str("set terminal pngcairo size 800,600\nset output 'errors.png'\n");
    if let Some(sl) = &report.slopes {
        s.push_str(&format!(
            "set title sprintf('s_free = %.3f, s_eff = %.3f (exclusion ball)', {}, {})\n",
            sl.free_excl.slope, sl.eff_excl.slope
        ));
    }
    let col = |i: usize, t: &str| format!("'{csv_name}' every ::1 using 1:{i} with linespoints title '{t}'");
    s.push_str(&format!(
        "plot {}, \\\n     {}, \\\n     {}, \\\n     {}\n",
        col(2, "E_free"),
        col(3, "E_eff"),
        col(4, "E_free (excl)"),
        col(5, "E_eff (excl)")
    ));
    s
}

/// Paths written by [`export_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plot: PathBuf,
}

/// Writes `report.csv`, `report.json` and `plot_errors.gp` into `dir`.
pub fn export_report(report: &ErrorReport, dir: &Path) -> Result<ReportFiles> {
    let files = ReportFiles {
        csv: dir.join("report.csv"),
        json: dir.join("report.json"),
        plot: dir.join("plot_errors.gp"),
    };
    write_text(&files.csv, &report.to_csv()?)?;
    write_text(&files.json, &report.to_json()?)?;
    write_text(&files.plot, &plot_script("report.csv", report))?;
    Ok(files)
}
