//! Sweep tables: writing `sweep.csv`, reading it back, and the long-format
//! plotting export.
//!
//! `sweep.csv` columns: `tau_p,speed_ratio,w,mean_T,stderr,capture_fraction,truncated,n`.
//! `speed_ratio` is empty for the lattice environment. Lines starting with
//! `#` are comments.

use std::fmt::Write as _;

use crate::CliError;

pub const SWEEP_HEADER: &str = "tau_p,speed_ratio,w,mean_T,stderr,capture_fraction,truncated,n";
pub const RANDOM_HEADER: &str = "tau_p,speed_ratio,alpha,mean_T,stderr,capture_fraction,truncated,n";
pub const PLOT_HEADER: &str = "tau_p,speed_ratio,w,quantity,value";

/// One point of a sweep; `param` is `w` or `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau_p: f64,
    pub speed_ratio: Option<f64>,
    pub param: f64,
    pub mean: f64,
    pub stderr: f64,
    pub capture_fraction: f64,
    pub truncated: usize,
    pub n: usize,
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        let ratio = self.speed_ratio.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{}",
            self.tau_p, ratio, self.param, self.mean, self.stderr, self.capture_fraction, self.truncated, self.n
        )
    }

    fn same_group(&self, other: &SweepRow) -> bool {
        self.tau_p == other.tau_p && self.speed_ratio == other.speed_ratio
    }
}

pub fn comment_lines(header: &[String]) -> String {
    header.iter().map(|h| format!("# {h}\n")).collect()
}

/// Parse a sweep table. Errors carry 1-based line numbers.
pub fn parse_sweep(text: &str) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != SWEEP_HEADER {
                return Err(CliError::Input(format!(
                    "line {lineno}: expected header `{SWEEP_HEADER}`, found `{line}`"
                )));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::Input(format!(
                "line {lineno}: expected 8 fields, found {}",
                fields.len()
            )));
        }
        let num = |i: usize, name: &str| -> Result<f64, CliError> {
            fields[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("line {lineno}: bad {name} `{}`", fields[i])))
        };
        let count = |i: usize, name: &str| -> Result<usize, CliError> {
            fields[i]
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("line {lineno}: bad {name} `{}`", fields[i])))
        };
        let speed_ratio = if fields[1].trim().is_empty() {
            None
        } else {
            Some(num(1, "speed_ratio")?)
        };
        let row = SweepRow {
            tau_p: num(0, "tau_p")?,
            speed_ratio,
            param: num(2, "w")?,
            mean: num(3, "mean_T")?,
            stderr: num(4, "stderr")?,
            capture_fraction: num(5, "capture_fraction")?,
            truncated: count(6, "truncated")?,
            n: count(7, "n")?,
        };
        if !(0.0..=1.0).contains(&row.param) || row.mean < 0.0 || row.stderr < 0.0 || row.n == 0 {
            return Err(CliError::Input(format!("line {lineno}: value out of range")));
        }
        rows.push(row);
    }
    if !seen_header {
        return Err(CliError::Input("missing header line".into()));
    }
    Ok(rows)
}

/// Rows grouped by `(tau_p, speed_ratio)`, in order of first appearance.
pub fn groups(rows: &[SweepRow]) -> Vec<Vec<&SweepRow>> {
    let mut out: Vec<Vec<&SweepRow>> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|g| g[0].same_group(r)) {
            Some(g) => g.push(r),
            None => out.push(vec![r]),
        }
    }
    out
}

/// Row with the smallest mean search time (first one on ties).
pub fn best<'a>(group: &[&'a SweepRow]) -> &'a SweepRow {
    group
        .iter()
        .copied()
        .fold(None::<&SweepRow>, |acc, r| match acc {
            Some(b) if b.mean <= r.mean => Some(b),
            _ => Some(r),
        })
        .expect("groups are nonempty")
}

/// Long-format table with `mean_T`, `stderr`, `ratio_to_best` and
/// `ratio_to_infotaxis` for every sweep point.
pub fn plotdata(rows: &[SweepRow], header: &[String]) -> Result<String, CliError> {
    let mut out = comment_lines(header);
    out.push_str(PLOT_HEADER);
    out.push('\n');
    for g in groups(rows) {
        let infotaxis = g.iter().find(|r| r.param == 0.0).ok_or_else(|| {
            let ratio = g[0].speed_ratio.map(|r| format!(", speed_ratio={r}")).unwrap_or_default();
            CliError::Input(format!("no Infotaxis baseline (w=0 row) for tau_p={}{ratio}", g[0].tau_p))
        })?;
        let b = best(&g);
        for r in &g {
            let ratio = r.speed_ratio.map(|v| v.to_string()).unwrap_or_default();
            for (q, v) in [
                ("mean_T", r.mean),
                ("stderr", r.stderr),
                ("ratio_to_best", ratio_of(r, b)),
                ("ratio_to_infotaxis", ratio_of(r, infotaxis)),
            ] {
                let _ = writeln!(out, "{},{},{},{},{:.6}", r.tau_p, ratio, r.param, q, v);
            }
        }
    }
    Ok(out)
}

fn ratio_of(r: &SweepRow, base: &SweepRow) -> f64 {
    if std::ptr::eq(r, base) {
        1.0
    } else {
        r.mean / base.mean
    }
}
