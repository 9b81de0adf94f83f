//! Run artifacts: CSV tables, `summary.txt` and `manifest.txt`.

use qho_core::matlib::RealMatrix;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

const SIG_DIGITS: usize = 12;

/// Shortest `%.12g`-style rendering.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn matrix(m: &RealMatrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| format!("[{}]", r.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Upper-triangle column names `p11, p12, ...` for an `n × n` matrix.
pub fn upper_names(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for j in 0..n {
        for k in j..n {
            out.push(format!("{prefix}{}{}", j + 1, k + 1));
        }
    }
    out
}

pub fn upper_values(m: &RealMatrix) -> Vec<String> {
    let n = m.nrows();
    let mut out = Vec::new();
    for j in 0..n {
        for k in j..n {
            out.push(num(m[(j, k)]));
        }
    }
    out
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Default)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }
}

pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf() })
    }

    pub fn write_table(&self, name: &str, table: &Table) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(self.dir.join(name))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()
    }

    pub fn write_summary(&self, summary: &Summary) -> io::Result<()> {
        let mut text = String::new();
        for (k, v) in &summary.lines {
            text.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(self.dir.join("summary.txt"), text)
    }

    /// Echo of the inputs; only the `timestamp` line varies between runs.
    pub fn write_manifest(&self, command: &str, options: &[(&str, String)], config_path: &str, config_text: &str) -> io::Result<()> {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = format!(
            "tool = qho {}\ncommand = {command}\nconfig = {config_path}\nseed = none\n",
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in options {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text.push_str(&format!("timestamp = {stamp}\n--- config ---\n{config_text}"));
        if !config_text.ends_with('\n') {
            text.push('\n');
        }
        fs::write(self.dir.join("manifest.txt"), text)
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(46.863429123456789), "46.8634291235");
        assert_eq!(num(-0.00012345678901234), "-0.000123456789012");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(1.5e-7), "1.5e-7");
        assert_eq!(num(2.0e13), "2e13");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
