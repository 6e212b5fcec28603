//! CSV tables and `key = value` summaries, written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lmem::C64;

use crate::error::CliError;

/// Shortest round-trip decimal; exponent form outside [1e-5, 1e16).
pub fn fmt_num(x: f64) -> String {
    // Negative zero prints as 0.
    let x = x + 0.0;
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Column-major numeric table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Table {
        Table::default()
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.headers.push(name.into());
        self.columns.push(values);
    }

    /// Paired `_re` / `_im` columns.
    pub fn push_complex(&mut self, name: &str, values: &[C64]) {
        self.push(format!("{name}_re"), values.iter().map(|v| v.re).collect());
        self.push(format!("{name}_im"), values.iter().map(|v| v.im).collect());
    }

    pub fn rows(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Short columns are padded with empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = self.headers.join(",");
        s.push('\n');
        for r in 0..self.rows() {
            let cells: Vec<String> =
                self.columns.iter().map(|c| c.get(r).map_or(String::new(), |&v| fmt_num(v))).collect();
            s += &cells.join(",");
            s.push('\n');
        }
        s
    }
}

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Summary {
        Summary::default()
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) {
        self.entries.push((key.into(), fmt_num(v)));
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl Into<String>) {
        self.entries.push((key.into(), v.into()));
    }

    pub fn flag(&mut self, key: impl Into<String>, v: bool) {
        self.text(key, if v { "true" } else { "false" });
    }

    pub fn list(&mut self, key: impl Into<String>, v: &[f64]) {
        self.text(key, v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(","));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Entries that parse as single numbers, in order.
    pub fn numeric(&self) -> Vec<(String, f64)> {
        self.entries.iter().filter_map(|(k, v)| v.parse::<f64>().ok().map(|x| (k.clone(), x))).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// `<dir>/<stem>.csv` and `<dir>/<stem>.summary`.
pub fn emit(dir: &Path, stem: &str, table: &Table, summary: &Summary) -> Result<(), CliError> {
    write_atomic(&dir.join(format!("{stem}.csv")), &table.to_csv())?;
    write_atomic(&dir.join(format!("{stem}.summary")), &summary.render())
}

/// Complex samples from a CSV with a header: the first column is the
/// abscissa, then the first `*_re` column and its `*_im` partner.
pub fn read_complex_csv(path: &Path) -> Result<(Vec<f64>, Vec<C64>), CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let bad = |line: usize, msg: String| CliError::Config { origin: path.display().to_string(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let re = cols.iter().position(|c| c.ends_with("_re")).ok_or_else(|| bad(1, "no `_re` column".into()))?;
    let partner = format!("{}_im", cols[re].trim_end_matches("_re"));
    let im = cols.iter().position(|c| *c == partner).ok_or_else(|| bad(1, format!("no `{partner}` column")))?;
    let mut x = Vec::new();
    let mut v = Vec::new();
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64, CliError> {
            cells
                .get(i)
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(idx + 1, format!("column {} is not a finite number", i + 1)))
        };
        x.push(num(0)?);
        v.push(C64::new(num(re)?, num(im)?));
    }
    if v.len() < 2 {
        return Err(bad(1, "need at least two data rows".into()));
    }
    Ok((x, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -0.1, 1.0 / 3.0, 1e-7, 6.02e23, 123456.789, -2.5e-300] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(-0.0), "0");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new();
        t.push("x", vec![0.0, 0.5]);
        t.push_complex("e", &[C64::new(1.0, -1.0)]);
        assert_eq!(t.to_csv(), "x,e_re,e_im\n0,1,-1\n0.5,,\n");
    }

    #[test]
    fn summary_render_and_numeric() {
        let mut s = Summary::new();
        s.num("eta", 0.5);
        s.text("kind", "backward");
        s.flag("ok", true);
        assert_eq!(s.render(), "eta = 0.5\nkind = backward\nok = true\n");
        assert_eq!(s.numeric(), vec![("eta".to_string(), 0.5)]);
    }

    #[test]
    fn complex_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new();
        t.push("t", vec![0.0, 1.0, 2.0]);
        t.push_complex("e", &[C64::new(1.0, 0.5), C64::new(-2.0, 0.0), C64::new(0.0, 3.0)]);
        let path = dir.path().join("in.csv");
        write_atomic(&path, &t.to_csv()).unwrap();
        let (x, v) = read_complex_csv(&path).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 2.0]);
        assert_eq!(v[2], C64::new(0.0, 3.0));
    }
}
