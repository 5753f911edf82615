//! Result records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use laprep_core::bounds::{Bound, BoundReport, INVARIANT_SLACK};

use crate::BenchError;

pub const CSV_FORMAT_VERSION: u32 = 1;

pub const HEADER: [&str; 15] = [
    "n",
    "m",
    "w",
    "seed",
    "k",
    "lambda2",
    "lambda_k",
    "lambda_k1",
    "epsilon",
    "err_exact",
    "err_gdo",
    "trunc_bound",
    "est_bound",
    "total_bound",
    "runtime_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub m: usize,
    pub w: usize,
    pub seed: u64,
    pub k: usize,
    pub lambda2: f64,
    pub lambda_k: f64,
    pub lambda_k1: f64,
    pub epsilon: f64,
    pub err_exact: f64,
    pub err_gdo: f64,
    pub trunc_bound: f64,
    pub est_bound: Bound,
    pub total_bound: Bound,
    pub runtime_ms: u64,
}

impl SweepRecord {
    pub fn from_report(n: usize, m: usize, w: usize, seed: u64, report: &BoundReport, runtime_ms: u64) -> Self {
        Self {
            n,
            m,
            w,
            seed,
            k: report.k,
            lambda2: report.lambda2,
            lambda_k: report.lambda_k,
            lambda_k1: report.lambda_k1,
            epsilon: report.epsilon,
            err_exact: report.err_exact_basis,
            err_gdo: report.err_learned_basis,
            trunc_bound: report.truncation_bound,
            est_bound: report.estimation_bound,
            total_bound: report.total_bound,
            runtime_ms,
        }
    }

    pub fn key(&self) -> (usize, u64, usize) {
        (self.w, self.seed, self.k)
    }

    /// The record-level bound inequalities.
    pub fn check(&self) -> Result<(), BenchError> {
        if self.err_exact > self.trunc_bound + INVARIANT_SLACK {
            return Err(BenchError::Invariant(format!(
                "cell {:?}: err_exact {:e} > trunc_bound {:e}",
                self.key(),
                self.err_exact,
                self.trunc_bound
            )));
        }
        if let Bound::Finite(total) = self.total_bound {
            if self.err_gdo > total + INVARIANT_SLACK {
                return Err(BenchError::Invariant(format!(
                    "cell {:?}: err_gdo {:e} > total_bound {:e}",
                    self.key(),
                    self.err_gdo,
                    total
                )));
            }
        }
        Ok(())
    }

    fn fields(&self) -> [String; 15] {
        [
            self.n.to_string(),
            self.m.to_string(),
            self.w.to_string(),
            self.seed.to_string(),
            self.k.to_string(),
            fmt_float(self.lambda2),
            fmt_float(self.lambda_k),
            fmt_float(self.lambda_k1),
            fmt_float(self.epsilon),
            fmt_float(self.err_exact),
            fmt_float(self.err_gdo),
            fmt_float(self.trunc_bound),
            fmt_bound(self.est_bound),
            fmt_bound(self.total_bound),
            self.runtime_ms.to_string(),
        ]
    }
}

/// Twelve significant digits; infinities as `inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".into()
    } else {
        format!("{x:.11e}")
    }
}

fn fmt_bound(b: Bound) -> String {
    match b {
        Bound::Finite(x) => fmt_float(x),
        Bound::Vacuous => "inf".into(),
    }
}

fn parse_float(s: &str, column: &str) -> Result<f64, BenchError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| BenchError::Schema(format!("column {column}: cannot parse {s:?}")))
}

fn parse_bound(s: &str, column: &str) -> Result<Bound, BenchError> {
    if s.trim() == "inf" {
        Ok(Bound::Vacuous)
    } else {
        parse_float(s, column).map(Bound::Finite)
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, column: &str) -> Result<T, BenchError> {
    s.trim()
        .parse::<T>()
        .map_err(|_| BenchError::Schema(format!("column {column}: cannot parse {s:?}")))
}

/// Header comment lines written above the CSV header, without the `# `.
pub fn comment_lines(extra: &[String]) -> Vec<String> {
    let mut lines = vec![format!("format_version={CSV_FORMAT_VERSION}")];
    lines.extend(extra.iter().cloned());
    lines
}

/// Writes records sorted by `(w, seed, k)` after re-checking their bounds.
pub fn write_csv_to<W: Write>(out: W, records: &[SweepRecord], comments: &[String]) -> Result<(), BenchError> {
    if records.is_empty() {
        return Err(BenchError::Schema("no records to write".into()));
    }
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    for r in &sorted {
        r.check()?;
    }
    let mut out = out;
    for line in comment_lines(comments) {
        writeln!(out, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(HEADER)?;
    for r in sorted {
        writer.write_record(r.fields())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[SweepRecord], comments: &[String]) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, records, comments)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Parses a results CSV, skipping `#` comment lines.
pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<SweepRecord>, BenchError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(BenchError::Schema(format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != HEADER.len() {
            return Err(BenchError::Schema(format!("row has {} fields", row.len())));
        }
        let f = |i: usize| &row[i];
        records.push(SweepRecord {
            n: parse_int(f(0), HEADER[0])?,
            m: parse_int(f(1), HEADER[1])?,
            w: parse_int(f(2), HEADER[2])?,
            seed: parse_int(f(3), HEADER[3])?,
            k: parse_int(f(4), HEADER[4])?,
            lambda2: parse_float(f(5), HEADER[5])?,
            lambda_k: parse_float(f(6), HEADER[6])?,
            lambda_k1: parse_float(f(7), HEADER[7])?,
            epsilon: parse_float(f(8), HEADER[8])?,
            err_exact: parse_float(f(9), HEADER[9])?,
            err_gdo: parse_float(f(10), HEADER[10])?,
            trunc_bound: parse_float(f(11), HEADER[11])?,
            est_bound: parse_bound(f(12), HEADER[12])?,
            total_bound: parse_bound(f(13), HEADER[13])?,
            runtime_ms: parse_int(f(14), HEADER[14])?,
        });
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>, BenchError> {
    read_csv_from(std::fs::File::open(path)?)
}

/// A cell that failed, written next to the results as `<out>.errors.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub w: usize,
    pub seed: u64,
    pub k: usize,
    pub error: String,
}

pub fn errors_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".errors.csv");
    path.with_file_name(name)
}

pub fn write_errors(path: &Path, errors: &[CellError]) -> Result<(), BenchError> {
    let mut sorted: Vec<&CellError> = errors.iter().collect();
    sorted.sort_by_key(|e| (e.w, e.seed, e.k));
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["w", "seed", "k", "error"])?;
    for e in sorted {
        writer.write_record([e.w.to_string(), e.seed.to_string(), e.k.to_string(), e.error.clone()])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, k: usize) -> SweepRecord {
        SweepRecord {
            n: 15,
            m: 15,
            w,
            seed: 3,
            k,
            lambda2: 0.010_898_765_432_1,
            lambda_k: 0.2,
            lambda_k1: 0.25,
            epsilon: 1.234_567_890_12e-5,
            err_exact: 0.031,
            err_gdo: 0.032,
            trunc_bound: 0.5,
            est_bound: Bound::Finite(0.1),
            total_bound: Bound::Finite(0.6),
            runtime_ms: 0,
        }
    }

    fn to_string(records: &[SweepRecord]) -> String {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, records, &["beta=5".into()]).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn one_record_is_two_data_lines() {
        let text = to_string(&[sample(1, 20)]);
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0], HEADER.join(","));
        assert!(text.starts_with("# format_version=1\n# beta=5\n"));
    }

    #[test]
    fn vacuous_bounds_are_inf() {
        let mut r = sample(1, 20);
        r.est_bound = Bound::Vacuous;
        r.total_bound = Bound::Vacuous;
        r.lambda_k1 = f64::INFINITY;
        let text = to_string(&[r.clone()]);
        let row = text.lines().last().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[7], "inf");
        assert_eq!(fields[12], "inf");
        assert_eq!(fields[13], "inf");
        assert_eq!(read_csv_from(text.as_bytes()).unwrap(), vec![r]);
    }

    #[test]
    fn round_trip_keeps_twelve_digits() {
        let records = vec![sample(2, 20), sample(1, 5), sample(1, 20)];
        let back = read_csv_from(to_string(&records).as_bytes()).unwrap();
        assert_eq!(back.iter().map(|r| r.key()).collect::<Vec<_>>(), vec![(1, 3, 5), (1, 3, 20), (2, 3, 20)]);
        assert_eq!(back[0].lambda2, 0.010_898_765_432_1);
        assert_eq!(back[0].epsilon, 1.234_567_890_12e-5);
        // Longer mantissas are rounded to twelve significant digits.
        let mut long = sample(1, 5);
        long.err_gdo = std::f64::consts::PI / 100.0;
        let back = read_csv_from(to_string(&[long]).as_bytes()).unwrap();
        let rel = (back[0].err_gdo - std::f64::consts::PI / 100.0).abs() / (std::f64::consts::PI / 100.0);
        assert!(rel > 0.0 && rel <= 5e-12, "{rel}");
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(0.5), "5.00000000000e-1");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    #[test]
    fn violated_record_is_not_written() {
        let mut r = sample(1, 20);
        r.err_exact = 0.7;
        assert!(matches!(write_csv_to(Vec::new(), &[r], &[]), Err(BenchError::Invariant(_))));
        assert!(write_csv_to(Vec::new(), &[], &[]).is_err());
    }

    #[test]
    fn rejects_bad_schema() {
        assert!(read_csv_from("a,b\n1,2\n".as_bytes()).is_err());
        let text = to_string(&[sample(1, 20)]).replace("0.031", "x");
        let broken = text.replacen("3.10000000000e-2", "oops", 1);
        assert!(read_csv_from(broken.as_bytes()).is_err());
    }

    #[test]
    fn errors_file_sits_next_to_results() {
        assert_eq!(errors_path(Path::new("out/results.csv")), Path::new("out/results.csv.errors.csv"));
    }
}
