//! Comma-separated datasets with a single header row.
//!
//! | kind     | columns                                   |
//! |----------|-------------------------------------------|
//! | Rabi     | `duration_s,population[,sigma]`           |
//! | Ramsey   | `frequency_hz,population[,sigma]`         |
//!
//! Frequencies are stored in Hz and held in rad/s in memory.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rydres_core::experiment::{RabiTrace, Spectrum};
use rydres_core::units::{hz, to_hz};

pub const RABI_HEADER: [&str; 3] = ["duration_s", "population", "sigma"];
pub const RAMSEY_HEADER: [&str; 3] = ["frequency_hz", "population", "sigma"];

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Rabi(RabiTrace),
    Spectrum(Spectrum),
}

/// A dataset plus anything worth telling the user about how it was read.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataError {
    /// 1-based line in the file, when the problem is tied to one row.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for DataError {}

fn err(line: Option<usize>, message: impl Into<String>) -> DataError {
    DataError { line, message: message.into() }
}

/// Reads a dataset, recognizing its kind from the first header column.
///
/// A missing sigma column is replaced by `default_sigma` on every row, and a
/// warning says so.
pub fn read_dataset(path: &Path, default_sigma: f64) -> Result<Loaded, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(None, format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(&text, default_sigma)
}

pub fn parse_dataset(text: &str, default_sigma: f64) -> Result<Loaded, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(Some(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = match header.first().map(String::as_str) {
        Some("duration_s") => RABI_HEADER,
        Some("frequency_hz") => RAMSEY_HEADER,
        _ => {
            return Err(err(
                Some(1),
                format!("header must start with `duration_s` or `frequency_hz`, got {:?}", header.join(",")),
            ))
        }
    };
    let has_sigma = match header.len() {
        2 if header[1] == expected[1] => false,
        3 if header[1] == expected[1] && header[2] == expected[2] => true,
        _ => return Err(err(Some(1), format!("header must be `{}` (sigma optional)", expected.join(",")))),
    };

    let (mut x, mut p, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map(|p| p.line() as usize), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize);
        if record.len() != header.len() {
            return Err(err(line, format!("expected {} columns, found {}", header.len(), record.len())));
        }
        let field = |i: usize| -> Result<f64, DataError> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| err(line, format!("`{}` is not a number in column {}", &record[i], header[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("non-finite value in column {}", header[i])))
            }
        };
        let xv = field(0)?;
        if let Some(&prev) = x.last() {
            if xv <= prev {
                return Err(err(line, format!("{} is not strictly increasing ({xv} after {prev})", header[0])));
            }
        }
        let pv = field(1)?;
        if !(0.0..=1.0).contains(&pv) {
            return Err(err(line, format!("population {pv} outside [0, 1]")));
        }
        if has_sigma {
            let sv = field(2)?;
            if sv <= 0.0 {
                return Err(err(line, format!("sigma {sv} must be positive")));
            }
            s.push(sv);
        }
        x.push(xv);
        p.push(pv);
    }
    if x.is_empty() {
        return Err(err(None, "dataset has no rows"));
    }

    let mut warnings = Vec::new();
    if !has_sigma {
        if !(default_sigma > 0.0) {
            return Err(err(None, "no sigma column and no positive default sigma"));
        }
        warnings.push(format!("no sigma column; using uniform sigma = {default_sigma}"));
        s = vec![default_sigma; x.len()];
    }
    let dataset = if expected == RABI_HEADER {
        Dataset::Rabi(RabiTrace::new(x, p, Some(s)).map_err(|e| err(None, e.to_string()))?)
    } else {
        let omega = x.into_iter().map(hz).collect();
        Dataset::Spectrum(Spectrum::new(omega, p, Some(s)).map_err(|e| err(None, e.to_string()))?)
    };
    Ok(Loaded { dataset, warnings })
}

/// Renders a dataset. The sigma column is written only when present; numbers
/// use the shortest representation that reads back to the same value.
pub fn format_dataset(dataset: &Dataset) -> String {
    let (header, x, p, s): (_, Vec<f64>, _, _) = match dataset {
        Dataset::Rabi(t) => (RABI_HEADER, t.durations.clone(), &t.population, &t.sigma),
        Dataset::Spectrum(sp) => (RAMSEY_HEADER, sp.omega_grid.iter().map(|&w| to_hz(w)).collect(), &sp.population, &sp.sigma),
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    let cols = if s.is_some() { 3 } else { 2 };
    writer.write_record(&header[..cols]).expect("writing to memory");
    for i in 0..x.len() {
        let mut row = vec![x[i].to_string(), p[i].to_string()];
        if let Some(s) = s {
            row.push(s[i].to_string());
        }
        writer.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(format_dataset(dataset).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_columns_make_a_spectrum() {
        let text = "frequency_hz,population,sigma\n19556000000,0.1,0.02\n19556050000,0.3,0.02\n";
        let loaded = parse_dataset(text, 0.03).unwrap();
        assert!(loaded.warnings.is_empty());
        match loaded.dataset {
            Dataset::Spectrum(s) => {
                assert_eq!(s.population, vec![0.1, 0.3]);
                assert!((to_hz(s.omega_grid[1]) - 19_556_050_000.0).abs() < 1e-4);
                assert_eq!(s.sigma, Some(vec![0.02, 0.02]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_columns_fall_back_to_uniform_sigma() {
        let loaded = parse_dataset("duration_s,population\n1e-8,0.0\n2e-8,0.1\n", 0.05).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        match loaded.dataset {
            Dataset::Rabi(t) => assert_eq!(t.sigma, Some(vec![0.05, 0.05])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_located() {
        let e = parse_dataset("duration_s,population,sigma\n1e-8,0.2,0.03\n2e-8,1.7,0.03\n", 0.03).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("1.7"));

        let e = parse_dataset("duration_s,population\n2e-8,0.2\n1e-8,0.1\n", 0.03).unwrap_err();
        assert_eq!(e.line, Some(3));

        let e = parse_dataset("duration_s,population\n1e-8,abc\n", 0.03).unwrap_err();
        assert_eq!(e.line, Some(2));

        let e = parse_dataset("duration_s,population,sigma\n1e-8,0.1\n", 0.03).unwrap_err();
        assert_eq!(e.line, Some(2));

        let e = parse_dataset("time,population\n1e-8,0.1\n", 0.03).unwrap_err();
        assert_eq!(e.line, Some(1));

        assert!(parse_dataset("duration_s,population\n", 0.03).is_err());
        assert!(parse_dataset("duration_s,population,sigma\n1e-8,0.1,0\n", 0.03).is_err());
    }

    #[test]
    fn sigma_column_is_omitted_when_absent() {
        let t = RabiTrace::new(vec![1e-8, 2e-8], vec![0.25, 0.5], None).unwrap();
        let text = format_dataset(&Dataset::Rabi(t));
        assert_eq!(text, "duration_s,population\n0.00000001,0.25\n0.00000002,0.5\n");
    }
}
