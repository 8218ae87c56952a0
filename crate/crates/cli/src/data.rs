//! Headerless CSV datasets: each row holds the input values followed by the
//! target values.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use fbnet_core::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: \"{value}\" is not a number")]
    NotANumber {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("input and target sizes must be positive")]
    ZeroSize,
}

pub type Sample = (Tensor, Tensor);

pub fn load_csv(
    path: impl AsRef<Path>,
    input_size: usize,
    target_size: usize,
) -> Result<Vec<Sample>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, input_size, target_size)
}

pub fn read_csv(
    reader: impl Read,
    input_size: usize,
    target_size: usize,
) -> Result<Vec<Sample>, DataError> {
    if input_size == 0 || target_size == 0 {
        return Err(DataError::ZeroSize);
    }
    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let expected = input_size + target_size;
    let mut samples = Vec::new();
    for record in rows.records() {
        let record = record.map_err(|source| DataError::Csv {
            line: source.position().map_or(0, |p| p.line()),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected {
            return Err(DataError::ColumnCount {
                line,
                expected,
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(i, field)| {
                field.parse::<f64>().map_err(|_| DataError::NotANumber {
                    line,
                    column: i + 1,
                    value: field.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let target = values[input_size..].to_vec();
        let mut input = values;
        input.truncate(input_size);
        samples.push((
            Tensor::vector(input).expect("nonempty input"),
            Tensor::vector(target).expect("nonempty target"),
        ));
    }
    Ok(samples)
}
