//! Versioned text persistence for factor models.
//!
//! Layout: a header line `pmfmodel v1 U I d`, then the global offset,
//! the U user offsets, the I item offsets, the U*d user factors
//! (row-major) and the I*d item factors (row-major). Whitespace is
//! free-form beyond the header; values carry 17 significant digits so
//! load reproduces predictions bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use proprec::factorization::FactorModel;

use crate::{CliError, Result};

const FORMAT_TAG: &str = "pmfmodel";
const FORMAT_VERSION: &str = "v1";

pub fn save_model(path: &Path, model: &FactorModel) -> Result<()> {
    let mut out = format!(
        "{FORMAT_TAG} {FORMAT_VERSION} {} {} {}\n",
        model.users(),
        model.items(),
        model.rank()
    );
    let _ = writeln!(out, "{:.16e}", model.global_offset());
    push_block(&mut out, model.user_offsets(), model.users());
    push_block(&mut out, model.item_offsets(), model.items());
    push_block(&mut out, model.user_factors(), model.rank());
    push_block(&mut out, model.item_factors(), model.rank());
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn push_block(out: &mut String, values: &[f64], per_line: usize) {
    for chunk in values.chunks(per_line.max(1)) {
        let mut line = String::new();
        for (j, v) in chunk.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v:.16e}");
        }
        out.push_str(&line);
        out.push('\n');
    }
}

pub fn load_model(path: &Path) -> Result<FactorModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut header_lines = text.lines();
    let header = header_lines
        .next()
        .ok_or_else(|| CliError::parse(path, 1, "empty model file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != FORMAT_TAG {
        return Err(CliError::parse(path, 1, format!("not a {FORMAT_TAG} file")));
    }
    if fields[1] != FORMAT_VERSION {
        return Err(CliError::parse(
            path,
            1,
            format!(
                "unsupported model version '{}', this build reads {FORMAT_VERSION}",
                fields[1]
            ),
        ));
    }
    let users = parse_dim(path, fields[2], "user count")?;
    let items = parse_dim(path, fields[3], "item count")?;
    let rank = parse_dim(path, fields[4], "rank")?;
    if users == 0 || items == 0 || rank == 0 {
        return Err(CliError::parse(
            path,
            1,
            "model dimensions must all be at least 1",
        ));
    }

    let expected = 1 + users + items + (users + items) * rank;
    let mut values = Vec::with_capacity(expected);
    for (lineno, line) in text.lines().enumerate().skip(1) {
        for tok in line.split_whitespace() {
            if values.len() == expected {
                return Err(CliError::parse(
                    path,
                    lineno + 1,
                    format!("trailing data starting at '{tok}'"),
                ));
            }
            let v: f64 = tok.parse().map_err(|_| {
                CliError::parse(path, lineno + 1, format!("cannot parse value from '{tok}'"))
            })?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(CliError::invalid(format!(
            "{}: truncated model file, found {} of {expected} values",
            path.display(),
            values.len()
        )));
    }

    let mut it = values.into_iter();
    let global_offset = it.next().expect("count checked");
    let user_offsets: Vec<f64> = it.by_ref().take(users).collect();
    let item_offsets: Vec<f64> = it.by_ref().take(items).collect();
    let user_factors: Vec<f64> = it.by_ref().take(users * rank).collect();
    let item_factors: Vec<f64> = it.collect();
    FactorModel::from_parts(
        users,
        items,
        rank,
        global_offset,
        user_offsets,
        item_offsets,
        user_factors,
        item_factors,
    )
    .map_err(CliError::from)
}

fn parse_dim(path: &Path, tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| CliError::parse(path, 1, format!("cannot parse {what} from '{tok}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proprec::factorization::{train, TrainConfig};
    use proprec::matrix::{ObservationSample, PropensityMatrix, RatingMatrix};

    fn trained_model() -> FactorModel {
        let truth = RatingMatrix::new(3, 4, (0..12).map(|i| (i % 5 + 1) as f64).collect()).unwrap();
        let obs = ObservationSample::full(&truth);
        let props = PropensityMatrix::uniform(3, 4, 1.0).unwrap();
        let cfg = TrainConfig {
            max_iterations: 60,
            ..TrainConfig::new(0.01, 2)
        };
        train(&obs, &props, &cfg).unwrap().model
    }

    #[test]
    fn round_trip_predicts_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let model = trained_model();
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.predict(), back.predict());
    }

    #[test]
    fn corrupted_header_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, "pmfmodel v9 1 1 1\n0.0\n0.0\n0.0\n0.0\n0.0\n").unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(
            err.to_string().contains("unsupported model version"),
            "{err}"
        );
        std::fs::write(&path, "somethingelse\n").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn zero_rank_is_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, "pmfmodel v1 1 1 0\n0.0\n0.0\n0.0\n").unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("at least 1"), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let model = trained_model();
        save_model(&path, &model).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // drop the whole last line so at least one value goes missing
        let cut = text.trim_end().rfind('\n').unwrap();
        std::fs::write(&path, &text[..cut + 1]).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let model = trained_model();
        save_model(&path, &model).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("42.0\n");
        std::fs::write(&path, text).unwrap();
        assert!(load_model(&path).is_err());
    }
}
