//! Text formats for dense matrices and observation samples.
//!
//! Dense matrices: a header `matrix U I` (or `propensities U I`)
//! followed by U rows of I values. Observation samples: a header
//! `observations U I N` followed by N lines of `user item rating`.
//! Values carry 17 significant digits, so a save/load round trip is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use proprec::matrix::{ObservationSample, ObservedEntry, PropensityMatrix, RatingMatrix};

use crate::{CliError, Result};

// ── Writers ───────────────────────────────────────────────────────────

pub fn save_matrix(path: &Path, matrix: &RatingMatrix) -> Result<()> {
    write_dense(
        path,
        "matrix",
        matrix.users(),
        matrix.items(),
        matrix.values(),
    )
}

pub fn save_propensities(path: &Path, props: &PropensityMatrix) -> Result<()> {
    write_dense(
        path,
        "propensities",
        props.users(),
        props.items(),
        props.values(),
    )
}

pub fn save_observations(path: &Path, obs: &ObservationSample) -> Result<()> {
    let mut out = format!(
        "observations {} {} {}\n",
        obs.users(),
        obs.items(),
        obs.len()
    );
    for e in obs.iter() {
        let _ = writeln!(out, "{} {} {:.16e}", e.user, e.item, e.rating);
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn write_dense(path: &Path, tag: &str, users: usize, items: usize, values: &[f64]) -> Result<()> {
    let mut out = format!("{tag} {users} {items}\n");
    for row in values.chunks(items) {
        let mut line = String::new();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v:.16e}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

// ── Readers ───────────────────────────────────────────────────────────

pub fn load_matrix(path: &Path) -> Result<RatingMatrix> {
    let (users, items, values) = read_dense(path, "matrix")?;
    RatingMatrix::new(users, items, values).map_err(CliError::from)
}

pub fn load_propensities(path: &Path) -> Result<PropensityMatrix> {
    let (users, items, values) = read_dense(path, "propensities")?;
    PropensityMatrix::new(users, items, values).map_err(CliError::from)
}

pub fn load_observations(path: &Path) -> Result<ObservationSample> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = Tokens::new(path, &text);
    reader.expect_tag("observations")?;
    let users = reader.parse::<usize>("user count")?;
    let items = reader.parse::<usize>("item count")?;
    let count = reader.parse::<usize>("entry count")?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let user = reader.parse::<usize>("user index")?;
        let item = reader.parse::<usize>("item index")?;
        let rating = reader.parse::<f64>("rating")?;
        entries.push(ObservedEntry { user, item, rating });
    }
    reader.expect_end()?;
    ObservationSample::new(users, items, entries).map_err(CliError::from)
}

fn read_dense(path: &Path, tag: &str) -> Result<(usize, usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = Tokens::new(path, &text);
    reader.expect_tag(tag)?;
    let users = reader.parse::<usize>("user count")?;
    let items = reader.parse::<usize>("item count")?;
    let total = users.checked_mul(items).ok_or_else(|| {
        CliError::invalid(format!("{}: matrix dimensions overflow", path.display()))
    })?;
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(reader.parse::<f64>("value")?);
    }
    reader.expect_end()?;
    Ok((users, items, values))
}

/// Whitespace token stream that remembers line numbers for errors.
struct Tokens<'a> {
    path: &'a Path,
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self {
            path,
            tokens,
            pos: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let Some(&tok) = self.tokens.get(self.pos) else {
            let line = self.tokens.last().map_or(1, |(l, _)| *l);
            return Err(CliError::parse(
                self.path,
                line,
                format!("unexpected end of file, wanted {what}"),
            ));
        };
        self.pos += 1;
        Ok(tok)
    }

    fn expect_tag(&mut self, tag: &str) -> Result<()> {
        let (line, tok) = self.next("a format tag")?;
        if tok != tag {
            return Err(CliError::parse(
                self.path,
                line,
                format!("expected '{tag}' header, found '{tok}'"),
            ));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.next(what)?;
        tok.parse::<T>().map_err(|_| {
            CliError::parse(self.path, line, format!("cannot parse {what} from '{tok}'"))
        })
    }

    fn expect_end(&mut self) -> Result<()> {
        if let Some(&(line, tok)) = self.tokens.get(self.pos) {
            return Err(CliError::parse(
                self.path,
                line,
                format!("trailing data starting at '{tok}'"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proprec::matrix::RatingScale;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("m.txt");
        let m = RatingMatrix::new(2, 3, vec![1.0, 2.5, 3.125, 0.1, 1.0 / 3.0, 5.0]).unwrap();
        save_matrix(&path, &m).unwrap();
        let back = load_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn propensity_round_trip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("p.txt");
        let p = PropensityMatrix::new(2, 2, vec![0.05, 1.0, 0.3333333333333333, 1e-6]).unwrap();
        save_propensities(&path, &p).unwrap();
        assert_eq!(load_propensities(&path).unwrap(), p);
    }

    #[test]
    fn observation_round_trip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("o.txt");
        let obs = ObservationSample::new(
            3,
            4,
            vec![
                ObservedEntry {
                    user: 0,
                    item: 3,
                    rating: 4.0,
                },
                ObservedEntry {
                    user: 2,
                    item: 1,
                    rating: 1.0,
                },
            ],
        )
        .unwrap();
        save_observations(&path, &obs).unwrap();
        assert_eq!(load_observations(&path).unwrap(), obs);
    }

    #[test]
    fn truncated_matrix_is_rejected_with_line_number() {
        let dir = tmp();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "matrix 2 2\n1.0 2.0\n3.0\n").unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "propensities 1 1\n0.5\n").unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("expected 'matrix'"), "{err}");
    }

    #[test]
    fn trailing_data_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "matrix 1 1\n1.0 9.0\n").unwrap();
        assert!(load_matrix(&path).is_err());
    }

    #[test]
    fn loaded_values_keep_scale_semantics() {
        let dir = tmp();
        let path = dir.path().join("m.txt");
        let m = RatingMatrix::filled(2, 2, 5.0).unwrap();
        save_matrix(&path, &m).unwrap();
        load_matrix(&path)
            .unwrap()
            .validate_on_scale(RatingScale::default())
            .unwrap();
    }
}
