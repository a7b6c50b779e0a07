use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};

fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("{}: cannot open", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

/// Drops a leading header row: any first record that does not parse as
/// numbers.
fn skip_header(mut rows: Vec<(usize, Vec<String>)>) -> Vec<(usize, Vec<String>)> {
    if rows
        .first()
        .is_some_and(|(_, r)| r.iter().any(|f| f.parse::<f64>().is_err()))
    {
        rows.remove(0);
    }
    rows
}

/// Dense matrix, one row per line, optional header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = skip_header(records(path)?);
    let Some((_, first)) = rows.first() else {
        bail!("{}: no matrix rows", path.display());
    };
    let cols = first.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, r) in &rows {
        if r.len() != cols {
            bail!("{}:{line}: expected {cols} columns, found {}", path.display(), r.len());
        }
        for f in r {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| anyhow!("{}:{line}: {f:?}: {e}", path.display()))?,
            );
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

/// `row,y` pairs covering `0..len` exactly once, in any order.
pub fn read_measurement(path: &Path) -> Result<DVector<f64>> {
    let rows = skip_header(records(path)?);
    let mut y: Vec<Option<f64>> = vec![None; rows.len()];
    for (line, r) in &rows {
        let [idx, val] = r.as_slice() else {
            bail!("{}:{line}: expected `row,y`", path.display());
        };
        let idx: usize = idx
            .parse()
            .map_err(|e| anyhow!("{}:{line}: row index {idx:?}: {e}", path.display()))?;
        let val: f64 = val
            .parse()
            .map_err(|e| anyhow!("{}:{line}: value {val:?}: {e}", path.display()))?;
        match y.get_mut(idx) {
            Some(slot @ None) => *slot = Some(val),
            Some(Some(_)) => bail!("{}:{line}: row {idx} given twice", path.display()),
            None => bail!(
                "{}:{line}: row {idx} out of range for {} rows",
                path.display(),
                rows.len()
            ),
        }
    }
    Ok(DVector::from_iterator(
        y.len(),
        y.into_iter().map(|v| v.expect("every slot filled")),
    ))
}

/// Nonempty seed list parsed from `a..b` (half-open) or `a..=b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seeds(pub Vec<u64>);

pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected a..b or a..=b, got {s:?}"));
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(format!("seed range {s:?} is empty"));
    }
    Ok(Seeds(seeds))
}

/// CSV sink: a file when `path` is given, stdout otherwise.
pub fn sink(path: Option<&PathBuf>) -> Result<csv::Writer<Box<dyn std::io::Write>>> {
    let w: Box<dyn std::io::Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("{}: cannot create", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0..3").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=3").unwrap().0, vec![2, 3]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn matrix_and_measurement() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("h.csv");
        std::fs::write(&h, "c0,c1\n1,0\n0,1\n# note\n1,1\n").unwrap();
        assert_eq!(
            read_matrix(&h).unwrap(),
            DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.])
        );
        let y = dir.path().join("y.csv");
        std::fs::write(&y, "row,y\n2,7\n0,5\n1,6\n").unwrap();
        assert_eq!(read_measurement(&y).unwrap(), DVector::from_row_slice(&[5., 6., 7.]));
        std::fs::write(&y, "0,5\n0,6\n").unwrap();
        assert!(read_measurement(&y).unwrap_err().to_string().contains("twice"));
        std::fs::write(&h, "1,2\n3\n").unwrap();
        assert!(read_matrix(&h).unwrap_err().to_string().contains(":2:"));
    }
}
