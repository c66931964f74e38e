//! MovieLens-100K ingestion and random observation masks.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::graph::{knn_graph, Graph};
use crate::objective::{Mask, MaskedMatrix};
use crate::rng;

pub const ML100K_USERS: usize = 943;
pub const ML100K_ITEMS: usize = 1682;
pub const ML100K_RATINGS: &str = "u.data";
/// Neighbours per node in the rating-similarity graphs.
pub const DEFAULT_KNN: usize = 10;
pub const RATING_SCALE: (f64, f64) = (1.0, 5.0);

/// One `user item rating timestamp` line with zero-based ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: u8,
    pub timestamp: u64,
}

/// Users-by-items ratings with similarity graphs over both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsDataset {
    pub obs: MaskedMatrix,
    pub user_graph: Graph,
    pub item_graph: Graph,
    pub rating_scale: (f64, f64),
}

/// Parses a ratings file in the `u.data` layout: four tab-separated integers
/// per line with 1-based ids.
pub fn read_ratings(path: impl AsRef<Path>, users: usize, items: usize) -> Result<Vec<Rating>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (lo, hi) = RATING_SCALE;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, line_no, format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let id = |s: &str, what: &str, max: usize| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("{what} id '{s}' is not an integer")))?;
            if v == 0 || v > max {
                return Err(Error::parse(path, line_no, format!("{what} id {v} outside 1..={max}")));
            }
            Ok(v - 1)
        };
        let user = id(fields[0], "user", users)?;
        let item = id(fields[1], "item", items)?;
        let value: u8 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("rating '{}' is not an integer", fields[2])))?;
        if !(lo..=hi).contains(&f64::from(value)) {
            return Err(Error::parse(path, line_no, format!("rating {value} outside [{lo}, {hi}]")));
        }
        let timestamp = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("timestamp '{}' is not an integer", fields[3])))?;
        out.push(Rating {
            user,
            item,
            value,
            timestamp,
        });
    }
    Ok(out)
}

/// Dense ratings matrix; a repeated (user, item) pair is an error.
pub fn ratings_matrix(ratings: &[Rating], users: usize, items: usize) -> Result<MaskedMatrix> {
    let mut values = DMatrix::zeros(users, items);
    let mut mask = DMatrix::zeros(users, items);
    for r in ratings {
        if mask[(r.user, r.item)] != 0.0 {
            return Err(Error::Validation(format!(
                "user {} rated item {} more than once",
                r.user + 1,
                r.item + 1
            )));
        }
        mask[(r.user, r.item)] = 1.0;
        values[(r.user, r.item)] = f64::from(r.value);
    }
    MaskedMatrix::new(values, Mask::new(mask)?)
}

/// Cosine k-NN graphs over the zero-filled rows (users) and columns (items).
pub fn rating_graphs(obs: &MaskedMatrix, k_nn: usize) -> Result<(Graph, Graph)> {
    let users = knn_graph(obs.values(), k_nn)?;
    let items = knn_graph(&obs.values().transpose(), k_nn)?;
    Ok((users, items))
}

/// Loads `u.data` from `dir` with 10-NN similarity graphs.
pub fn load_ml100k(dir: impl AsRef<Path>) -> Result<RatingsDataset> {
    load_ml100k_with(dir, DEFAULT_KNN)
}

pub fn load_ml100k_with(dir: impl AsRef<Path>, k_nn: usize) -> Result<RatingsDataset> {
    let ratings = read_ratings(dir.as_ref().join(ML100K_RATINGS), ML100K_USERS, ML100K_ITEMS)?;
    let obs = ratings_matrix(&ratings, ML100K_USERS, ML100K_ITEMS)?;
    let (user_graph, item_graph) = rating_graphs(&obs, k_nn)?;
    Ok(RatingsDataset {
        obs,
        user_graph,
        item_graph,
        rating_scale: RATING_SCALE,
    })
}

/// Reads one of the bundled `<name>.base` / `<name>.test` splits (e.g.
/// `u1`) as masks over the full ratings matrix.
pub fn load_ml100k_split(dir: impl AsRef<Path>, name: &str) -> Result<(Mask, Mask)> {
    let dir = dir.as_ref();
    let read = |suffix: &str| -> Result<Mask> {
        let ratings = read_ratings(dir.join(format!("{name}.{suffix}")), ML100K_USERS, ML100K_ITEMS)?;
        Mask::from_indices(ML100K_USERS, ML100K_ITEMS, ratings.iter().map(|r| (r.user, r.item)))
    };
    let (train, test) = (read("base")?, read("test")?);
    if !train.is_disjoint(&test) {
        return Err(Error::Validation(format!("{name}.base and {name}.test overlap")));
    }
    Ok((train, test))
}

/// Uniformly samples exactly `round(density * m * n)` entries without
/// replacement.
pub fn sample_mask(m: usize, n: usize, density: f64, seed: u64) -> Result<Mask> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Argument(format!("density {density} outside (0, 1]")));
    }
    let total = m * n;
    let count = (density * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::Argument(format!("density {density} selects no entries of a {m}x{n} matrix")));
    }
    let picked = index::sample(&mut rng::seeded(seed), total, count);
    Mask::from_indices(m, n, picked.into_iter().map(|l| (l % m, l / m)))
}

/// Reads a dense comma-separated matrix in which empty cells and `nan` mark
/// missing entries.
pub fn read_partial_matrix(path: impl AsRef<Path>) -> Result<MaskedMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::parse(path, idx + 1, format!("'{cell}' is not a finite number"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("{} cells, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "empty matrix"));
    }
    let (m, n) = (rows.len(), rows[0].len());
    let values = DMatrix::from_fn(m, n, |i, j| rows[i][j].unwrap_or(0.0));
    let mask = DMatrix::from_fn(m, n, |i, j| if rows[i][j].is_some() { 1.0 } else { 0.0 });
    MaskedMatrix::new(values, Mask::new(mask)?)
}

/// Writes a dense matrix as comma-separated rows with round-trip precision.
pub fn write_matrix(x: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    crate::fsutil::write_atomic(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    #[test]
    fn sample_mask_counts() {
        assert_eq!(sample_mask(150, 200, 0.10, 1).unwrap().count(), 3000);
        assert_eq!(sample_mask(7, 9, 1.0, 1).unwrap(), Mask::full(7, 9));
        assert_eq!(sample_mask(30, 20, 0.3, 5).unwrap(), sample_mask(30, 20, 0.3, 5).unwrap());
        assert_ne!(sample_mask(30, 20, 0.3, 5).unwrap(), sample_mask(30, 20, 0.3, 6).unwrap());
    }

    #[test]
    fn sample_mask_rejects_bad_density() {
        assert!(sample_mask(10, 10, 0.0, 0).is_err());
        assert!(sample_mask(10, 10, 1.5, 0).is_err());
        assert!(sample_mask(10, 10, 0.001, 0).is_err());
    }

    #[test]
    fn sample_mask_marginals_are_uniform() {
        // Chi-squared goodness of fit of per-cell hit counts.
        let (m, n, density, seeds) = (10, 10, 0.3, 500u64);
        let mut hits = [0.0f64; 100];
        for seed in 0..seeds {
            for (i, j) in sample_mask(m, n, density, seed).unwrap().indices() {
                hits[i + j * m] += 1.0;
            }
        }
        let expected = density * seeds as f64;
        let chi2: f64 = hits.iter().map(|h| (h - expected).powi(2) / expected).sum();
        // Hits in a fixed-size sample are negatively correlated, which only
        // shrinks the statistic; the plain 99 dof test stays conservative.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn parses_small_file() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "r.data", "1\t2\t5\t100\n3\t1\t1\t200\n\n");
        let r = read_ratings(dir.path().join("r.data"), 3, 2).unwrap();
        assert_eq!(
            r,
            vec![
                Rating { user: 0, item: 1, value: 5, timestamp: 100 },
                Rating { user: 2, item: 0, value: 1, timestamp: 200 },
            ]
        );
        let obs = ratings_matrix(&r, 3, 2).unwrap();
        assert_eq!(obs.mask().count(), 2);
        assert_eq!(obs.values()[(0, 1)], 5.0);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("1\t1\t3\t0\n1\t1\t3.5\t0\n", "bad.data:2:"),
            ("1\t4\t3\t0\n", "item id 4"),
            ("0\t1\t3\t0\n", "user id 0"),
            ("1\t1\t6\t0\n", "rating 6"),
            ("1\t1\t3\n", "4 tab-separated"),
        ];
        for (body, needle) in cases {
            write_file(dir.path(), "bad.data", body);
            let err = read_ratings(dir.path().join("bad.data"), 2, 3).unwrap_err().to_string();
            assert!(err.contains(needle), "{err:?} lacks {needle:?}");
        }
        assert!(matches!(
            read_ratings(dir.path().join("missing.data"), 2, 3),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn duplicate_ratings_rejected() {
        let r = Rating { user: 0, item: 0, value: 3, timestamp: 0 };
        assert!(ratings_matrix(&[r, r], 1, 1).is_err());
    }

    #[test]
    fn partial_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "m.csv", "1,,2.5\nnan,-3,1e-3\n");
        let obs = read_partial_matrix(dir.path().join("m.csv")).unwrap();
        assert_eq!(obs.shape(), (2, 3));
        assert_eq!(obs.mask().indices(), vec![(0, 0), (1, 1), (0, 2), (1, 2)]);
        assert_eq!(obs.values()[(1, 2)], 1e-3);

        let x = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, -2e-300, 7.0]);
        write_matrix(&x, dir.path().join("x.csv")).unwrap();
        let back = read_partial_matrix(dir.path().join("x.csv")).unwrap();
        assert_eq!(back.values(), &x);
        assert_eq!(back.mask(), &Mask::full(2, 2));

        write_file(dir.path(), "bad.csv", "1,2\n3\n");
        assert!(read_partial_matrix(dir.path().join("bad.csv")).is_err());
        write_file(dir.path(), "bad2.csv", "1,x\n");
        assert!(read_partial_matrix(dir.path().join("bad2.csv")).is_err());
    }

    #[test]
    fn graphs_follow_matrix_axes() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "r.data", "1\t1\t5\t0\n2\t1\t4\t0\n2\t2\t3\t0\n3\t3\t2\t0\n4\t2\t1\t0\n");
        let obs = ratings_matrix(&read_ratings(dir.path().join("r.data"), 4, 3).unwrap(), 4, 3).unwrap();
        let (u, i) = rating_graphs(&obs, 1).unwrap();
        assert_eq!((u.node_count(), i.node_count()), (4, 3));
        // Users 1 and 2 share item 1: cos = 5*4 / (5 * 5) = 0.8.
        assert!((u.adjacency()[(0, 1)] - 0.8).abs() < 1e-15);
    }
}
