//! MovieLens ratings to a user × movie 0/1 matrix, plus the group and
//! column-support reports used for recommendation analysis.
//!
//! Inputs follow the published CSV layout: `ratings.csv` with
//! `userId,movieId,rating,timestamp` and `movies.csv` with
//! `movieId,title,genres` (genres separated by `|`).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use crate::binmat::BinaryMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user_id: u32,
    pub movie_id: u32,
    pub rating: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingsTable {
    pub records: Vec<Rating>,
}

fn on_rating_grid(r: f64) -> bool {
    let halves = r * 2.0;
    (1.0..=10.0).contains(&halves) && halves.fract() == 0.0
}

impl RatingsTable {
    pub fn from_records(records: Vec<Rating>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !on_rating_grid(r.rating) {
                return Err(Error::InvalidInput(format!(
                    "rating {} for user {} movie {} is off the 0.5..5.0 grid",
                    r.rating, r.user_id, r.movie_id
                )));
            }
            if !seen.insert((r.user_id, r.movie_id)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate rating for user {} movie {}",
                    r.user_id, r.movie_id
                )));
            }
        }
        Ok(Self { records })
    }

    /// Parses `userId,movieId,rating,timestamp` with a header line. Only
    /// rows passing `keep(user, movie)` are retained, which keeps memory
    /// bounded on the full dataset.
    pub fn parse_filtered<R: Read>(input: R, keep: impl Fn(u32, u32) -> bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut records = Vec::new();
        for (n, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |i: usize| {
                row.get(i).ok_or_else(|| Error::Parse {
                    line: n + 2,
                    msg: format!("missing field {i}"),
                })
            };
            let bad = |what: &str| Error::Parse {
                line: n + 2,
                msg: format!("bad {what}"),
            };
            let user_id: u32 = field(0)?.trim().parse().map_err(|_| bad("userId"))?;
            let movie_id: u32 = field(1)?.trim().parse().map_err(|_| bad("movieId"))?;
            let rating: f64 = field(2)?.trim().parse().map_err(|_| bad("rating"))?;
            if keep(user_id, movie_id) {
                records.push(Rating {
                    user_id,
                    movie_id,
                    rating,
                });
            }
        }
        Self::from_records(records)
    }

    pub fn parse<R: Read>(input: R) -> Result<Self> {
        Self::parse_filtered(input, |_, _| true)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenreTable {
    pub genres: BTreeMap<u32, Vec<String>>,
}

impl GenreTable {
    /// Parses `movieId,title,genres`.
    pub fn parse<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut genres = BTreeMap::new();
        for (n, row) in rdr.records().enumerate() {
            let row = row?;
            let id: u32 = row
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: n + 2,
                    msg: "bad movieId".into(),
                })?;
            let tags: Vec<String> = row
                .get(2)
                .unwrap_or("")
                .split('|')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect();
            if tags.is_empty() {
                return Err(Error::Parse {
                    line: n + 2,
                    msg: format!("movie {id} has no genre tags"),
                });
            }
            genres.insert(id, tags);
        }
        Ok(Self { genres })
    }

    pub fn tags(&self, movie_id: u32) -> &[String] {
        self.genres.get(&movie_id).map_or(&[], Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterRule {
    /// Repeat row then column deletion until every survivor qualifies.
    FixedPoint,
    /// Delete sparse rows once, then sparse columns once.
    OnePass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestConfig {
    pub user_id_max: u32,
    pub movie_id_max: u32,
    pub rating_threshold: f64,
    pub min_ones: usize,
    pub filter: FilterRule,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            user_id_max: 300,
            movie_id_max: 400,
            rating_threshold: 1.0,
            min_ones: 20,
            filter: FilterRule::FixedPoint,
        }
    }
}

impl IngestConfig {
    pub fn keeps(&self, user: u32, movie: u32) -> bool {
        user <= self.user_id_max && movie <= self.movie_id_max
    }

    fn validate(&self) -> Result<()> {
        if !on_rating_grid(self.rating_threshold) {
            return Err(Error::Config(format!(
                "rating threshold {} is off the 0.5..5.0 grid",
                self.rating_threshold
            )));
        }
        Ok(())
    }
}

/// Thresholded matrix with the raw user and movie IDs of its rows/columns.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestedMatrix {
    pub matrix: BinaryMatrix,
    pub user_ids: Vec<u32>,
    pub movie_ids: Vec<u32>,
}

/// Rows are the users and columns the movies that have at least one rating
/// inside the ID window; a cell is 1 when the rating reaches the threshold.
pub fn build_matrix(ratings: &RatingsTable, config: &IngestConfig) -> Result<IngestedMatrix> {
    config.validate()?;
    let kept: Vec<&Rating> = ratings
        .records
        .iter()
        .filter(|r| config.keeps(r.user_id, r.movie_id))
        .collect();
    let users: BTreeSet<u32> = kept.iter().map(|r| r.user_id).collect();
    let movies: BTreeSet<u32> = kept.iter().map(|r| r.movie_id).collect();
    let mut user_ids: Vec<u32> = users.into_iter().collect();
    let mut movie_ids: Vec<u32> = movies.into_iter().collect();
    let row_of: BTreeMap<u32, usize> = user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let col_of: BTreeMap<u32, usize> = movie_ids.iter().enumerate().map(|(j, &m)| (m, j)).collect();

    let n = movie_ids.len();
    let mut dense = vec![vec![0u8; n]; user_ids.len()];
    for r in &kept {
        if r.rating >= config.rating_threshold {
            dense[row_of[&r.user_id]][col_of[&r.movie_id]] = 1;
        }
    }

    let (mut rows_alive, mut cols_alive) = (vec![true; dense.len()], vec![true; n]);
    loop {
        let mut changed = false;
        for (i, row) in dense.iter().enumerate() {
            if rows_alive[i] {
                let ones = row.iter().zip(&cols_alive).filter(|(&b, &c)| c && b == 1).count();
                if ones < config.min_ones {
                    rows_alive[i] = false;
                    changed = true;
                }
            }
        }
        for j in 0..n {
            if cols_alive[j] {
                let ones = dense
                    .iter()
                    .zip(&rows_alive)
                    .filter(|(row, &a)| a && row[j] == 1)
                    .count();
                if ones < config.min_ones {
                    cols_alive[j] = false;
                    changed = true;
                }
            }
        }
        if !changed || config.filter == FilterRule::OnePass {
            break;
        }
    }

    let rows: Vec<Vec<u8>> = dense
        .into_iter()
        .zip(&rows_alive)
        .filter(|(_, &a)| a)
        .map(|(row, _)| {
            row.into_iter()
                .zip(&cols_alive)
                .filter(|(_, &c)| c)
                .map(|(b, _)| b)
                .collect()
        })
        .collect();
    user_ids = user_ids.into_iter().zip(&rows_alive).filter(|(_, &a)| a).map(|(u, _)| u).collect();
    movie_ids = movie_ids.into_iter().zip(&cols_alive).filter(|(_, &a)| a).map(|(m, _)| m).collect();
    if user_ids.is_empty() || movie_ids.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    Ok(IngestedMatrix {
        matrix: BinaryMatrix::from_rows(&rows)?,
        user_ids,
        movie_ids,
    })
}

/// Rows within `radius` of `anchor` (anchor included), ascending.
pub fn group_members(d: &[Vec<usize>], anchor: usize, radius: usize) -> Result<Vec<usize>> {
    let row = d
        .get(anchor)
        .ok_or_else(|| Error::Index(format!("anchor {anchor} with {} rows", d.len())))?;
    Ok(row
        .iter()
        .enumerate()
        .filter(|&(_, &dist)| dist <= radius)
        .map(|(u, _)| u)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnSupport {
    /// Every listed row has a 1 in this column.
    pub all_ones: bool,
    /// Fraction of ones in the column over all rows.
    pub density: f64,
}

pub fn column_support(v: &BinaryMatrix, rows: &[usize]) -> Result<Vec<ColumnSupport>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= v.rows()) {
        return Err(Error::Index(format!("row {bad} of {}", v.rows())));
    }
    Ok((0..v.cols())
        .map(|j| {
            let ones = (0..v.rows()).filter(|&i| v.get(i, j) == 1).count();
            ColumnSupport {
                all_ones: rows.iter().all(|&i| v.get(i, j) == 1),
                density: if v.rows() == 0 {
                    0.0
                } else {
                    ones as f64 / v.rows() as f64
                },
            }
        })
        .collect())
}

/// `movieId,genres,all_ones_flag,column_density`, genres joined by `|`.
pub fn write_support_csv<W: Write>(
    out: W,
    support: &[ColumnSupport],
    movie_ids: &[u32],
    genres: &GenreTable,
) -> Result<()> {
    if support.len() != movie_ids.len() {
        return Err(Error::Dimension(format!(
            "{} columns but {} movie IDs",
            support.len(),
            movie_ids.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["movieId", "genres", "all_ones_flag", "column_density"])?;
    for (s, id) in support.iter().zip(movie_ids) {
        w.write_record([
            id.to_string(),
            genres.tags(*id).join("|"),
            (s.all_ones as u8).to_string(),
            s.density.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One ID per line.
pub fn write_ids<W: Write>(mut out: W, ids: &[u32]) -> Result<()> {
    for id in ids {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub fn read_ids(text: &str) -> Result<Vec<u32>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("bad id {l:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(user_id: u32, movie_id: u32, rating: f64) -> Rating {
        Rating {
            user_id,
            movie_id,
            rating,
        }
    }

    #[test]
    fn toy_thresholding() {
        let t = RatingsTable::from_records(vec![
            rating(1, 10, 0.5),
            rating(1, 20, 3.0),
            rating(2, 10, 1.0),
            rating(3, 30, 4.5),
            rating(2, 30, 0.5),
        ])
        .unwrap();
        let c = IngestConfig {
            min_ones: 0,
            ..IngestConfig::default()
        };
        let m = build_matrix(&t, &c).unwrap();
        assert_eq!(m.user_ids, vec![1, 2, 3]);
        assert_eq!(m.movie_ids, vec![10, 20, 30]);
        assert_eq!(
            m.matrix,
            BinaryMatrix::from_rows(&[[0, 1, 0], [1, 0, 0], [0, 0, 1]]).unwrap()
        );
        let hi = build_matrix(
            &t,
            &IngestConfig {
                rating_threshold: 4.5,
                ..c
            },
        )
        .unwrap();
        assert_eq!(
            hi.matrix,
            BinaryMatrix::from_rows(&[[0, 0, 0], [0, 0, 0], [0, 0, 1]]).unwrap()
        );
    }

    #[test]
    fn id_window_applies_to_raw_ids() {
        let t = RatingsTable::from_records(vec![rating(1, 1, 5.0), rating(301, 1, 5.0), rating(1, 401, 5.0)])
            .unwrap();
        let c = IngestConfig {
            min_ones: 0,
            ..IngestConfig::default()
        };
        let m = build_matrix(&t, &c).unwrap();
        assert_eq!((m.user_ids.as_slice(), m.movie_ids.as_slice()), (&[1][..], &[1][..]));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(RatingsTable::from_records(vec![rating(1, 1, 5.5)]).is_err());
        assert!(RatingsTable::from_records(vec![rating(1, 1, 0.0)]).is_err());
        assert!(RatingsTable::from_records(vec![rating(1, 1, 2.25)]).is_err());
        assert!(RatingsTable::from_records(vec![rating(1, 1, 2.0), rating(1, 1, 3.0)]).is_err());
    }

    #[test]
    fn filtering_reaches_fixed_point_and_one_pass_differs() {
        // dropping movie 3 (a single fan) leaves user 3 with one rating,
        // which only the fixed point removes
        let mut recs = vec![];
        for u in 1..=2 {
            for m in 1..=2 {
                recs.push(rating(u, m, 5.0));
            }
        }
        recs.push(rating(3, 1, 5.0));
        recs.push(rating(3, 3, 5.0));
        let t = RatingsTable::from_records(recs).unwrap();
        let fixed = IngestConfig {
            min_ones: 2,
            ..IngestConfig::default()
        };
        let m = build_matrix(&t, &fixed).unwrap();
        assert_eq!(m.user_ids, vec![1, 2]);
        assert_eq!(m.movie_ids, vec![1, 2]);
        for i in 0..m.matrix.rows() {
            assert!(m.matrix.row(i).iter().filter(|&&b| b == 1).count() >= 2);
        }
        let one = build_matrix(
            &t,
            &IngestConfig {
                filter: FilterRule::OnePass,
                ..fixed
            },
        )
        .unwrap();
        assert_eq!(one.user_ids, vec![1, 2, 3]);
        assert_eq!(one.movie_ids, vec![1, 2]);

        let empty = IngestConfig {
            min_ones: 5,
            ..IngestConfig::default()
        };
        assert!(matches!(build_matrix(&t, &empty), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn parses_published_layout() {
        let ratings = "userId,movieId,rating,timestamp\n1,296,5.0,1147880044\n1,306,3.5,1147868817\n2,296,1.0,1\n";
        let t = RatingsTable::parse(ratings.as_bytes()).unwrap();
        assert_eq!(t.records.len(), 3);
        assert_eq!(t.records[1], rating(1, 306, 3.5));
        let movies = "movieId,title,genres\n1,Toy Story (1995),Adventure|Animation|Children|Comedy|Fantasy\n11,\"American President, The (1995)\",Comedy|Drama|Romance\n";
        let g = GenreTable::parse(movies.as_bytes()).unwrap();
        assert_eq!(g.tags(11), &["Comedy", "Drama", "Romance"]);
        assert!(g.tags(99).is_empty());
        assert!(RatingsTable::parse("userId,movieId,rating,timestamp\nx,1,1.0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn groups_and_support() {
        let d = vec![vec![0, 1, 3], vec![1, 0, 2], vec![3, 2, 0]];
        assert_eq!(group_members(&d, 0, 0).unwrap(), vec![0]);
        assert_eq!(group_members(&d, 0, 1).unwrap(), vec![0, 1]);
        assert_eq!(group_members(&d, 2, 3).unwrap(), vec![0, 1, 2]);
        assert!(group_members(&d, 3, 0).is_err());

        let v = BinaryMatrix::from_rows(&[[1, 0, 1], [1, 1, 0]]).unwrap();
        let all = column_support(&v, &[0, 1]).unwrap();
        assert!(all[0].all_ones);
        assert_eq!(all[0].density, 1.0);
        assert!(!all[1].all_ones);
        let single = column_support(&v, &[1]).unwrap();
        let flags: Vec<u8> = single.iter().map(|s| s.all_ones as u8).collect();
        assert_eq!(flags, v.row(1));
        assert!(column_support(&v, &[2]).is_err());

        let mut buf = Vec::new();
        let mut g = GenreTable::default();
        g.genres.insert(318, vec!["Crime".into(), "Drama".into()]);
        write_support_csv(&mut buf, &all, &[296, 318, 356], &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("movieId,genres,all_ones_flag,column_density\n296,,1,1\n318,Crime|Drama,0,0.5\n"));
    }

    #[test]
    fn id_sidecars_round_trip() {
        let mut buf = Vec::new();
        write_ids(&mut buf, &[3, 17, 200]).unwrap();
        assert_eq!(read_ids(&String::from_utf8(buf).unwrap()).unwrap(), vec![3, 17, 200]);
    }
}
