//! Plain tab-separated score and label tables.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rise_core::indexer::{rank_scores, QueryRanking};
use rise_core::RiseError;

fn fields<'a>(path: &Path, lineno: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>, RiseError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(RiseError::Corrupt(format!(
            "{}:{}: expected {n} tab-separated fields, found {}",
            path.display(),
            lineno + 1,
            f.len()
        )));
    }
    Ok(f)
}

fn parse<T: std::str::FromStr>(path: &Path, lineno: usize, s: &str) -> Result<T, RiseError> {
    s.trim()
        .parse()
        .map_err(|_| RiseError::Corrupt(format!("{}:{}: cannot parse {s:?}", path.display(), lineno + 1)))
}

/// Data lines, skipping blanks and a header whose first field is not numeric.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter(|(i, l)| {
        !l.trim().is_empty() && !(*i == 0 && l.split('\t').next().is_some_and(|f| f.trim().parse::<u64>().is_err()))
    })
}

pub fn read_labels(path: &Path) -> Result<HashMap<u64, bool>, RiseError> {
    let text = fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (i, line) in data_lines(&text) {
        let f = fields(path, i, line, 2)?;
        let id: u64 = parse(path, i, f[0])?;
        let label = match f[1].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(RiseError::Corrupt(format!(
                    "{}:{}: bad label {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        };
        if out.insert(id, label).is_some() {
            return Err(RiseError::Corrupt(format!(
                "{}: duplicate label for sample {id}",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Groups `query_id sample_id score` rows by query (first-appearance order)
/// and re-ranks each group.
pub fn read_scores(path: &Path) -> Result<Vec<QueryRanking>, RiseError> {
    let text = fs::read_to_string(path)?;
    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
    for (i, line) in data_lines(&text) {
        let f = fields(path, i, line, 3)?;
        let (q, s, v): (u64, u64, f64) = (parse(path, i, f[0])?, parse(path, i, f[1])?, parse(path, i, f[2])?);
        groups
            .entry(q)
            .or_insert_with(|| {
                order.push(q);
                Vec::new()
            })
            .push((s, v));
    }
    Ok(order
        .into_iter()
        .map(|q| QueryRanking {
            query_id: q,
            ranking: rank_scores(groups.remove(&q).unwrap_or_default()),
        })
        .collect())
}
