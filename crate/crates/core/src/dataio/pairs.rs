//! Preference-pair JSONL files, train/eval splitting and score-band pair sampling.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{EmbeddingTable, IndexedPair, PreferenceDataset};
use crate::error::{Error, Result};

/// One line of a pairs file. Unknown fields (vote metadata) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub winner: String,
    pub loser: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tie: bool,
}

/// Reads pairs from any line source. Ties are skipped and counted.
pub fn read_pairs(reader: impl BufRead, table: Arc<EmbeddingTable>) -> Result<PreferenceDataset> {
    let mut pairs = Vec::new();
    let mut ties = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.tie {
            ties += 1;
            continue;
        }
        let resolve = |id: &str| {
            table
                .index_of(id)
                .ok_or_else(|| Error::Validation(format!("line {lineno}: unknown id '{id}'")))
        };
        let winner = resolve(&rec.winner)?;
        let loser = resolve(&rec.loser)?;
        if winner == loser {
            return Err(Error::Validation(format!(
                "line {lineno}: '{}' is compared with itself",
                rec.winner
            )));
        }
        pairs.push(IndexedPair {
            winner,
            loser,
            query_id: rec.query_id,
        });
    }
    let mut ds = PreferenceDataset::new(table, pairs)?;
    ds.ties_dropped = ties;
    Ok(ds)
}

pub fn load_pairs(path: impl AsRef<Path>, table: Arc<EmbeddingTable>) -> Result<PreferenceDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file), table)
}

pub fn write_pairs(mut w: impl Write, dataset: &PreferenceDataset) -> std::io::Result<()> {
    let table = dataset.table();
    for p in dataset.pairs() {
        let rec = PairRecord {
            winner: table.id(p.winner).to_owned(),
            loser: table.id(p.loser).to_owned(),
            query_id: p.query_id.clone(),
            tie: false,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("pair record serializes"))?;
    }
    w.flush()
}

pub fn save_pairs(path: impl AsRef<Path>, dataset: &PreferenceDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pairs(BufWriter::new(file), dataset).map_err(|e| Error::io(path, e))
}

/// Seeded partition into `n_train` uniformly sampled pairs and the rest.
///
/// Both halves keep the original relative order of their pairs.
pub fn split(dataset: &PreferenceDataset, n_train: usize, seed: u64) -> Result<(PreferenceDataset, PreferenceDataset)> {
    let n = dataset.len();
    if n_train > n {
        return Err(Error::OutOfRange(format!(
            "n_train={n_train} exceeds {n} available pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, n_train).into_vec();
    chosen.sort_unstable();
    let mut in_train = vec![false; n];
    chosen.iter().for_each(|&i| in_train[i] = true);
    let rest: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((dataset.select(&chosen), dataset.select(&rest)))
}

/// Row indices of the high and low score bands.
///
/// The top `floor(high_quantile·n)` rows by score form the high band and the
/// bottom `floor(low_quantile·n)` the low band, except that rows tied with
/// the first row outside a band are dropped from it. Every high-band score
/// is therefore strictly greater than every low-band score.
pub fn score_bands(table: &EmbeddingTable, high_quantile: f64, low_quantile: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let valid = |q: f64| q > 0.0 && q < 1.0;
    if !valid(high_quantile) || !valid(low_quantile) || high_quantile + low_quantile > 1.0 + 1e-12 {
        return Err(Error::OutOfRange(format!(
            "quantiles must lie in (0,1) and sum to at most 1, got {high_quantile} and {low_quantile}"
        )));
    }
    let scores = table
        .meta()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            m.score
                .filter(|s| s.is_finite())
                .ok_or_else(|| Error::Validation(format!("row '{}' has no score", table.id(i))))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let band_size = |q: f64| ((q * n as f64) + 1e-9).floor() as usize;
    let k_high = band_size(high_quantile);
    let k_low = band_size(low_quantile);

    let high: Vec<usize> = order[..k_high]
        .iter()
        .copied()
        .filter(|&i| k_high == n || scores[i] > scores[order[k_high]])
        .collect();
    let low_start = n - k_low;
    let low: Vec<usize> = order[low_start..]
        .iter()
        .copied()
        .filter(|&i| low_start == 0 || scores[i] < scores[order[low_start - 1]])
        .collect();

    if high.is_empty() || low.is_empty() {
        return Err(Error::Validation(format!(
            "empty band after quantile cut (high: {}, low: {})",
            high.len(),
            low.len()
        )));
    }
    Ok((high, low))
}

/// Samples `n_pairs` preferences with winners from the high score band and
/// losers from the low band, uniformly with replacement.
pub fn pairs_from_scores(
    table: Arc<EmbeddingTable>,
    high_quantile: f64,
    low_quantile: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    let (high, low) = score_bands(&table, high_quantile, low_quantile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n_pairs)
        .map(|_| IndexedPair {
            winner: high[rng.random_range(0..high.len())],
            loser: low[rng.random_range(0..low.len())],
            query_id: None,
        })
        .collect();
    PreferenceDataset::new(table, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::RowMeta;
    use crate::embedding::Embedding;

    fn table(n: usize) -> Arc<EmbeddingTable> {
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        let rows = (0..n).map(|i| Embedding::new(vec![i as f64, 1.0]).unwrap()).collect();
        Arc::new(EmbeddingTable::new(2, ids, rows).unwrap())
    }

    fn scored(scores: &[f64]) -> Arc<EmbeddingTable> {
        let n = scores.len();
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        let rows = (0..n).map(|_| Embedding::new(vec![1.0]).unwrap()).collect();
        let meta = scores
            .iter()
            .map(|&s| RowMeta {
                uri: None,
                score: Some(s),
            })
            .collect();
        Arc::new(EmbeddingTable::with_meta(1, ids, rows, meta).unwrap())
    }

    #[test]
    fn single_pair_line() {
        let ds = read_pairs("{\"winner\":\"r0\",\"loser\":\"r1\"}\n".as_bytes(), table(2)).unwrap();
        assert_eq!(ds.id_pairs(), vec![("r0", "r1")]);
        assert_eq!(ds.ties_dropped, 0);
    }

    #[test]
    fn ties_dropped_and_counted() {
        let src =
            "{\"winner\":\"r0\",\"loser\":\"r1\",\"tie\":true}\n{\"winner\":\"r1\",\"loser\":\"r0\",\"votes\":3}\n";
        let ds = read_pairs(src.as_bytes(), table(2)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.ties_dropped, 1);
    }

    #[test]
    fn unknown_id_reports_line() {
        let src = "{\"winner\":\"r0\",\"loser\":\"r1\"}\n{\"winner\":\"r0\",\"loser\":\"zz\"}\n";
        let err = read_pairs(src.as_bytes(), table(2)).unwrap_err();
        assert!(
            err.to_string().contains("line 2") && err.to_string().contains("zz"),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line() {
        let err = read_pairs("\n{\"winner\":\"r0\"\n".as_bytes(), table(2)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn self_pair_line_rejected() {
        assert!(read_pairs("{\"winner\":\"r0\",\"loser\":\"r0\"}\n".as_bytes(), table(2)).is_err());
    }

    #[test]
    fn split_boundaries() {
        let t = table(6);
        let ds = PreferenceDataset::from_ids(t, &[("r0", "r1"), ("r2", "r3"), ("r4", "r5"), ("r1", "r2")]).unwrap();
        let (train, eval) = split(&ds, 0, 1).unwrap();
        assert!(train.is_empty());
        assert_eq!(eval.pairs(), ds.pairs());
        let (train, eval) = split(&ds, 4, 1).unwrap();
        assert_eq!(train.pairs(), ds.pairs());
        assert!(eval.is_empty());
        assert!(split(&ds, 5, 1).is_err());
    }

    #[test]
    fn split_exhaustive_partition() {
        let t = table(12);
        for len in 0..=10usize {
            let ids: Vec<(String, String)> = (0..len).map(|i| (format!("r{i}"), format!("r{}", i + 1))).collect();
            let ds = PreferenceDataset::from_ids(t.clone(), &ids).unwrap();
            for n_train in 0..=len {
                for seed in 0..5 {
                    let (train, eval) = split(&ds, n_train, seed).unwrap();
                    let (again, _) = split(&ds, n_train, seed).unwrap();
                    assert_eq!(train.pairs(), again.pairs());
                    assert_eq!(train.len(), n_train);
                    assert_eq!(eval.len(), len - n_train);
                    let mut all: Vec<_> = train.pairs().iter().chain(eval.pairs()).map(|p| p.winner).collect();
                    all.sort_unstable();
                    assert_eq!(all, (0..len).collect::<Vec<_>>());
                }
            }
        }
    }

    #[test]
    fn two_rows_give_only_pair() {
        let ds = pairs_from_scores(scored(&[1.0, 0.0]), 0.5, 0.5, 1, 7).unwrap();
        assert_eq!(ds.id_pairs(), vec![("r0", "r1")]);
    }

    #[test]
    fn equal_scores_leave_empty_band() {
        let err = pairs_from_scores(scored(&[0.3; 10]), 0.2, 0.2, 5, 7).unwrap_err();
        assert!(err.to_string().contains("empty band"), "{err}");
    }

    #[test]
    fn boundary_ties_excluded() {
        // Top-2 cut falls inside the tie at 0.8.
        let (high, low) = score_bands(&scored(&[0.9, 0.8, 0.8, 0.5, 0.1]), 0.4, 0.2).unwrap();
        assert_eq!(high, vec![0]);
        assert_eq!(low, vec![4]);
    }

    #[test]
    fn missing_scores_rejected() {
        assert!(pairs_from_scores(table(4), 0.5, 0.5, 1, 0).is_err());
    }

    #[test]
    fn band_membership_against_direct_count() {
        // Distinct scores: a row is in the top 20 iff fewer than 20 rows beat it.
        let scores: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 * 0.01).collect();
        let t = scored(&scores);
        let ds = pairs_from_scores(t, 0.2, 0.2, 50, 11).unwrap();
        assert_eq!(ds.len(), 50);
        let beaten_by = |i: usize| scores.iter().filter(|&&s| s > scores[i]).count();
        let beats = |i: usize| scores.iter().filter(|&&s| s < scores[i]).count();
        for p in ds.pairs() {
            assert!(beaten_by(p.winner) < 20);
            assert!(beats(p.loser) < 20);
            assert!(scores[p.winner] > scores[p.loser]);
        }
    }
}
