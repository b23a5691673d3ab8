//! Diversity-constrained segmentation and summarization as bipartite
//! assignment.
//!
//! Segmentation matches sentences (rows) to K columns pinned to the aspects
//! plus unconstrained columns that score a sentence by its best aspect, so
//! every aspect is used at least once. Summarization matches the K aspects
//! to distinct sentences.

mod hungarian;

pub use hungarian::{kuhn_munkres, relax, CostMatrix, Cover};

use crate::corpus::Review;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    /// Require every aspect to label at least one sentence.
    pub diversity: bool,
    /// Number of aspects that may go unused.
    pub relax: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            diversity: true,
            relax: 0,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Compatibility rows of every sentence of `review`.
pub fn review_compatibilities(params: &ModelParams, review: &Review) -> Result<Vec<Vec<f64>>> {
    let schema = params.schema();
    let mut out = Vec::with_capacity(review.sentences.len());
    for (s, sentence) in review.sentences.iter().enumerate() {
        let levels = review.sentence_levels(schema, s)?;
        let mut row = vec![0.0; params.num_aspects()];
        params.compat_into(&sentence.tokens, &levels, &mut row);
        out.push(row);
    }
    Ok(out)
}

/// The segmentation matrix over `compat` rows: one pinned column per aspect
/// in `required`, then unconstrained columns scoring each row by its
/// maximum, and `extra` zero rows that may absorb pinned columns. `None`
/// when the rows cannot cover the required aspects.
pub fn segmentation_matrix(
    compat: &[Vec<f64>],
    required: &[usize],
    extra: usize,
) -> Result<Option<CostMatrix>> {
    let n = compat.len();
    let p = required.len();
    if n + extra < p {
        return Ok(None);
    }
    let m = n + extra;
    let mut data = vec![0.0; m * m];
    for (r, row) in compat.iter().enumerate() {
        let best = row[argmax(row)];
        for (c, &k) in required.iter().enumerate() {
            data[r * m + c] = row[k];
        }
        for c in p..m {
            data[r * m + c] = best;
        }
    }
    CostMatrix::from_flat(m, data, p).map(Some)
}

/// Labels each row of `compat`. Rows with `clamped[s] = Some(k)` keep label
/// `k` and count toward covering `k`; the remaining rows are solved as a
/// cover over the aspects not yet covered. Falls back to per-row argmax
/// when diversity is off or the rows are too few.
pub fn segment_compat(
    compat: &[Vec<f64>],
    options: SegmentOptions,
    clamped: &[Option<usize>],
) -> Vec<usize> {
    let n = compat.len();
    if n == 0 {
        return Vec::new();
    }
    let k_count = compat[0].len();
    let mut labels: Vec<usize> = (0..n)
        .map(|s| clamped.get(s).copied().flatten().unwrap_or_else(|| argmax(&compat[s])))
        .collect();
    if !options.diversity {
        return labels;
    }
    let mut covered = vec![false; k_count];
    let mut free = Vec::new();
    for s in 0..n {
        match clamped.get(s).copied().flatten() {
            Some(k) => covered[k] = true,
            None => free.push(s),
        }
    }
    let required: Vec<usize> = (0..k_count).filter(|&k| !covered[k]).collect();
    if required.len() <= options.relax || free.len() + options.relax < required.len() {
        return labels;
    }
    let rows: Vec<Vec<f64>> = free.iter().map(|&s| compat[s].clone()).collect();
    let matrix = match segmentation_matrix(&rows, &required, options.relax) {
        Ok(Some(m)) => m,
        _ => return labels,
    };
    let cover = kuhn_munkres(&matrix);
    for (i, &s) in free.iter().enumerate() {
        let col = cover.assignment[i];
        labels[s] = if col < required.len() {
            required[col]
        } else {
            argmax(&compat[s])
        };
    }
    labels
}

/// Aspect label per sentence under the diversity constraint.
pub fn segment_review(params: &ModelParams, review: &Review) -> Result<Vec<usize>> {
    segment_review_with(params, review, SegmentOptions::default())
}

pub fn segment_review_with(
    params: &ModelParams,
    review: &Review,
    options: SegmentOptions,
) -> Result<Vec<usize>> {
    let compat = review_compatibilities(params, review)?;
    Ok(segment_compat(&compat, options, &[]))
}

/// The distinct sentence chosen for each aspect, maximizing total
/// compatibility.
pub fn summarize_compat(compat: &[Vec<f64>], k_count: usize, review_id: &str) -> Result<Vec<usize>> {
    let n = compat.len();
    if n < k_count {
        return Err(Error::SummaryTooShort {
            review_id: review_id.to_string(),
            sentences: n,
            aspects: k_count,
        });
    }
    let mut data = vec![0.0; n * n];
    for (r, row) in compat.iter().enumerate() {
        data[r * n..r * n + k_count].copy_from_slice(&row[..k_count]);
    }
    let cover = kuhn_munkres(&CostMatrix::from_flat(n, data, k_count)?);
    let mut chosen = vec![0; k_count];
    for (r, &c) in cover.assignment.iter().enumerate() {
        if c < k_count {
            chosen[c] = r;
        }
    }
    Ok(chosen)
}

pub fn summarize_review(params: &ModelParams, review: &Review) -> Result<Vec<usize>> {
    let compat = review_compatibilities(params, review)?;
    summarize_compat(&compat, params.num_aspects(), &review.review_id)
}
