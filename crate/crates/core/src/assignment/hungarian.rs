use crate::error::{Error, Result};

/// Square score matrix in the maximization convention. The first `pinned`
/// columns stand for specific aspects; the rest are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    pinned: usize,
    data: Vec<f64>,
}

/// A maximizing row-to-column bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    /// `assignment[row] = column`.
    pub assignment: Vec<usize>,
    pub value: f64,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::from_flat(n, rows.concat(), n)
    }

    pub(crate) fn from_flat(n: usize, data: Vec<f64>, pinned: usize) -> Result<Self> {
        debug_assert_eq!(data.len(), n * n);
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("assignment matrix entry".into()));
        }
        Ok(CostMatrix {
            n,
            pinned: pinned.min(n),
            data,
        })
    }

    /// Marks the first `pinned` columns as aspect columns.
    pub fn with_pinned(mut self, pinned: usize) -> Self {
        self.pinned = pinned.min(self.n);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pinned(&self) -> usize {
        self.pinned
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn value_of(&self, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(r, &c)| self.get(r, c))
            .sum()
    }
}

/// Appends `extra` unconstrained columns and `extra` all-zero rows. Each
/// new column scores a row by its best pinned entry, so up to `extra`
/// pinned columns can be absorbed by the zero rows and left uncovered.
pub fn relax(matrix: &CostMatrix, extra: usize) -> CostMatrix {
    if extra == 0 {
        return matrix.clone();
    }
    let n = matrix.n;
    let m = n + extra;
    let mut data = vec![0.0; m * m];
    for r in 0..n {
        let row = matrix.row(r);
        data[r * m..r * m + n].copy_from_slice(row);
        let best = row[..matrix.pinned]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let best = if best.is_finite() { best } else { 0.0 };
        for c in n..m {
            data[r * m + c] = best;
        }
    }
    CostMatrix {
        n: m,
        pinned: matrix.pinned,
        data,
    }
}

/// Maximum-weight perfect matching. Among optimal matchings the
/// lexicographically smallest column sequence is returned.
pub fn kuhn_munkres(matrix: &CostMatrix) -> Cover {
    let n = matrix.n;
    if n == 0 {
        return Cover {
            assignment: Vec::new(),
            value: 0.0,
        };
    }
    // min-cost on the negated scores; 1-based potentials
    let cost = |i: usize, j: usize| -matrix.data[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }

    let scale = matrix.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * (1.0 + scale) * n as f64;
    let initial = row_to_col.clone();
    let tight = |i: usize, j: usize| {
        initial[i] == j || cost(i + 1, j + 1) - u[i + 1] - v[j + 1] <= tol
    };
    lexicographic_min(n, &mut row_to_col, &tight);

    Cover {
        value: matrix.value_of(&row_to_col),
        assignment: row_to_col,
    }
}

/// Rewrites the perfect matching `m` into the lexicographically smallest
/// perfect matching of the `tight` graph.
fn lexicographic_min(n: usize, m: &mut [usize], tight: &dyn Fn(usize, usize) -> bool) {
    let mut col_owner = vec![0usize; n];
    for (r, &c) in m.iter().enumerate() {
        col_owner[c] = r;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for j in 0..m[i] {
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            // rematch the owner of j into the column i gives up
            let target = m[i];
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if augment(col_owner[j], target, i, m, &col_owner, &fixed_col, &mut visited, &mut path, tight) {
                for &(r, c) in &path {
                    m[r] = c;
                    col_owner[c] = r;
                }
                m[i] = j;
                col_owner[j] = i;
                break;
            }
        }
        fixed_col[m[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    pivot: usize,
    m: &[usize],
    col_owner: &[usize],
    fixed_col: &[bool],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
    tight: &dyn Fn(usize, usize) -> bool,
) -> bool {
    let n = m.len();
    for c in 0..n {
        if fixed_col[c] || visited[c] || c == m[row] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_owner[c];
        if next == pivot {
            continue;
        }
        if augment(next, target, pivot, m, col_owner, fixed_col, visited, path, tight) {
            path.push((row, c));
            return true;
        }
    }
    false
}
