//! Sparse training matrix held both row-wise (for routing) and column-wise
//! sorted by value (for split scans).

/// A sparse row: `(column, value)` pairs ascending by column. Absent columns
/// are missing values.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    rows: Vec<SparseRow>,
    /// Per feature, `(row, value)` pairs ascending by value then row.
    columns: Vec<Vec<(u32, f64)>>,
}

impl Dataset {
    /// Build from sparse rows. Entries must be finite; rows are sorted by
    /// column if needed and columns `>= n_features` are rejected.
    pub fn new(mut rows: Vec<SparseRow>, n_features: usize) -> Result<Self, String> {
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_features];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(format!("row {r} repeats column {}", w[0].0));
                }
            }
            for &(c, v) in row.iter() {
                if c as usize >= n_features {
                    return Err(format!("row {r} has column {c} outside {n_features} features"));
                }
                if !v.is_finite() {
                    return Err(format!("row {r} column {c} is not finite"));
                }
                columns[c as usize].push((r as u32, v));
            }
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        Ok(Self { n_features, rows, columns })
    }

    pub fn from_dense(data: &[Vec<Option<f64>>]) -> Result<Self, String> {
        let n_features = data.first().map_or(0, Vec::len);
        let rows = data.iter().map(|r| r.iter().enumerate().filter_map(|(c, v)| v.map(|v| (c as u32, v))).collect()).collect();
        Self::new(rows, n_features)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.rows[r]
    }

    pub fn column(&self, c: usize) -> &[(u32, f64)] {
        &self.columns[c]
    }

    pub fn value(&self, r: usize, c: u32) -> Option<f64> {
        lookup(&self.rows[r], c)
    }
}

/// Value of column `c` in a column-sorted sparse row.
pub fn lookup(row: &[(u32, f64)], c: u32) -> Option<f64> {
    row.binary_search_by_key(&c, |e| e.0).ok().map(|i| row[i].1)
}
