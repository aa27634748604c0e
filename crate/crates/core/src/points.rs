/// Dense row-major storage for a list of points of equal dimension.
///
/// Zero-dimensional point sets are allowed (a table whose features were all
/// claimed by earlier tables projects onto the empty subspace).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Points {
    dim: usize,
    len: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            len: 0,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            len: 0,
            data: Vec::with_capacity(dim * capacity),
        }
    }

    /// Builds from a flat row-major buffer. Panics if the length is not a
    /// multiple of `dim` (or nonzero with `dim == 0`).
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        let len = if dim == 0 {
            assert!(data.is_empty(), "zero-dimensional points carry no data");
            0
        } else {
            assert_eq!(data.len() % dim, 0, "buffer is not a whole number of rows");
            data.len() / dim
        };
        Self { dim, len, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Self {
        let mut out = Self::with_capacity(dim, rows.len());
        for r in rows {
            out.push(r.as_ref());
        }
        out
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "point dimension mismatch");
        self.data.extend_from_slice(row);
        self.len += 1;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.len, "row {i} out of range ({})", self.len);
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |i| self.row(i))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, rows.len());
        for &r in rows {
            out.push(self.row(r));
        }
        out
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Points {
        let mut out = Points::with_capacity(cols.len(), self.len);
        let mut buf = vec![0.0; cols.len()];
        for row in self.iter() {
            for (slot, &c) in buf.iter_mut().zip(cols) {
                *slot = row[c];
            }
            out.push(&buf);
        }
        out
    }

    /// Indices of the first occurrence of every distinct point (bitwise
    /// comparison), in order of first appearance.
    pub fn distinct_indices(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::with_capacity(self.len);
        (0..self.len)
            .filter(|&i| seen.insert(row_bits(self.row(i))))
            .collect()
    }
}

/// Serialized as a list of rows.
impl serde::Serialize for Points {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

pub(crate) fn row_bits(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Smallest float `r` with `r * r >= x`, so that a radius derived from a
/// squared distance still admits the point that produced it.
pub fn sqrt_up(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut r = x.sqrt();
    while r * r < x {
        r = r.next_up();
    }
    r
}

/// Lexicographic comparison under `f64::total_cmp`.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_up_covers_its_square() {
        for x in [2.0, 3.0, 1e-300, 0.1, 7.0, 12345.678, 1e10 + 1.0] {
            let r = sqrt_up(x);
            assert!(r * r >= x);
            assert!(r.next_down() * r.next_down() < x);
        }
        assert_eq!(sqrt_up(0.0), 0.0);
        assert_eq!(sqrt_up(25.0), 5.0);
    }

    #[test]
    fn zero_dim_points_count_rows() {
        let mut p = Points::new(0);
        p.push(&[]);
        p.push(&[]);
        assert_eq!(p.len(), 2);
        assert_eq!(p.row(1), &[] as &[f64]);
        assert_eq!(p.distinct_indices(), vec![0]);
    }

    #[test]
    fn distinct_keeps_first_occurrence() {
        let p = Points::from_rows(1, &[[1.0], [2.0], [1.0], [3.0], [2.0]]);
        assert_eq!(p.distinct_indices(), vec![0, 1, 3]);
    }
}
