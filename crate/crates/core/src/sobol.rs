//! Unscrambled Sobol sequence in Gray-code order, direction numbers from
//! Joe and Kuo (new-joe-kuo-6.21201). The first dimension is van der Corput.

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

/// (degree s, coefficient a, initial m_1..m_s) for dimensions 2..=15.
const PRIMITIVES: [(u32, u32, &[u32]); 14] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
];

/// Highest supported dimension.
pub const MAX_DIMENSION: usize = PRIMITIVES.len() + 1;

#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dimension: usize) -> Self {
        assert!(
            (1..=MAX_DIMENSION).contains(&dimension),
            "Sobol dimension must be in 1..={MAX_DIMENSION}"
        );
        let mut directions = Vec::with_capacity(dimension);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in PRIMITIVES.iter().take(dimension - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..s {
                v[k] = m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[k - j];
                    }
                }
                v[k] = x;
            }
            directions.push(v);
        }
        Self {
            state: vec![0; dimension],
            directions,
            index: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Index of the point the next call to [`Sobol::next_point`] returns.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Position the generator so the next point is sequence element `index`.
    pub fn seek(&mut self, index: u64) {
        assert!(index < 1u64 << BITS, "Sobol index out of range");
        let gray = index ^ (index >> 1);
        for (state, v) in self.state.iter_mut().zip(&self.directions) {
            *state = (0..BITS)
                .filter(|&k| (gray >> k) & 1 == 1)
                .fold(0, |acc, k| acc ^ v[k]);
        }
        self.index = index;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let point = self.state.iter().map(|&s| s as f64 * SCALE).collect();
        // next Gray code flips the bit at the trailing ones of the current index
        let bit = self.index.trailing_ones() as usize;
        assert!(bit < BITS, "Sobol sequence exhausted");
        for (state, v) in self.state.iter_mut().zip(&self.directions) {
            *state ^= v[bit];
        }
        self.index += 1;
        point
    }
}

impl Iterator for Sobol {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        Some(self.next_point())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_dimension_starts_with_van_der_corput() {
        let xs: Vec<f64> = Sobol::new(1).take(5).map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 0.75, 0.25, 0.375]);
    }

    // Reference rows from an independent unscrambled Sobol generator, scaled by 1024.
    #[test]
    fn matches_reference_rows() {
        let reference: [(u64, [u32; 15]); 3] = [
            (
                1000,
                [
                    225, 99, 531, 693, 287, 929, 47, 921, 513, 71, 87, 261, 165, 393, 147,
                ],
            ),
            (
                1023,
                [
                    1, 771, 627, 149, 191, 449, 143, 633, 353, 871, 695, 37, 133, 681, 371,
                ],
            ),
            (
                777,
                [
                    709, 959, 167, 281, 651, 365, 195, 781, 357, 331, 763, 713, 393, 485, 583,
                ],
            ),
        ];
        let all: Vec<Vec<f64>> = Sobol::new(15).take(1024).collect();
        for (i, row) in reference {
            let expected: Vec<f64> = row.iter().map(|&m| m as f64 / 1024.0).collect();
            assert_eq!(all[i as usize], expected, "row {i}");
        }
        let row4: Vec<f64> = vec![
            0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625, 0.875, 0.375,
            0.375, 0.625, 0.375,
        ];
        assert_eq!(all[4], row4);
    }

    #[test]
    fn seek_agrees_with_iteration() {
        let all: Vec<Vec<f64>> = Sobol::new(15).take(300).collect();
        let mut s = Sobol::new(15);
        for &i in &[0u64, 1, 17, 128, 299] {
            s.seek(i);
            assert_eq!(s.next_point(), all[i as usize]);
        }
    }

    #[test]
    fn points_in_unit_cube() {
        for p in Sobol::new(15).take(4096) {
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }
}
