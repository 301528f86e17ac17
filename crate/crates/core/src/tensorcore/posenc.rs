//! Sinusoidal positional encodings.

use super::Tensor;

const BASE: f64 = 10_000.0;

/// Wavelength (in positions) of column `col` of a `d`-channel encoding.
pub fn wavelength(col: usize, d: usize) -> f64 {
    let pair = (col / 2) as f64;
    2.0 * std::f64::consts::PI * BASE.powf(2.0 * pair / d as f64)
}

fn encode_into(pos: usize, d: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(d) {
        let angle = 2.0 * std::f64::consts::PI * pos as f64 / wavelength(i, d);
        *o = if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

/// `[t, d]` table with interleaved sine/cosine channels.
pub fn pos_encode_1d(t: usize, d: usize) -> Tensor {
    assert!(d.is_multiple_of(2), "1D positional encoding needs an even width");
    let mut data = vec![0.0; t * d];
    for pos in 0..t {
        encode_into(pos, d, &mut data[pos * d..(pos + 1) * d]);
    }
    Tensor::matrix(t, d, data)
}

/// `[w, l, d]` table: the first `d/2` channels encode the lateral index,
/// the last `d/2` the longitudinal index.
pub fn pos_encode_2d(w: usize, l: usize, d: usize) -> Tensor {
    assert!(d.is_multiple_of(4), "2D positional encoding needs a width divisible by 4");
    let half = d / 2;
    let mut data = vec![0.0; w * l * d];
    for i in 0..w {
        for j in 0..l {
            let cell = &mut data[(i * l + j) * d..(i * l + j + 1) * d];
            encode_into(i, half, &mut cell[..half]);
            encode_into(j, half, &mut cell[half..]);
        }
    }
    Tensor::new(vec![w, l, d], data)
}

/// Encoding vector of cell `(w, l)` in a table from [`pos_encode_2d`].
pub fn cell_encoding(table: &Tensor, w: usize, l: usize) -> &[f64] {
    let s = table.shape();
    let (ls, d) = (s[1], s[2]);
    &table.data()[(w * ls + l) * d..(w * ls + l + 1) * d]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates() {
        let pe = pos_encode_1d(4, 8);
        let row = pe.row_slice(0);
        for (i, v) in row.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn columns_are_periodic() {
        let d = 8;
        let pe = pos_encode_1d(64, d);
        // Column 0 has wavelength 2*pi; evaluate the closed form one period later.
        for col in 0..d {
            let lambda = wavelength(col, d);
            for pos in 0..64 {
                let shifted = 2.0 * std::f64::consts::PI * (pos as f64 + lambda) / lambda;
                let v = if col % 2 == 0 { shifted.sin() } else { shifted.cos() };
                assert!((v - pe.get(pos, col)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn values_bounded() {
        let pe = pos_encode_1d(200, 16);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn origin_is_concatenation_of_1d() {
        let d = 16;
        let t2 = pos_encode_2d(3, 4, d);
        let t1 = pos_encode_1d(1, d / 2);
        let cell = cell_encoding(&t2, 0, 0);
        assert_eq!(&cell[..d / 2], t1.row_slice(0));
        assert_eq!(&cell[d / 2..], t1.row_slice(0));
    }

    #[test]
    fn swapping_axes_swaps_halves() {
        let d = 16;
        let a = pos_encode_2d(5, 7, d);
        let b = pos_encode_2d(7, 5, d);
        for w in 0..5 {
            for l in 0..7 {
                let x = cell_encoding(&a, w, l);
                let y = cell_encoding(&b, l, w);
                assert_eq!(&x[..d / 2], &y[d / 2..]);
                assert_eq!(&x[d / 2..], &y[..d / 2]);
            }
        }
    }

    #[test]
    fn distinct_cells_have_distinct_encodings() {
        let (w, l, d) = (64, 64, 16);
        let t = pos_encode_2d(w, l, d);
        let cells: Vec<&[f64]> = (0..w)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .map(|(i, j)| cell_encoding(&t, i, j))
            .collect();
        for a in 0..cells.len() {
            for b in a + 1..cells.len() {
                assert_ne!(cells[a], cells[b], "cells {a} and {b} collide");
            }
        }
    }
}
