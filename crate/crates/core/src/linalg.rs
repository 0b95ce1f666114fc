//! Small fixed-size linear algebra: 4×4 complex matrices, their exterior
//! powers, and the constant bracket matrices.

use nalgebra::Matrix4;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn mat4_from_real(rows: [[f64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|i, j| r(rows[i][j]))
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat4) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// `J = [(-1)^{k+1} δ_{k,5-j}]`, the matrix of the Lagrange bracket.
pub fn bracket_j() -> Mat4 {
    Mat4::from_fn(|k, j| {
        // zero-based: k + j == 3
        if k + j == 3 {
            if k % 2 == 0 {
                ONE
            } else {
                -ONE
            }
        } else {
            ZERO
        }
    })
}

pub fn j0() -> Mat4 {
    mat4_from_real([
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
    ])
}

pub fn j1() -> Mat4 {
    mat4_from_real([
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ])
}

pub fn invert(m: &Mat4) -> Option<Mat4> {
    m.try_inverse()
}

/// Sorted index subsets of `{0,1,2,3}` of size `grade`, in lexicographic order.
pub fn basis(grade: usize) -> &'static [&'static [usize]] {
    const G1: [&[usize]; 4] = [&[0], &[1], &[2], &[3]];
    const G2: [&[usize]; 6] = [&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]];
    const G3: [&[usize]; 4] = [&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]];
    const G4: [&[usize]; 1] = [&[0, 1, 2, 3]];
    match grade {
        1 => &G1,
        2 => &G2,
        3 => &G3,
        4 => &G4,
        _ => panic!("grade {grade} not supported"),
    }
}

/// Position of a sorted subset inside [`basis`].
pub fn basis_index(subset: &[usize]) -> usize {
    basis(subset.len())
        .iter()
        .position(|s| *s == subset)
        .expect("subset must be sorted and within 0..4")
}

/// Sorts `cols` and returns the sort permutation's sign (0 when an index repeats).
pub fn sort_with_sign(cols: &[usize]) -> (Vec<usize>, i32) {
    let mut v = cols.to_vec();
    let mut sign = 1;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            } else if v[j] == v[j + 1] {
                return (v, 0);
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return (v, 0);
    }
    (v, sign)
}

fn det2(a: C64, b: C64, c: C64, d: C64) -> C64 {
    a * d - b * c
}

/// Determinant of the square submatrix of `m` on `rows × cols`.
pub fn minor(m: &Mat4, rows: &[usize], cols: &[usize]) -> C64 {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => ONE,
        1 => m[(rows[0], cols[0])],
        2 => det2(
            m[(rows[0], cols[0])],
            m[(rows[0], cols[1])],
            m[(rows[1], cols[0])],
            m[(rows[1], cols[1])],
        ),
        3 => {
            let e = |i: usize, j: usize| m[(rows[i], cols[j])];
            e(0, 0) * det2(e(1, 1), e(1, 2), e(2, 1), e(2, 2)) - e(0, 1) * det2(e(1, 0), e(1, 2), e(2, 0), e(2, 2))
                + e(0, 2) * det2(e(1, 0), e(1, 1), e(2, 0), e(2, 1))
        }
        4 => m.determinant(),
        n => panic!("minor of size {n}"),
    }
}

/// The k-th compound (exterior power) of a 4×4 matrix, in the [`basis`] ordering.
#[derive(Clone, Debug)]
pub struct Compound {
    pub grade: usize,
    pub dim: usize,
    pub m: [[C64; 6]; 6],
}

impl Compound {
    pub fn of(t: &Mat4, grade: usize) -> Self {
        let b = basis(grade);
        let mut m = [[ZERO; 6]; 6];
        if grade == 1 {
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = t[(i, j)];
                }
            }
        } else {
            for (i, rows) in b.iter().enumerate() {
                for (j, cols) in b.iter().enumerate() {
                    m[i][j] = minor(t, rows, cols);
                }
            }
        }
        Compound { grade, dim: b.len(), m }
    }

    #[inline]
    pub fn apply(&self, v: &[C64; 6]) -> [C64; 6] {
        let mut out = [ZERO; 6];
        for i in 0..self.dim {
            let row = &self.m[i];
            let mut acc = ZERO;
            for j in 0..self.dim {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }
}
