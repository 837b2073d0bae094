//! Exact null spaces of small rational constraint matrices.
//!
//! Tone indices are integers, so every constraint row (powers and inverse
//! powers of the tones) is rational. Eliminating over `BigRational` gives the
//! exact rank and an exact integer basis, with no pivoting tolerance to tune.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Rows `tones[j]^power` for each power in `powers`; negative powers give
/// inverse-power rows.
pub(crate) fn power_rows(tones: &[i64], powers: impl IntoIterator<Item = i32>) -> Vec<Vec<BigRational>> {
    powers
        .into_iter()
        .map(|p| tones.iter().map(|&n| rational_power(n, p)).collect())
        .collect()
}

fn rational_power(n: i64, p: i32) -> BigRational {
    let base = BigRational::from_integer(BigInt::from(n));
    if p >= 0 {
        num_traits::pow(base, p as usize)
    } else {
        num_traits::pow(base.recip(), (-p) as usize)
    }
}

/// Basis of the right null space of `rows` (each of length `ncols`), each
/// vector scaled to coprime integers.
pub(crate) fn integer_null_space(rows: &[Vec<BigRational>], ncols: usize) -> Vec<Vec<BigInt>> {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][col].recip();
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let factor = m[i][col].clone();
                for j in 0..ncols {
                    let delta = &factor * &m[r][j];
                    m[i][j] -= delta;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }

    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); ncols];
            v[f] = BigRational::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][f].clone();
            }
            to_coprime_integers(&v)
        })
        .collect()
}

fn to_coprime_integers(v: &[BigRational]) -> Vec<BigInt> {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v
        .iter()
        .map(|x| (x * BigRational::from_integer(lcm.clone())).to_integer())
        .collect();
    let g = ints
        .iter()
        .fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

pub(crate) fn to_f64(v: &[BigInt]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            x.to_f64()
                .unwrap_or(if x.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
        })
        .collect()
}
