use crate::linalg::vec;
use crate::scalar::Real;

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

/// Radical inverse of `index` in `base`, in `[0, 1)`.
pub fn halton(mut index: usize, base: u32) -> f64 {
    let b = base as usize;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % b) as f64;
        index /= b;
    }
    r
}

/// Point `index` of the Halton sequence in `[0, 1)^dim`. Dimensions beyond the prime
/// table reuse bases with a scrambled index.
pub fn halton_point(index: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let shift = k / PRIMES.len();
            halton(index + 1 + shift * 7919, base)
        })
        .collect()
}

/// `count` deterministic unit vectors in `R^dim` obtained by normalizing Halton points
/// mapped to `[−1, 1]^dim`. In one dimension the directions alternate `+1, −1`.
pub fn sphere_directions<T: Real>(count: usize, dim: usize) -> Vec<Vec<T>> {
    if dim == 0 {
        return vec![Vec::new(); count];
    }
    if dim == 1 {
        return (0..count)
            .map(|i| vec![if i % 2 == 0 { T::one() } else { -T::one() }])
            .collect();
    }
    let mut out = Vec::with_capacity(count);
    let mut index = 0;
    while out.len() < count {
        let p: Vec<T> = halton_point(index, dim)
            .into_iter()
            .map(|v| T::lit(2.0 * v - 1.0))
            .collect();
        index += 1;
        let n = vec::norm2(&p);
        if n > T::lit(0.1) {
            out.push(vec::scale(&p, T::one() / n));
        }
    }
    out
}
