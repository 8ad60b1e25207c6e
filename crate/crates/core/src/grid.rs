//! Evaluation grids for sup-norm error measurements.

/// `n` equally spaced points covering `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Radical-inverse of `i` in base `b` (the Halton construction).
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// `n` Halton points in the box `domain`, one coordinate stream per prime.
pub fn halton(domain: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    assert!(domain.len() <= PRIMES.len(), "too many dimensions for the prime table");
    (1..=n as u64)
        .map(|i| {
            domain
                .iter()
                .zip(PRIMES)
                .map(|(&(lo, hi), p)| lo + (hi - lo) * radical_inverse(i, p))
                .collect()
        })
        .collect()
}

/// Point budget convention: dense tensor grids up to two dimensions,
/// low-discrepancy beyond that.
pub fn default_budget(dim: usize) -> usize {
    if dim <= 2 {
        10_000
    } else {
        100_000
    }
}

/// Evaluation grid over a box. One or two dimensions get a tensor grid with
/// about `budget` total points (endpoints included); higher dimensions get a
/// Halton set of exactly `budget` points.
pub fn eval_grid(domain: &[(f64, f64)], budget: usize) -> Vec<Vec<f64>> {
    match domain {
        [] => panic!("empty domain"),
        [(lo, hi)] => linspace(*lo, *hi, budget.max(2)).into_iter().map(|x| vec![x]).collect(),
        [(lo0, hi0), (lo1, hi1)] => {
            let side = (budget as f64).sqrt().round().max(2.0) as usize;
            let xs = linspace(*lo0, *hi0, side);
            let ys = linspace(*lo1, *hi1, side);
            let mut out = Vec::with_capacity(side * side);
            for x in &xs {
                for y in &ys {
                    out.push(vec![*x, *y]);
                }
            }
            out
        }
        _ => halton(domain, budget),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_endpoints() {
        let xs = linspace(-1.0, 3.0, 5);
        assert_eq!(xs, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(linspace(0.0, 1.0, 10_000).len(), 10_000);
    }

    #[test]
    fn radical_inverse_base2_and_3() {
        let base2: Vec<f64> = (1..=4).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(base2, vec![0.5, 0.25, 0.75, 0.125]);
        let base3: Vec<f64> = (1..=3).map(|i| radical_inverse(i, 3)).collect();
        assert!((base3[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((base3[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((base3[2] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn grid_shapes() {
        let g1 = eval_grid(&[(0.0, 1.0)], 10_000);
        assert_eq!(g1.len(), 10_000);
        let g2 = eval_grid(&[(0.0, 1.0), (-1.0, 1.0)], 10_000);
        assert_eq!(g2.len(), 100 * 100);
        assert!(g2.iter().all(|p| p.len() == 2));
        let g3 = eval_grid(&[(0.0, 1.0); 3], 1_000);
        assert_eq!(g3.len(), 1_000);
        assert!(g3
            .iter()
            .all(|p| p.iter().all(|&x| (0.0..=1.0).contains(&x))));
    }
}
