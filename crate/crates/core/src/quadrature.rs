//! Globally adaptive Gauss–Kronrod (7/15) quadrature for small vector-valued
//! integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    /// Estimated absolute error (max over components).
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 200_000 }
    }
}

struct Interval<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Interval<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Interval<N> {}
impl<const N: usize> PartialOrd for Interval<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Interval<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Interval<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &p in pts {
            let fx = f(center + half * p);
            for c in 0..N {
                kronrod[c] += wk * fx[c];
                if i % 2 == 1 {
                    gauss[c] += WG[i / 2] * fx[c];
                }
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = 0.0f64;
    for c in 0..N {
        value[c] = kronrod[c] * half;
        error = error.max(((kronrod[c] - gauss[c]) * half).abs());
    }
    Interval { a, b, value, error }
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the
/// partition given by `breaks` (sorted, at least two points).
///
/// Subdivides the interval with the largest error estimate until the total
/// estimated error is below `max(abs_tol, rel_tol·‖value‖∞)`.
pub fn integrate<const N: usize, F: Fn(f64) -> [f64; N]>(f: F, breaks: &[f64], opts: &QuadOptions) -> QuadResult<N> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(gauss_kronrod(&f, w[0], w[1]));
            evaluations += 15;
        }
    }
    loop {
        let (value, error) = totals(&heap);
        let scale = value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = opts.abs_tol.max(opts.rel_tol * scale);
        if error <= target || heap.len() >= opts.max_intervals {
            return QuadResult { value, error, evaluations, converged: error <= target };
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            heap.push(worst);
            let (value, error) = totals(&heap);
            return QuadResult { value, error, evaluations, converged: false };
        }
        heap.push(gauss_kronrod(&f, worst.a, mid));
        heap.push(gauss_kronrod(&f, mid, worst.b));
        evaluations += 30;
    }
}

fn totals<const N: usize>(heap: &BinaryHeap<Interval<N>>) -> ([f64; N], f64) {
    // Sum in a fixed order so results do not depend on heap layout.
    let mut items: Vec<&Interval<N>> = heap.iter().collect();
    items.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = [0.0; N];
    let mut error = 0.0;
    for it in items {
        for (v, x) in value.iter_mut().zip(&it.value) {
            *v += x;
        }
        error += it.error;
    }
    (value, error)
}
