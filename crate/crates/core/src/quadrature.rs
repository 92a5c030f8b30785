//! Globally adaptive Gauss–Kronrod (7/15) integration in one dimension and a
//! nested two-dimensional driver sharing one evaluation budget.

use std::cell::Cell;
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
/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Evaluation counter shared by nested integrations.
#[derive(Debug, Default)]
pub struct Budget {
    used: Cell<u64>,
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Self {
            used: Cell::new(0),
            limit,
        }
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn exhausted(&self) -> bool {
        self.used.get() >= self.limit
    }

    fn charge(&self, n: u64) {
        self.used.set(self.used.get() + n);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// One G7/K15 panel: Kronrod value and `|K - G|`.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Integrates `f` over each consecutive pair of `breaks`, bisecting the panel
/// with the largest error estimate until the total is below `tol` or the
/// budget runs out. Endpoints are never evaluated.
pub fn adaptive(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    tol: f64,
    budget: &Budget,
) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut frozen = (0.0, 0.0);
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (value, error) = gk15(&mut f, w[0], w[1]);
        budget.charge(15);
        total_err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    let mut converged = true;
    while total_err > tol {
        if budget.exhausted() {
            converged = false;
            break;
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            // cannot split further in floating point
            frozen.0 += p.value;
            frozen.1 += p.error;
            converged = false;
            continue;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        budget.charge(30);
        total_err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
    }
    // sum in interval order so the result does not depend on heap layout
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = frozen.0 + panels.iter().map(|p| p.value).sum::<f64>();
    let error = frozen.1 + panels.iter().map(|p| p.error).sum::<f64>();
    Integral {
        value,
        error,
        converged: converged && error <= tol,
    }
}

/// `int_{outer} dy int_{inner} f(x, y) dx`. Half of `tol` goes to the outer
/// rule; each inner line gets the other half spread over the outer length.
pub fn nested(
    f: impl Fn(f64, f64) -> f64,
    inner: &[f64],
    outer: &[f64],
    tol: f64,
    budget: &Budget,
) -> Integral {
    let len = (outer[outer.len() - 1] - outer[0]).abs();
    let inner_tol = 0.5 * tol / len;
    let worst_inner = Cell::new(0.0f64);
    let inner_ok = Cell::new(true);
    let line = |y: f64| {
        let r = adaptive(|x| f(x, y), inner, inner_tol, budget);
        worst_inner.set(worst_inner.get().max(r.error));
        inner_ok.set(inner_ok.get() && r.converged);
        r.value
    };
    let out = adaptive(line, outer, 0.5 * tol, budget);
    let error = out.error + len * worst_inner.get();
    Integral {
        value: out.value,
        error,
        converged: out.converged && inner_ok.get(),
    }
}
