//! Globally adaptive Gauss–Kronrod (G7/K15) cubature over axis-aligned boxes.
//!
//! Every cell is integrated with the tensor-product K15 rule and the error is
//! the componentwise gap to the embedded tensor-product G7 rule. The cell
//! with the largest error is bisected along its relatively longest edge
//! until the caller's stopping predicate accepts the global totals.
//! Everything runs in a fixed order, so results are bit-reproducible.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The 15 nodes on [-1, 1] with Kronrod and Gauss weights (0 if not a Gauss node).
fn rule15() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[2 * i] = (-XGK[i], WGK[i], wg);
        out[2 * i + 1] = (XGK[i], WGK[i], wg);
    }
    out[14] = (0.0, WGK[7], WG[3]);
    out
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone)]
pub(crate) struct QuadOutput {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evals: usize,
    pub converged: bool,
}

struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    values: Vec<f64>,
    errors: Vec<f64>,
    priority: f64,
    seq: u64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on priority; older cells first among equals.
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub(crate) struct Cubature<'a> {
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub components: usize,
    pub max_cells: usize,
}

impl Cubature<'_> {
    /// Integrates `f` (which fills one value per component) until `done`
    /// accepts `(values, errors)` or the cell budget runs out.
    pub fn run<E, F, S>(&self, mut f: F, mut done: S) -> Result<QuadOutput, E>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
        S: FnMut(&[f64], &[f64]) -> bool,
    {
        let d = self.lo.len();
        let nc = self.components;
        let rule = rule15();
        let extent: Vec<f64> = self.lo.iter().zip(self.hi).map(|(a, b)| b - a).collect();
        let mut evals = 0usize;
        let mut seq = 0u64;
        let mut point = vec![0.0; d];
        let mut fx = vec![0.0; nc];

        let mut eval_cell = |lo: Vec<f64>, hi: Vec<f64>, seq: u64| -> Result<Cell, E> {
            let half: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect();
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let jac: f64 = half.iter().product();
            let mut k_sum = vec![0.0; nc];
            let mut g_sum = vec![0.0; nc];
            let total = 15usize.pow(d as u32);
            let mut idx = vec![0usize; d];
            for _ in 0..total {
                let mut wk = 1.0;
                let mut wg = 1.0;
                for axis in 0..d {
                    let (x, k, g) = rule[idx[axis]];
                    point[axis] = mid[axis] + half[axis] * x;
                    wk *= k;
                    wg *= g;
                }
                f(&point, &mut fx)?;
                for c in 0..nc {
                    k_sum[c] += wk * fx[c];
                    g_sum[c] += wg * fx[c];
                }
                for slot in idx.iter_mut() {
                    *slot += 1;
                    if *slot < 15 {
                        break;
                    }
                    *slot = 0;
                }
            }
            evals += total;
            let values: Vec<f64> = k_sum.iter().map(|k| k * jac).collect();
            let errors: Vec<f64> = k_sum
                .iter()
                .zip(&g_sum)
                .map(|(k, g)| ((k - g) * jac).abs())
                .collect();
            let priority = errors.iter().fold(0.0f64, |m, e| m.max(*e));
            Ok(Cell {
                lo,
                hi,
                values,
                errors,
                priority,
                seq,
            })
        };

        let per_axis: usize = if d == 1 { 4 } else { 2 };
        let mut heap = BinaryHeap::new();
        let mut frozen: Vec<Cell> = Vec::new();
        let initial = per_axis.pow(d as u32);
        let mut idx = vec![0usize; d];
        for _ in 0..initial {
            let lo: Vec<f64> = (0..d)
                .map(|a| self.lo[a] + extent[a] * idx[a] as f64 / per_axis as f64)
                .collect();
            let hi: Vec<f64> = (0..d)
                .map(|a| {
                    if idx[a] + 1 == per_axis {
                        self.hi[a]
                    } else {
                        self.lo[a] + extent[a] * (idx[a] + 1) as f64 / per_axis as f64
                    }
                })
                .collect();
            heap.push(eval_cell(lo, hi, seq)?);
            seq += 1;
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < per_axis {
                    break;
                }
                *slot = 0;
            }
        }

        let totals = |heap: &BinaryHeap<Cell>, frozen: &[Cell]| -> (Vec<f64>, Vec<f64>) {
            let mut cells: Vec<&Cell> = heap.iter().chain(frozen.iter()).collect();
            cells.sort_by_key(|c| c.seq);
            let values = (0..nc)
                .map(|c| compensated_sum(cells.iter().map(|cell| cell.values[c])))
                .collect();
            let errors = (0..nc)
                .map(|c| cells.iter().map(|cell| cell.errors[c]).sum())
                .collect();
            (values, errors)
        };

        let (mut run_values, mut run_errors) = totals(&heap, &frozen);
        let mut since_refresh = 0usize;
        let mut cell_count = heap.len();
        let converged = loop {
            if done(&run_values, &run_errors) {
                let (v, e) = totals(&heap, &frozen);
                if done(&v, &e) {
                    break true;
                }
                run_values = v;
                run_errors = e;
            }
            if cell_count >= self.max_cells {
                break false;
            }
            let Some(worst) = heap.pop() else {
                break false;
            };
            if worst.priority == 0.0 {
                heap.push(worst);
                break false;
            }
            let axis = (0..d)
                .max_by(|&a, &b| {
                    let ra = (worst.hi[a] - worst.lo[a]) / extent[a];
                    let rb = (worst.hi[b] - worst.lo[b]) / extent[b];
                    ra.total_cmp(&rb).then(b.cmp(&a))
                })
                .unwrap_or(0);
            let split = 0.5 * (worst.lo[axis] + worst.hi[axis]);
            if split <= worst.lo[axis] || split >= worst.hi[axis] {
                frozen.push(worst);
                continue;
            }
            let mut left_hi = worst.hi.clone();
            left_hi[axis] = split;
            let mut right_lo = worst.lo.clone();
            right_lo[axis] = split;
            let left = eval_cell(worst.lo.clone(), left_hi, seq)?;
            let right = eval_cell(right_lo, worst.hi.clone(), seq + 1)?;
            seq += 2;
            for c in 0..nc {
                run_values[c] += left.values[c] + right.values[c] - worst.values[c];
                run_errors[c] += left.errors[c] + right.errors[c] - worst.errors[c];
            }
            heap.push(left);
            heap.push(right);
            cell_count += 1;
            since_refresh += 1;
            if since_refresh >= 256 {
                let (v, e) = totals(&heap, &frozen);
                run_values = v;
                run_errors = e;
                since_refresh = 0;
            }
        };
        let (values, errors) = totals(&heap, &frozen);
        Ok(QuadOutput {
            values,
            errors,
            evals,
            converged,
        })
    }
}
