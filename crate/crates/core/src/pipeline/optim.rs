use crate::linalg::Matrix;

use super::TrainingConfig;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Step-decayed learning rate: `lr₀ · decay^⌊epoch / period⌋`.
pub fn lr_at(epoch: usize, config: &TrainingConfig) -> f64 {
    config.learning_rate * config.lr_decay.powi((epoch / config.lr_decay_period) as i32)
}

/// Adam over one dense parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let (c1, c2) = bias_corrections(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            update(p, *g, m, v, lr, c1, c2);
        }
    }
}

fn bias_corrections(step: u64) -> (f64, f64) {
    (1.0 - BETA1.powi(step as i32), 1.0 - BETA2.powi(step as i32))
}

#[inline]
fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
}

/// Dense Adam over the rows of an embedding matrix, visiting only rows that
/// have ever received a non-zero gradient. Rows never touched have zero
/// moments and would receive a zero update, so skipping them is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RowAdam {
    step: u64,
    cols: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    active: Vec<bool>,
    active_rows: Vec<usize>,
}

impl RowAdam {
    pub fn new(rows: usize, cols: usize) -> Self {
        RowAdam {
            step: 0,
            cols,
            m: vec![0.0; rows * cols],
            v: vec![0.0; rows * cols],
            active: vec![false; rows],
            active_rows: Vec::new(),
        }
    }

    /// `grads` holds sparse rows; unnamed rows have zero gradient this step.
    pub fn step(&mut self, params: &mut Matrix, grads: &[(u32, Vec<f64>)], lr: f64) {
        assert_eq!(params.cols(), self.cols);
        self.step += 1;
        let (c1, c2) = bias_corrections(self.step);
        for (row, g) in grads {
            let r = *row as usize;
            if !self.active[r] && g.iter().any(|&x| x != 0.0) {
                self.active[r] = true;
                self.active_rows.push(r);
            }
        }
        let mut dense_grad = vec![0.0; self.cols];
        let mut lookup: Vec<Option<usize>> = Vec::new();
        if !grads.is_empty() {
            lookup.resize(self.active.len(), None);
            for (i, (row, _)) in grads.iter().enumerate() {
                lookup[*row as usize] = Some(i);
            }
        }
        for &r in &self.active_rows {
            let g: &[f64] = match lookup.get(r).copied().flatten() {
                Some(i) => &grads[i].1,
                None => {
                    dense_grad.iter_mut().for_each(|x| *x = 0.0);
                    &dense_grad
                }
            };
            let span = r * self.cols..(r + 1) * self.cols;
            let p_row = params.row_mut(r);
            for (((p, g), m), v) in p_row.iter_mut().zip(g).zip(&mut self.m[span.clone()]).zip(&mut self.v[span]) {
                update(p, *g, m, v, lr, c1, c2);
            }
        }
    }
}
