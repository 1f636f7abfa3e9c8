//! Central finite differences against the analytic backward passes.
//!
//! The losses here are evaluated from the formulas directly, without the
//! library's forward code, so they also check the forward passes.

use lshinfuse::encoder::{encode_backward, EncoderParams, TokenSequence};
use lshinfuse::infusion::{baseline_backward, infusion_backward, ClassifierHead};
use lshinfuse::linalg::{rng_for, Matrix};
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Pre-activations closer to zero than this would straddle the ReLU kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone)]
pub struct Instance {
    pub tokens: Vec<u32>,
    pub embedding: Matrix,
    pub projection: Matrix,
    pub head: Matrix,
    pub neighbors: Vec<Vec<f64>>,
    pub label: usize,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum Mask {
    Mixed,
    AllActive,
    AllInactive,
    OneActive,
}

pub const MASKS: [Mask; 4] = [Mask::Mixed, Mask::AllActive, Mask::AllInactive, Mask::OneActive];

pub const V: usize = 9;
pub const N: usize = 6;
pub const M: usize = 4;
pub const U: usize = 3;

fn pooled(inst: &Instance) -> Vec<f64> {
    let mut o = vec![0.0; N];
    for &t in &inst.tokens {
        for d in 0..N {
            o[d] += inst.embedding.get(t as usize, d);
        }
    }
    o.iter().map(|x| x / inst.tokens.len() as f64).collect()
}

fn pre_activation(inst: &Instance) -> Vec<f64> {
    let o = pooled(inst);
    (0..M).map(|j| (0..N).map(|d| o[d] * inst.projection.get(d, j)).sum()).collect()
}

pub fn context(inst: &Instance) -> Vec<f64> {
    pre_activation(inst).into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn log_softmax_at(logits: &[f64], i: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[i] - lse
}

fn infused_loss(inst: &Instance) -> f64 {
    let c = context(inst);
    let scores: Vec<f64> = inst.neighbors.iter().map(|z| z.iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    let mut zs = vec![0.0; M];
    for (w, z) in e.iter().zip(&inst.neighbors) {
        for d in 0..M {
            zs[d] += w / total * z[d];
        }
    }
    let s: Vec<f64> = c.iter().chain(&zs).copied().collect();
    let logits: Vec<f64> = (0..U).map(|k| (0..2 * M).map(|r| s[r] * inst.head.get(r, k)).sum()).collect();
    let pen: f64 = zs.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
    -log_softmax_at(&logits, inst.label) + inst.lambda * pen
}

fn baseline_loss(inst: &Instance) -> f64 {
    let c = context(inst);
    let logits: Vec<f64> = (0..U).map(|k| (0..M).map(|r| c[r] * inst.head.get(r, k)).sum()).collect();
    -log_softmax_at(&logits, inst.label)
}

pub fn instance(seed: u64, mask: Mask, infused: bool) -> Instance {
    let mut rng = rng_for(seed, 42);
    loop {
        let len = rng.random_range(1..=6);
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..V as u32)).collect();
        let embedding = Matrix::uniform(V, N, 1.0, &mut rng);
        let mut projection = Matrix::uniform(N, M, 1.0, &mut rng);
        let head_rows = if infused { 2 * M } else { M };
        let head = Matrix::uniform(head_rows, U, 1.0, &mut rng);
        let k = rng.random_range(1..=4);
        let neighbors = (0..k).map(|_| (0..M).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut inst = Instance {
            tokens,
            embedding,
            projection: projection.clone(),
            head,
            neighbors,
            label: rng.random_range(0..U),
            lambda: [0.0, 1e-4, 0.5][rng.random_range(0..3)],
        };
        let pre = pre_activation(&inst);
        if pre.iter().any(|x| x.abs() < KINK_MARGIN) {
            continue;
        }
        // flipping a projection column flips the sign of its pre-activation
        let want_active = |j: usize| match mask {
            Mask::Mixed => pre[j] > 0.0 || j == 0,
            Mask::AllActive => true,
            Mask::AllInactive => false,
            Mask::OneActive => j == 0,
        };
        for j in 0..M {
            if (pre[j] > 0.0) != want_active(j) {
                for d in 0..N {
                    let v = projection.get(d, j);
                    projection.row_mut(d)[j] = -v;
                }
            }
        }
        inst.projection = projection;
        return inst;
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn numeric<F: Fn(&Instance) -> f64>(inst: &Instance, loss: &F, get: impl Fn(&mut Instance) -> &mut Matrix) -> Vec<f64> {
    let len = get(&mut inst.clone()).as_slice().len();
    (0..len)
        .map(|i| {
            let mut plus = inst.clone();
            get(&mut plus).as_mut_slice()[i] += STEP;
            let mut minus = inst.clone();
            get(&mut minus).as_mut_slice()[i] -= STEP;
            (loss(&plus) - loss(&minus)) / (2.0 * STEP)
        })
        .collect()
}

fn numeric_context(inst: &Instance, loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let c = context(inst);
    (0..M)
        .map(|i| {
            let mut p = c.clone();
            p[i] += STEP;
            let mut q = c.clone();
            q[i] -= STEP;
            (loss(&p) - loss(&q)) / (2.0 * STEP)
        })
        .collect()
}

fn dense_embedding_grad(rows: &[(u32, Vec<f64>)]) -> Vec<f64> {
    let mut g = vec![0.0; V * N];
    for (id, r) in rows {
        g[*id as usize * N..(*id as usize + 1) * N].copy_from_slice(r);
    }
    g
}

pub struct Report {
    pub encoder_e: f64,
    pub encoder_w: f64,
    pub head: f64,
    pub context: f64,
}

pub fn check(seed: u64, mask: Mask, infused: bool) -> Report {
    let inst = instance(seed, mask, infused);
    let c = context(&inst);
    let params = EncoderParams::new(inst.embedding.clone(), inst.projection.clone()).unwrap();
    let tokens = TokenSequence(inst.tokens.clone());
    let neighbor_refs: Vec<&[f64]> = inst.neighbors.iter().map(Vec::as_slice).collect();

    let (grad_c, grad_head, loss_fn): (Vec<f64>, Matrix, fn(&Instance) -> f64) = if infused {
        let g = infusion_backward(&c, &neighbor_refs, &ClassifierHead::Infused(inst.head.clone()), inst.label, inst.lambda)
            .unwrap();
        assert!((g.loss - infused_loss(&inst)).abs() < 1e-12);
        (g.grad_c, g.grad_head, infused_loss)
    } else {
        let (loss, gc, gh, _) = baseline_backward(&c, &ClassifierHead::Baseline(inst.head.clone()), inst.label).unwrap();
        assert!((loss - baseline_loss(&inst)).abs() < 1e-12);
        (gc, gh, baseline_loss)
    };
    let enc = encode_backward(&tokens, &params, &grad_c).unwrap();

    // loss as a function of c alone, to check the c-gradient on its own
    let with_c = |cv: &[f64]| {
        let mut i2 = inst.clone();
        // encode c through an identity encoder over a single token
        i2.tokens = vec![0];
        i2.embedding = Matrix::zeros(V, N);
        i2.projection = Matrix::zeros(N, M);
        for d in 0..M.min(N) {
            i2.embedding.row_mut(0)[d] = cv[d];
            i2.projection.row_mut(d)[d] = 1.0;
        }
        loss_fn(&i2)
    };
    let context_err = if c.iter().all(|&x| x > KINK_MARGIN) {
        rel_err(&grad_c, &numeric_context(&inst, with_c))
    } else {
        0.0
    };

    Report {
        encoder_e: rel_err(&dense_embedding_grad(&enc.embedding_rows), &numeric(&inst, &loss_fn, |i| &mut i.embedding)),
        encoder_w: rel_err(enc.projection.as_slice(), &numeric(&inst, &loss_fn, |i| &mut i.projection)),
        head: rel_err(grad_head.as_slice(), &numeric(&inst, &loss_fn, |i| &mut i.head)),
        context: context_err,
    }
}

