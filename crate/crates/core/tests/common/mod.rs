//! Random instances and naive reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use iogames::linalg::ComplexMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn gaussian_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        c(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5)
    })
}

pub fn random_hermitian(r: &mut impl Rng, n: usize) -> DMatrix<C64> {
    let g = gaussian_matrix(r, n, n);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

pub fn random_density(r: &mut impl Rng, d: usize) -> DMatrix<C64> {
    let g = gaussian_matrix(r, d, d);
    let p = &g * g.adjoint();
    let t = p.trace();
    p / t
}

/// `M^{-1/2}` for a positive definite `M`.
pub fn inv_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| c(1.0 / l.sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// `k` Kraus operators `d_out x d_in` with `Σ K^H K = I`.
pub fn random_kraus(r: &mut impl Rng, d_in: usize, d_out: usize, k: usize) -> Vec<DMatrix<C64>> {
    let gs: Vec<_> = (0..k).map(|_| gaussian_matrix(r, d_out, d_in)).collect();
    let s = gs
        .iter()
        .fold(DMatrix::zeros(d_in, d_in), |a, g| a + g.adjoint() * g);
    let w = inv_sqrt(&s);
    gs.into_iter().map(|g| g * &w).collect()
}

pub fn random_povm(r: &mut impl Rng, d: usize, n: usize) -> Vec<DMatrix<C64>> {
    random_kraus(r, d, d, n)
        .into_iter()
        .map(|k| k.adjoint() * k)
        .collect()
}

pub fn apply_kraus(kraus: &[DMatrix<C64>], rho: &DMatrix<C64>) -> DMatrix<C64> {
    kraus.iter().fold(
        DMatrix::zeros(kraus[0].nrows(), kraus[0].nrows()),
        |a, k| a + k * rho * k.adjoint(),
    )
}

/// `(1/d_in) Σ_ij |i><j| ⊗ Λ(|i><j|)` evaluated entry by entry.
pub fn naive_choi(kraus: &[DMatrix<C64>]) -> DMatrix<C64> {
    let d_in = kraus[0].ncols();
    let d_out = kraus[0].nrows();
    let mut j = DMatrix::zeros(d_in * d_out, d_in * d_out);
    for a in 0..d_in {
        for b in 0..d_in {
            let mut e = DMatrix::zeros(d_in, d_in);
            e[(a, b)] = c(1.0, 0.0);
            let out = apply_kraus(kraus, &e);
            for o in 0..d_out {
                for p in 0..d_out {
                    j[(a * d_out + o, b * d_out + p)] = out[(o, p)] / d_in as f64;
                }
            }
        }
    }
    j
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

/// Trace over the second factor of a bipartite `da ⊗ db` matrix.
pub fn trace_second(m: &DMatrix<C64>, da: usize, db: usize) -> DMatrix<C64> {
    DMatrix::from_fn(da, da, |i, j| {
        (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
    })
}

/// Trace over the first factor of a bipartite `da ⊗ db` matrix.
pub fn trace_first(m: &DMatrix<C64>, da: usize, db: usize) -> DMatrix<C64> {
    DMatrix::from_fn(db, db, |i, j| {
        (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()
    })
}

pub fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn cm(m: DMatrix<C64>, dims: &[usize]) -> ComplexMatrix {
    ComplexMatrix::new(m, dims.to_vec()).unwrap()
}

/// Instrument blocks (as Choi matrices) from `arity` groups of `k` Kraus
/// operators each.
pub fn random_instrument(r: &mut impl Rng, d: usize, arity: usize, k: usize) -> Vec<ComplexMatrix> {
    let kraus = random_kraus(r, d, d, arity * k);
    kraus
        .chunks(k)
        .map(|ks| cm(naive_choi(ks), &[d, d]))
        .collect()
}

/// Uniform probabilities, random states and POVM, rewards in `[lo, hi]`.
pub fn random_game(
    r: &mut impl Rng,
    layout: iogames::objects::BlockLayout,
    states: usize,
    effects: usize,
    lo: f64,
    hi: f64,
) -> iogames::games::InputOutputGame {
    use iogames::games::*;
    let (d_in, d_out) = match &layout {
        iogames::objects::BlockLayout::Channels { d_in, d_out, .. }
        | iogames::objects::BlockLayout::Instruments { d_in, d_out, .. } => (*d_in, *d_out),
        _ => panic!("io layout"),
    };
    let n_dev = layout.n_devices();
    let p = 1.0 / (n_dev * states) as f64;
    let devices: Vec<IoDevice> = (0..n_dev)
        .map(|_| IoDevice {
            probs: vec![p; states],
            states: (0..states)
                .map(|_| ComplexMatrix::from_matrix(random_density(r, d_in)))
                .collect(),
            povm: random_povm(r, d_out, effects)
                .into_iter()
                .map(|m| ComplexMatrix::from_matrix((&m + m.adjoint()) * c(0.5, 0.0)))
                .collect(),
        })
        .collect();
    let rewards = (0..layout.n_blocks())
        .map(|_| {
            (0..states)
                .map(|_| (0..effects).map(|_| r.gen_range(lo..=hi)).collect())
                .collect()
        })
        .collect();
    InputOutputGame::new(layout, devices, rewards, CanonicalRecord::default()).unwrap()
}
