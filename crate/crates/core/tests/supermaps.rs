mod common;

use common::*;
use iogames::free_sets::*;
use iogames::linalg::{pauli, ComplexMatrix};
use iogames::objects::*;
use iogames::solver::robustness::*;
use iogames::supermaps::*;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

const QUBITS: [usize; 6] = [2, 2, 2, 2, 2, 2];

fn choi(k: &[DMatrix<C64>]) -> ChoiChannel {
    channel_to_choi(k).unwrap()
}

fn with_identity(k: &[DMatrix<C64>], a: usize) -> Vec<DMatrix<C64>> {
    k.iter()
        .map(|m| kron(m, &DMatrix::identity(a, a)))
        .collect()
}

fn effect(r: &mut impl Rng) -> DMatrix<C64> {
    random_povm(r, 2, 2).remove(0)
}

#[test]
fn circuits_match_sequential_evaluation() {
    let mut r = rng(41);
    for case in 0..50 {
        let order = if case % 2 == 0 {
            Order::FirstThenSecond
        } else {
            Order::SecondThenFirst
        };
        let memory = case % 4 >= 2;
        let a = if memory { 2 } else { 1 };
        let pre = random_kraus(&mut r, 2, 2 * a, 2);
        let mid = random_kraus(&mut r, 2 * a, 2 * a, 2);
        let post = random_kraus(&mut r, 2 * a, 2, 2);
        let slot_c = random_kraus(&mut r, 2, 2, 2);
        let slot_d = random_kraus(&mut r, 2, 2, 2);
        let rho = random_density(&mut r, 2);
        let m = effect(&mut r);
        let (first, second) = match order {
            Order::FirstThenSecond => (&slot_c, &slot_d),
            Order::SecondThenFirst => (&slot_d, &slot_c),
        };
        let mut s = apply_kraus(&pre, &rho);
        s = apply_kraus(&with_identity(first, a), &s);
        s = apply_kraus(&mid, &s);
        s = apply_kraus(&with_identity(second, a), &s);
        s = apply_kraus(&post, &s);
        let direct = (s * &m).trace().re;

        let dims = ProcessDims::new(2, 2, 2, 2, 2, 2);
        let w = process_of_circuit_with_memory(&choi(&pre), &choi(&mid), &choi(&post), dims, order)
            .unwrap();
        let p = probability(
            &w,
            &cm(naive_choi(&slot_c), &[2, 2]),
            &cm(naive_choi(&slot_d), &[2, 2]),
            &ComplexMatrix::from_matrix(m),
            &ComplexMatrix::from_matrix(rho),
        )
        .unwrap();
        assert!((p - direct).abs() <= 1e-9, "case {case}: {p} vs {direct}");
    }
}

fn random_process(r: &mut impl Rng, order: Order) -> ProcessMatrix {
    process_of_circuit(
        &choi(&random_kraus(r, 2, 2, 2)),
        &choi(&random_kraus(r, 2, 2, 2)),
        &choi(&random_kraus(r, 2, 2, 2)),
        order,
    )
    .unwrap()
}

#[test]
fn probabilities_are_normalized() {
    let mut r = rng(42);
    let processes = [
        random_process(&mut r, Order::FirstThenSecond),
        random_process(&mut r, Order::SecondThenFirst),
        ocb_process(),
    ];
    for w in &processes {
        for _ in 0..10 {
            let i0 = w.dims().i0;
            let o0 = w.dims().o0;
            let jc = cm(naive_choi(&random_kraus(&mut r, 2, 2, 3)), &[2, 2]);
            let jd = cm(naive_choi(&random_kraus(&mut r, 2, 2, 3)), &[2, 2]);
            let rho = ComplexMatrix::from_matrix(random_density(&mut r, i0));
            let total: f64 = random_povm(&mut r, o0, 3)
                .into_iter()
                .map(|m| probability(w, &jc, &jd, &ComplexMatrix::from_matrix(m), &rho).unwrap())
                .sum();
            assert!((total - 1.0).abs() <= 1e-8, "{total}");
        }
    }
}

#[test]
fn validity_projector_is_an_orthogonal_projection() {
    let mut r = rng(43);
    let dims = ProcessDims::new(2, 2, 2, 2, 2, 2);
    for _ in 0..5 {
        let x = cm(random_hermitian(&mut r, 64), &QUBITS);
        let y = cm(random_hermitian(&mut r, 64), &QUBITS);
        let px = validity_project(&x, &dims).unwrap();
        let ppx = validity_project(&px, &dims).unwrap();
        assert!(ppx.max_abs_diff(&px) <= 1e-10);
        let py = validity_project(&y, &dims).unwrap();
        assert!((x.inner(&py) - px.inner(&y)).abs() <= 1e-10);
    }
}

#[test]
fn valid_processes_are_fixed() {
    let mut r = rng(44);
    for order in [Order::FirstThenSecond, Order::SecondThenFirst] {
        let w = random_process(&mut r, order);
        assert!(validity_residual(w.matrix(), &w.dims()).unwrap() <= 1e-10);
        let a = validity_project_affine(w.matrix(), &w.dims()).unwrap();
        assert!(a.max_abs_diff(w.matrix()) <= 1e-10);
    }
    let w = ocb_process();
    assert!(validity_residual(w.matrix(), &w.dims()).unwrap() <= 1e-10);
    // Terms on the first slot output alone, or on the global past alone,
    // break normalization and are removed; a fixed global-future state is
    // kept.
    let (i, z) = (pauli::i2(), pauli::z());
    let dims = ProcessDims::new(2, 2, 2, 2, 2, 2);
    for k in [O1, I0] {
        let mut fs = [&i; 6];
        fs[k] = &z;
        assert!(
            validity_project(&tensor_factors(&fs), &dims)
                .unwrap()
                .frobenius_norm()
                <= 1e-12
        );
    }
    let future = tensor_factors(&[&i, &i, &i, &i, &i, &z]);
    assert!(validity_residual(&future, &dims).unwrap() <= 1e-12);
}

fn tensor_factors(fs: &[&ComplexMatrix]) -> ComplexMatrix {
    let m = fs
        .iter()
        .skip(1)
        .fold(fs[0].matrix().clone(), |a, f| kron(&a, f.matrix()));
    cm(m, &fs.iter().map(|f| f.order()).collect::<Vec<_>>())
}

#[test]
fn swapping_the_order_swaps_the_slots() {
    let mut r = rng(45);
    let (pre, mid, post) = (
        choi(&random_kraus(&mut r, 2, 2, 2)),
        choi(&random_kraus(&mut r, 2, 2, 2)),
        choi(&random_kraus(&mut r, 2, 2, 2)),
    );
    let w12 = process_of_circuit(&pre, &mid, &post, Order::FirstThenSecond).unwrap();
    let w21 = process_of_circuit(&pre, &mid, &post, Order::SecondThenFirst).unwrap();
    let swapped = w21.matrix().permute_factors(&[0, 3, 4, 1, 2, 5]).unwrap();
    assert!(swapped.max_abs_diff(w12.matrix()) <= 1e-12);
}

#[test]
fn fully_depolarizing_preparation_forgets_the_state() {
    let mut r = rng(46);
    let pre = ChoiChannel::depolarizing(2, 0.0).unwrap();
    let w = process_of_circuit(
        &pre,
        &choi(&random_kraus(&mut r, 2, 2, 2)),
        &choi(&random_kraus(&mut r, 2, 2, 2)),
        Order::FirstThenSecond,
    )
    .unwrap();
    let jc = cm(naive_choi(&random_kraus(&mut r, 2, 2, 2)), &[2, 2]);
    let jd = cm(naive_choi(&random_kraus(&mut r, 2, 2, 2)), &[2, 2]);
    let m = ComplexMatrix::from_matrix(effect(&mut r));
    let p0 = probability(
        &w,
        &jc,
        &jd,
        &m,
        &ComplexMatrix::from_matrix(random_density(&mut r, 2)),
    )
    .unwrap();
    for _ in 0..5 {
        let p = probability(
            &w,
            &jc,
            &jd,
            &m,
            &ComplexMatrix::from_matrix(random_density(&mut r, 2)),
        )
        .unwrap();
        assert!((p - p0).abs() <= 1e-12);
    }
}

fn slots_only(order: Order) -> ProcessMatrix {
    process_of_circuit(
        &prepare_zero(2),
        &ChoiChannel::identity(2),
        &discard(2),
        order,
    )
    .unwrap()
}

#[test]
fn mixtures_of_orders_are_causally_separable() {
    let a: ChoiObject = slots_only(Order::FirstThenSecond).into();
    let b: ChoiObject = slots_only(Order::SecondThenFirst).into();
    let f = compile_causally_separable(ProcessDims::new(1, 2, 2, 2, 2, 1));
    let cert = membership(&a.mix(&b, 0.3).unwrap(), &f).unwrap();
    assert_eq!(cert.verdict, Verdict::In);
    assert!(cert.residual <= CERTIFICATE_TOL);
}

/// `[I + (Z_O1 Z_I2 + Z_I1 X_I2 Z_O2)/√2] / 16` on (I1, O1, I2, O2).
fn ocb_oracle() -> DMatrix<C64> {
    let i = DMatrix::<C64>::identity(2, 2);
    let (x, z) = (pauli::x().into_matrix(), pauli::z().into_matrix());
    let k4 = |a: &DMatrix<C64>, b: &DMatrix<C64>, c: &DMatrix<C64>, d: &DMatrix<C64>| {
        kron(&kron(&kron(a, b), c), d)
    };
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    (DMatrix::identity(16, 16) + (k4(&i, &z, &z, &i) + k4(&z, &i, &x, &z)) * s)
        * C64::new(1.0 / 16.0, 0.0)
}

fn ocb_fixture() -> ChoiObject {
    iogames::report::load_fixture("ocb_causally_separable_verify.json")
        .unwrap()
        .object
        .build()
        .unwrap()
}

#[test]
fn ocb_fixture_matches_its_formula() {
    let oracle = ocb_oracle();
    let ChoiObject::Process(w) = ocb_fixture() else {
        panic!("process fixture")
    };
    assert!(max_diff(w.matrix().matrix(), &oracle) <= 1e-12);
    assert!(max_diff(ocb_process().matrix().matrix(), &oracle) <= 1e-15);
    assert!(w.matrix().min_eigenvalue() >= -1e-14);
}

const OCB_ROBUSTNESS: f64 = 0.1715728753;

#[test]
fn ocb_robustness_regression() {
    let f = compile_causally_separable(ProcessDims::new(1, 2, 2, 2, 2, 1));
    let base = robustness(&ocb_fixture(), &f, &RobustnessOptions::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    assert!(
        (base.robustness - OCB_ROBUSTNESS).abs() <= 1e-6,
        "{}",
        base.robustness
    );
    let mm: ChoiObject = ProcessMatrix::maximally_mixed(ProcessDims::new(1, 2, 2, 2, 2, 1)).into();
    let mut prev = base.robustness;
    for eps in [0.05, 0.1, 0.2] {
        let mixed = ocb_fixture().mix(&mm, eps).unwrap();
        let rv = robustness(&mixed, &f, &RobustnessOptions::default())
            .unwrap()
            .robustness;
        assert!(rv < prev, "eps {eps}: {rv} vs {prev}");
        prev = rv;
    }
}

#[test]
fn ocb_verification_passes() {
    let f = compile_causally_separable(ProcessDims::new(1, 2, 2, 2, 2, 1));
    let v = verify_theorem2(&ocb_fixture(), &f, 1e-5, &RobustnessOptions::default()).unwrap();
    assert!(v.report.pass, "{:?}", v.report);
    assert!(v.report.equality_residual <= 1e-5);
    assert!(v.report.free_max <= 1.0);
    let p = collaborative_payoff(&v.game, &ocb_fixture()).unwrap();
    assert!((p - v.report.payoff).abs() <= 1e-9);
}
