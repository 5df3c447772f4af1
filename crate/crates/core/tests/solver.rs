mod common;

use common::*;
use iogames::free_sets::*;
use iogames::objects::*;
use iogames::solver::ipm::{solve, SolverOptions, Status};
use iogames::solver::program::{ConeProgram, Expr, LinearMap};
use iogames::solver::robustness::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn opts() -> RobustnessOptions {
    RobustnessOptions::default()
}

fn classical() -> ConicFreeSet {
    compile_classical_channels(1, 2, &DMatrix::identity(2, 2)).unwrap()
}

fn random_channel(seed: u64) -> ChoiObject {
    let mut r = rng(seed);
    ChannelCollection::new(vec![
        channel_to_choi(&random_kraus(&mut r, 2, 2, 2)).unwrap()
    ])
    .unwrap()
    .into()
}

fn object_from(layout: &BlockLayout, blocks: &[DMatrix<num_complex::Complex64>]) -> ChoiObject {
    let dims = layout.block_dims();
    let blocks = blocks.iter().map(|b| cm(b.clone(), &dims)).collect();
    ChoiObject::from_blocks(layout, blocks).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn trace_over_psd_majorant(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, n);
        let mut p = ConeProgram::new("majorant");
        let x = p.add_block(n);
        let s = p.add_block(n);
        p.add_objective(&Expr::var(x, n), &DMatrix::identity(n, n));
        p.add_equality(&Expr::var(x, n).plus(&Expr::var(s, n).scaled(-1.0)), &a);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let oracle: f64 = a.clone().symmetric_eigen().eigenvalues.iter().map(|l| l.max(0.0)).sum();
        prop_assert!((sol.primal_value - oracle).abs() < 1e-7);
        prop_assert!(sol.gap <= 1e-7);
        prop_assert!(sol.complementarity.abs() <= 1e-7);
    }

    #[test]
    fn largest_eigenvalue_by_density_optimization(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, n);
        let mut p = ConeProgram::new("lambda_max");
        let x = p.add_block(n);
        p.add_objective(&Expr::var(x, n), &(-&a));
        let tr = LinearMap::functional(&DMatrix::identity(n, n));
        p.add_equality(&Expr::term(x, tr), &DMatrix::from_element(1, 1, c(1.0, 0.0)));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let oracle = a.symmetric_eigen().eigenvalues.max();
        prop_assert!((-sol.primal_value - oracle).abs() < 1e-7);
    }
}

#[test]
fn member_has_unit_value() {
    let povm = Povm::computational(2);
    let obj: ChoiObject = ChoiChannel::measure_prepare(&povm).into();
    let r = robustness(&obj, &classical(), &opts()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.value - 1.0).abs() <= 1e-7);
    // Any feasible witness scores at most 1 on a member; the optimal one hits it.
    assert!((r.witness.value(&obj) - 1.0).abs() <= 1e-6);
}

#[test]
fn identity_versus_classical_primal_dual_agree() {
    let obj: ChoiObject = ChoiChannel::identity(2).into();
    let f = classical();
    let r = robustness(&obj, &f, &opts()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!(r.robustness > 0.5);
    assert!((r.value - r.dual_value).abs() <= 1e-7);
    assert!((r.witness.value(&obj) - r.value).abs() <= 1e-7);
    let check = verify_witness(&r.witness, &obj, &f, &opts()).unwrap();
    assert!(check.pass);
    assert!(check.free_max <= 1.0 + 1e-6);
}

#[test]
fn random_channels_certificates() {
    let f = classical();
    for seed in 0..8 {
        let obj = random_channel(100 + seed);
        let r = robustness(&obj, &f, &opts())
            .unwrap()
            .require_optimal()
            .unwrap();
        assert!(r.gap <= 1e-7, "gap {}", r.gap);
        assert!((r.value - r.dual_value).abs() <= 1e-7);
        assert!(r.solution.complementarity.abs() <= 1e-7);
        let check = verify_witness(&r.witness, &obj, &f, &opts()).unwrap();
        assert!(check.free_max <= 1.0 + 1e-6);
        assert!(check.min_eigenvalue >= -1e-9);
        if let Some(noise) = &r.noise {
            // tr[Y Λ̃] = 0 on the optimal noise, which is a valid channel.
            let n = object_from(&obj.layout(), noise);
            assert!(r.witness.value(&n).abs() <= 1e-6, "{}", r.witness.value(&n));
            let rep = validate(&n);
            for ch in &rep.checks {
                assert!(ch.residual <= 1e-7, "{}: {:e}", ch.name, ch.residual);
            }
        }
    }
}

#[test]
fn program_has_one_slack_per_block() {
    let f = compile_compatible_channels(2, 2, 2).unwrap();
    let obj = standard_object("identity", &serde_json::json!({"copies": 2})).unwrap();
    let prog = build_robustness_primal(&obj, &f).unwrap();
    // Free-set variables (including α) plus one slack per channel block.
    assert_eq!(prog.program.blocks().len(), f.vars().len() + 2);
}

#[test]
fn solves_are_deterministic() {
    let obj = random_channel(7);
    let a = robustness(&obj, &classical(), &opts()).unwrap();
    let b = robustness(&obj, &classical(), &opts()).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.solution.iterations, b.solution.iterations);
    assert_eq!(a.witness.blocks, b.witness.blocks);
}

#[test]
fn slater_holds_for_classical_and_broadcast_sets() {
    assert!(slater_check(&classical(), &opts()).unwrap().holds);
    let f = compile_compatible_channels(2, 2, 2).unwrap();
    let s = slater_check(&f, &opts()).unwrap();
    assert!(s.holds && s.margin >= SLATER_MARGIN);
}

#[test]
fn maximally_mixed_witness_value_is_linear() {
    let obj: ChoiObject = ChoiChannel::identity(2).into();
    let r = robustness(&obj, &classical(), &opts()).unwrap();
    let flat = ChoiObject::maximally_mixed(&obj.layout());
    let mix = obj.mix(&flat, 0.25).unwrap();
    let lhs = r.witness.value(&mix);
    let rhs = 0.75 * r.witness.value(&obj) + 0.25 * r.witness.value(&flat);
    assert!((lhs - rhs).abs() < 1e-12);
}
