mod common;

use common::*;
use iogames::free_sets::*;
use iogames::games::*;
use iogames::linalg::ComplexMatrix;
use iogames::objects::*;
use iogames::solver::robustness::*;
use iogames::Error;
use rand::Rng;
use serde_json::json;

fn channel_layout(n: usize) -> BlockLayout {
    BlockLayout::Channels {
        n,
        d_in: 2,
        d_out: 2,
    }
}

fn random_channels(r: &mut impl Rng, n: usize) -> ChannelCollection {
    ChannelCollection::new(
        (0..n)
            .map(|_| channel_to_choi(&random_kraus(r, 2, 2, 2)).unwrap())
            .collect(),
    )
    .unwrap()
}

fn opts() -> RobustnessOptions {
    RobustnessOptions::default()
}

#[test]
fn choi_pairing_matches_direct_evaluation() {
    let mut r = rng(31);
    for _ in 0..20 {
        let g = random_game(&mut r, channel_layout(2), 3, 3, -1.0, 1.0);
        let obj: ChoiObject = random_channels(&mut r, 2).into();
        let a = payoff(&g, &obj).unwrap();
        let b = payoff_direct(&g, &obj).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
    for _ in 0..10 {
        let layout = BlockLayout::Instruments {
            arities: vec![2, 3],
            d_in: 2,
            d_out: 2,
        };
        let g = random_game(&mut r, layout, 2, 2, -1.0, 1.0);
        let blocks = vec![
            random_instrument(&mut r, 2, 2, 1),
            random_instrument(&mut r, 2, 3, 1),
        ];
        let obj: ChoiObject = InstrumentCollection::new(blocks, 2, 2).unwrap().into();
        let a = payoff(&g, &obj).unwrap();
        let b = payoff_direct(&g, &obj).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn canonical_games_span_the_unit_interval() {
    let mut r = rng(32);
    for _ in 0..5 {
        let g = random_game(&mut r, channel_layout(2), 2, 3, -2.0, 5.0);
        let once = canonicalize(&g, &opts()).unwrap();
        let range = global_range(&once, &opts()).unwrap();
        assert!(
            range.min.abs() <= 1e-9 && (range.max - 1.0).abs() <= 1e-9,
            "{range:?}"
        );
        let twice = canonicalize(&once, &opts()).unwrap();
        for (a, b) in once
            .rewards
            .iter()
            .flatten()
            .flatten()
            .zip(twice.rewards.iter().flatten().flatten())
        {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        // The record maps canonical payoffs back to raw ones.
        let obj: ChoiObject = random_channels(&mut r, 2).into();
        let rec = once.canonical_record;
        let raw = payoff(&g, &obj).unwrap();
        assert!((rec.scale * payoff(&once, &obj).unwrap() + rec.shift - raw).abs() <= 1e-9);
    }
}

#[test]
fn constant_rewards_are_degenerate() {
    let mut r = rng(33);
    let mut g = random_game(&mut r, channel_layout(1), 2, 2, 0.0, 1.0);
    for w in g.rewards.iter_mut().flatten().flatten() {
        *w = 0.7;
    }
    let obj: ChoiObject = random_channels(&mut r, 1).into();
    assert!((payoff(&g, &obj).unwrap() - 0.7).abs() < 1e-12);
    assert!(matches!(
        canonicalize(&g, &opts()),
        Err(Error::DegenerateGame(_))
    ));
}

#[test]
fn canonical_form_ignores_affine_reward_changes() {
    let mut r = rng(34);
    let g = random_game(&mut r, channel_layout(2), 2, 2, 0.0, 1.0);
    let mut h = g.clone();
    for w in h.rewards.iter_mut().flatten().flatten() {
        *w = 3.5 * *w - 1.25;
    }
    let a = canonicalize(&g, &opts()).unwrap();
    let b = canonicalize(&h, &opts()).unwrap();
    for (x, y) in a
        .rewards
        .iter()
        .flatten()
        .flatten()
        .zip(b.rewards.iter().flatten().flatten())
    {
        assert!((x - y).abs() <= 1e-7, "{x} vs {y}");
    }
}

#[test]
fn no_canonical_game_beats_the_robustness_bound() {
    let mut r = rng(35);
    let f = compile_classical_channels(1, 2, &nalgebra::DMatrix::identity(2, 2)).unwrap();
    let id: ChoiObject = ChoiChannel::identity(2).into();
    let rob = robustness(&id, &f, &opts())
        .unwrap()
        .require_optimal()
        .unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = random_game(&mut r, channel_layout(1), 2, 2, 0.0, 1.0);
        let Ok(g) = canonicalize(&g, &opts()) else {
            continue;
        };
        let ratio = payoff(&g, &id).unwrap() / free_max_payoff(&g, &f, &opts()).unwrap();
        worst = worst.max(ratio);
        assert!(ratio <= 1.0 + rob.robustness + 1e-6, "ratio {ratio}");
    }
    assert!(worst > 1.0, "some game should show an advantage");
}

#[test]
fn robustness_shrinks_under_mixing_with_a_free_object() {
    let f = compile_jointly_measurable(&[2, 2], 2).unwrap();
    let sharp = standard_object("noisy_xz", &json!({"eta": 1.0})).unwrap();
    let free = standard_object("noisy_xz", &json!({"eta": 0.0})).unwrap();
    let base = robustness(&sharp, &f, &opts()).unwrap().robustness;
    let mut prev = base;
    for t in [0.05, 0.1, 0.2, 0.25] {
        let mixed = sharp.mix(&free, t).unwrap();
        let rv = robustness(&mixed, &f, &opts()).unwrap().robustness;
        assert!(rv < prev, "t = {t}: {rv} vs {prev}");
        // Convexity: R((1-t)J + tF) <= (1-t) R(J).
        assert!(
            rv <= (1.0 - t) * base + 1e-8,
            "t = {t}: {rv} vs {}",
            (1.0 - t) * base
        );
        prev = rv;
    }
}

#[test]
fn free_maximum_over_all_channels_is_one() {
    let mut r = rng(36);
    let all = compile_all(&channel_layout(2));
    for _ in 0..5 {
        let g = canonicalize(
            &random_game(&mut r, channel_layout(2), 3, 2, -1.0, 1.0),
            &opts(),
        )
        .unwrap();
        let m = free_max_payoff(&g, &all, &opts()).unwrap();
        assert!((m - 1.0).abs() <= 1e-8, "{m}");
    }
}

#[test]
fn discrimination_form_reproduces_payoff() {
    let mut r = rng(37);
    for _ in 0..10 {
        let g = random_game(&mut r, channel_layout(2), 3, 2, 0.0, 2.0);
        let ch = random_channels(&mut r, 2);
        let form = discrimination_form(&g, &ch).unwrap();
        let direct = payoff(&g, &ch.clone().into()).unwrap();
        assert!((form.payoff(&g) - direct).abs() <= 1e-10);
        let wsum: f64 = form.terms.iter().map(|t| t.weight).sum();
        assert!((wsum - 1.0).abs() <= 1e-12);
        for t in &form.terms {
            assert!(
                (t.state.trace_re() - 1.0).abs() <= 1e-12 && t.state.min_eigenvalue() >= -1e-12
            );
        }
    }
    let g = random_game(&mut r, channel_layout(1), 2, 2, -1.0, -0.5);
    assert!(matches!(
        discrimination_form(&g, &random_channels(&mut r, 1)),
        Err(Error::NegativeRewards)
    ));
}

#[test]
fn witness_games_reproduce_their_witness() {
    let mut r = rng(38);
    for n in 1..=2 {
        let layout = channel_layout(n);
        let blocks: Vec<_> = (0..n)
            .map(|_| {
                let g = gaussian_matrix(&mut r, 4, 4);
                &g * g.adjoint()
            })
            .collect();
        let w = Witness {
            layout: layout.clone(),
            blocks: blocks.clone(),
        };
        let g = game_from_witness(&w).unwrap();
        assert!(exactness_residual(&g, &blocks) <= 1e-8);
        let obj: ChoiObject = random_channels(&mut r, n).into();
        assert!((payoff(&g, &obj).unwrap() - w.value(&obj)).abs() <= 1e-8);
        for dev in &g.devices {
            let sum = dev
                .povm
                .iter()
                .fold(ComplexMatrix::zeros(&[2]).into_matrix(), |a, m| {
                    a + m.matrix()
                });
            assert!(max_diff(&sum, &nalgebra::DMatrix::identity(2, 2)) <= 1e-9);
        }
    }
}

#[test]
fn identity_doubles_its_classical_score() {
    let f = compile_classical_channels(1, 2, &nalgebra::DMatrix::identity(2, 2)).unwrap();
    let id: ChoiObject = ChoiChannel::identity(2).into();
    let v = verify_theorem1(&id, &f, 1e-5, &opts()).unwrap();
    assert!(v.report.pass, "{:?}", v.report);
    assert!((v.report.ratio - 2.0).abs() <= 1e-5);
    assert!(v.report.canonical);
    assert!(v.report.global_min.abs() <= 1e-12 && (v.report.global_max - 1.0).abs() <= 1e-12);
}

#[test]
fn sharp_pair_against_joint_measurability() {
    let f = compile_jointly_measurable(&[2, 2], 2).unwrap();
    let xz = standard_object("noisy_xz", &json!({"eta": 1.0})).unwrap();
    let v = verify_theorem1(&xz, &f, 1e-5, &opts()).unwrap();
    let expected = 3.0 - 2.0 * 2f64.sqrt();
    assert!(
        (v.report.robustness - expected).abs() <= 1e-6,
        "{}",
        v.report.robustness
    );
    assert!(v.report.equality_residual <= 1e-5 && v.report.pass);
    assert!(v.report.duality_gap <= 1e-7);
}
