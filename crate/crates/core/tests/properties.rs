use proptest::prelude::*;

use privmap::census::{self, BinningSpec};
use privmap::model::{expected_distortion, AdversaryPrior};
use privmap::objective::{
    cost_posterior_limited, dc_split, dirichlet_lower_bound, evaluate_leakage, leakage_gap, ratio_bounds,
};
use privmap::priors::{gen_biased_prior, sample_prior, substream, PerturbSpec};
use privmap::prob::{entropy, joint_entropy, kl, mutual_information, push_joint};
use privmap::solver::{lmo, random_init, FEAS_TOL};
use privmap::{Channel, DirichletPrior, Dist, JointDist, Matrix, PrivacyModel};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

fn joint_strategy(nx: usize, ny: usize) -> impl Strategy<Value = JointDist> {
    weights(nx * ny).prop_map(move |w| JointDist::normalized(Matrix::from_vec(nx, ny, w)).unwrap())
}

fn channel_strategy(ny: usize, nz: usize) -> impl Strategy<Value = Channel> {
    weights(ny * nz).prop_map(move |w| {
        let m = Matrix::from_vec(ny, nz, w);
        let sums = m.row_sums();
        let rows: Vec<Vec<f64>> = (0..ny).map(|y| m.row(y).iter().map(|v| v / sums[y]).collect()).collect();
        Channel::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_nonnegative_and_zero_on_self(p in weights(5), q in weights(5)) {
        let p = Dist::normalized(p).unwrap();
        let q = Dist::normalized(q).unwrap();
        prop_assert!(kl(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn mutual_information_identity(j in joint_strategy(3, 4)) {
        let hx = entropy(&j.row_dist());
        let hy = entropy(&j.col_dist());
        let i = mutual_information(&j);
        prop_assert!(i >= -1e-12);
        prop_assert!((i - (hx + hy - joint_entropy(&j))).abs() < 1e-12);
        prop_assert!(i <= hx.min(hy) + 1e-12);
    }

    #[test]
    fn push_joint_keeps_x_marginal(j in joint_strategy(2, 3), m in channel_strategy(3, 4)) {
        let pz = push_joint(&j, &m).unwrap();
        for (a, b) in pz.row_marginal().iter().zip(j.row_marginal()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Processing cannot create information.
        prop_assert!(mutual_information(&pz) <= mutual_information(&j) + 1e-12);
    }

    #[test]
    fn omniscient_leakage_is_mutual_information(j in joint_strategy(2, 3), m in channel_strategy(3, 3)) {
        let model = PrivacyModel::square_hamming(j.clone(), 1.0).unwrap();
        let prior = AdversaryPrior::omniscient(&model);
        let leak = evaluate_leakage(&model, &prior, &m).unwrap();
        let mi = mutual_information(&push_joint(&j, &m).unwrap());
        prop_assert!((leak - mi).abs() < 1e-12);
        prop_assert!(leakage_gap(&model, &prior, &m).unwrap().abs() < 1e-12);
        let obj = dc_split(&model, &prior).unwrap();
        prop_assert!((obj.value(&m) - leak).abs() < 1e-12);
    }

    #[test]
    fn biased_adversary_pays_at_least_the_true_conditional_entropy(
        j in joint_strategy(2, 3), q in joint_strategy(2, 3), m in channel_strategy(3, 3)
    ) {
        let model = PrivacyModel::square_hamming(j.clone(), 1.0).unwrap();
        let prior = AdversaryPrior::new(&model, q).unwrap();
        let cost = cost_posterior_limited(&model, &prior, &m).unwrap();
        let pz = push_joint(&j, &m).unwrap();
        let h_x_given_z = entropy(&pz.row_dist()) - mutual_information(&pz);
        prop_assert!(cost >= h_x_given_z - 1e-12);
    }

    #[test]
    fn ratio_sandwich(u in weights(4), v in weights(4), w in weights(4)) {
        let b = ratio_bounds(&u, &v, &w).unwrap();
        prop_assert!(b.r_lower <= b.ratio * (1.0 + 1e-12));
        prop_assert!(b.ratio <= b.r_upper * (1.0 + 1e-12));
    }

    #[test]
    fn lmo_is_feasible_and_beats_random_points(
        j in joint_strategy(2, 3), cost in prop::collection::vec(-1.0f64..1.0, 9),
        delta in 0.0f64..1.0, seed in 0u64..1000
    ) {
        let model = PrivacyModel::square_hamming(j, delta).unwrap();
        let cost = Matrix::from_vec(3, 3, cost);
        let s = lmo(&cost, &model, delta);
        prop_assert!(s.row_sum_error() <= FEAS_TOL);
        prop_assert!(expected_distortion(&model, &s) <= delta + FEAS_TOL);
        let best = cost.dot(s.matrix());
        for r in 0..8 {
            let m = random_init(&model, delta, &mut substream(seed, r));
            prop_assert!(best <= cost.dot(m.matrix()) + 1e-12);
        }
    }

    #[test]
    fn biased_priors_stay_normalized(j in joint_strategy(2, 4), gamma in 0.01f64..0.99, seed in 0u64..1000) {
        let q = gen_biased_prior(&j, PerturbSpec::new(gamma, seed).unwrap());
        prop_assert!((q.matrix().sum() - 1.0).abs() < 1e-12);
        prop_assert!(q.matrix().as_slice().iter().all(|&v| v > 0.0));
        prop_assert_eq!(q, gen_biased_prior(&j, PerturbSpec::new(gamma, seed).unwrap()));
    }

    #[test]
    fn dirichlet_samples_lie_on_the_simplex(alpha in prop::collection::vec(0.05f64..5.0, 6), seed in 0u64..1000) {
        let d = DirichletPrior::new(Matrix::from_vec(2, 3, alpha)).unwrap();
        let s = sample_prior(&d, seed);
        prop_assert!((s.matrix().sum() - 1.0).abs() < 1e-12);
        prop_assert!((d.mean().sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lower_bound_tightens_as_concentration_grows() {
    let j = JointDist::new(Matrix::from_rows(&[[0.3, 0.2], [0.1, 0.4]]).unwrap()).unwrap();
    let model = PrivacyModel::square_hamming(j, 0.3).unwrap();
    let m = random_init(&model, 0.3, &mut substream(1, 0));
    let base = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
    let point = AdversaryPrior::new(&model, DirichletPrior::new(base.clone()).unwrap().mean_joint()).unwrap();
    let target = cost_posterior_limited(&model, &point, &m).unwrap();
    let mut last = f64::INFINITY;
    for scale in [1.0, 10.0, 100.0, 1e4] {
        let d = DirichletPrior::new(base.map(|a| a * scale)).unwrap();
        let gap = (dirichlet_lower_bound(&model, &d, &m).unwrap() - target).abs();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-3);
}

#[test]
fn census_fixture_tally() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/adult_small.data");
    let cm = census::ingest(&[path], &BinningSpec::default()).unwrap();
    assert_eq!(cm.raw_records, 74);
    assert_eq!(cm.dropped_missing, 2);
    assert_eq!(cm.retained(), 72);
    // Cell (x, y) holds 1 + (18x + y) mod 3 records by construction.
    let expected: Vec<Vec<u64>> = (0..2).map(|x| (0..18).map(|y| 1 + ((18 * x + y) % 3) as u64).collect()).collect();
    assert_eq!(cm.counts, expected);
    assert_eq!(cm.model.nz(), 47);
    // (<=50K, young|male|graduate) holds 3 of the 72 retained records.
    assert!((cm.model.p_xy().matrix()[(0, 2)] - 3.0 / 72.0).abs() < 1e-15);
}
