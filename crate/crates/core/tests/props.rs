//! Randomized structural invariants. Where an equality is exact by
//! construction (integer contingency arithmetic, commutative float adds,
//! shared summation order) the assertion is bitwise; everything else gets an
//! explicit tolerance.

use coco_imc::data::{generate_mask, normalize, synth_two_view, Mask, MaskSpec, MultiViewDataset};
use coco_imc::evaluate::{acc, ari, nmi};
use coco_imc::losses::{joint_distribution, loss_ccl};
use coco_imc::networks::{ema_update, init_model};
use coco_imc::numerics::Matrix;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

proptest! {
    /// The mask draws exactly `round(rate * n)` incomplete rows (ties to
    /// even), never strips both views, and is a pure function of its spec.
    #[test]
    fn mask_counts_are_exact(n in 1usize..200, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let spec = MaskSpec::new(rate, seed).unwrap();
        let mask = generate_mask(n, 2, &spec).unwrap();
        let expect_incomplete = (rate * n as f64).round_ties_even() as usize;
        prop_assert_eq!(mask.count_complete(), n - expect_incomplete);
        for i in 0..n {
            prop_assert!(mask.observed(i, 0) || mask.observed(i, 1));
        }
        prop_assert_eq!(mask.complete_rows().len(), mask.count_complete());
        prop_assert_eq!(generate_mask(n, 2, &spec).unwrap(), mask);
    }

    /// Min-max scaling lands every entry in [0,1] and is a fixed point on
    /// its own output, bit for bit.
    #[test]
    fn normalize_is_bounded_and_idempotent(
        n in 1usize..40, d1 in 1usize..6, d2 in 1usize..6, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v1 = rand_mat(&mut rng, n, d1);
        let v2 = rand_mat(&mut rng, n, d2);
        if d1 > 1 {
            for i in 0..n {
                v1.set(i, 0, 3.5); // constant column: must map to 0, not NaN
            }
        }
        let ds = MultiViewDataset::new(
            vec![v1, v2],
            Mask::all_observed(n, 2),
            None,
        ).unwrap();
        let once = normalize(&ds);
        for v in 0..2 {
            for &x in once.view(v).data() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
        let twice = normalize(&once);
        for v in 0..2 {
            prop_assert_eq!(twice.view(v).data(), once.view(v).data());
        }
    }

    /// The generator balances component sizes to within one and is
    /// deterministic per seed.
    #[test]
    fn synthetic_data_is_balanced_and_deterministic(
        k in 2usize..5, extra in 0usize..50, d1 in 1usize..8, d2 in 1usize..8,
        noise in 0.0f64..2.0, seed in any::<u64>()
    ) {
        let n = k + extra;
        let ds = synth_two_view(n, k, d1, d2, noise, seed).unwrap();
        let labels = ds.labels().unwrap();
        let mut counts = vec![0usize; k];
        for &l in labels {
            counts[l] += 1;
        }
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert_eq!(ds.view(0).shape(), (n, d1));
        prop_assert_eq!(ds.view(1).shape(), (n, d2));

        let again = synth_two_view(n, k, d1, d2, noise, seed).unwrap();
        prop_assert_eq!(again.view(0).data(), ds.view(0).data());
        prop_assert_eq!(again.view(1).data(), ds.view(1).data());
    }

    /// After projecting both vectors to the unit sphere, squared distance
    /// and cosine describe the same geometry: |a-b|^2 = 2 - 2 cos(a,b).
    #[test]
    fn unit_sphere_distance_matches_cosine(
        a in prop::collection::vec(-10.0f64..10.0, 2..16),
        b_raw in prop::collection::vec(-10.0f64..10.0, 2..16),
    ) {
        let d = a.len().min(b_raw.len());
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (na, nb) = (norm(&a[..d]), norm(&b_raw[..d]));
        prop_assume!(na > 1e-6 && nb > 1e-6);
        let ah: Vec<f64> = a[..d].iter().map(|x| x / na).collect();
        let bh: Vec<f64> = b_raw[..d].iter().map(|x| x / nb).collect();
        let sq: f64 = ah.iter().zip(&bh).map(|(x, y)| (x - y) * (x - y)).sum();
        let cos: f64 = ah.iter().zip(&bh).map(|(x, y)| x * y).sum();
        prop_assert!((sq - (2.0 - 2.0 * cos)).abs() < 1e-9);
    }

    /// The joint cluster distribution ignores head order, is symmetric, is a
    /// probability table, and at eta = 0 the objective is minus a mutual
    /// information, so it lies in [-ln k, 0].
    #[test]
    fn joint_distribution_contracts(n in 2usize..40, k in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = rand_mat(&mut rng, n, k).softmax_rows();
        let p2 = rand_mat(&mut rng, n, k).softmax_rows();
        let j = joint_distribution(&p1, &p2).unwrap();
        prop_assert_eq!(&joint_distribution(&p2, &p1).unwrap(), &j);
        let mut total = 0.0;
        for i in 0..k {
            for jj in 0..k {
                prop_assert!(j.get(i, jj) >= 0.0);
                prop_assert_eq!(j.get(i, jj), j.get(jj, i));
                total += j.get(i, jj);
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
        let v = loss_ccl(&j, 0.0).unwrap();
        prop_assert!(v <= 1e-9 && v >= -(k as f64).ln() - 1e-9);
    }

    /// All three scores are invariant to relabeling clusters, to swapping
    /// the two sides, and to reordering samples; the integer-based
    /// contingency arithmetic makes every one of these exact.
    #[test]
    fn metric_invariances_are_exact(
        n in 1usize..60, kp in 1usize..6, kt in 1usize..6, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let base = (
            acc(&pred, &truth).unwrap(),
            nmi(&pred, &truth).unwrap(),
            ari(&pred, &truth).unwrap(),
        );

        let mut relabel: Vec<usize> = (0..kp).collect();
        relabel.shuffle(&mut rng);
        let renamed: Vec<usize> = pred.iter().map(|&p| relabel[p]).collect();
        prop_assert_eq!(acc(&renamed, &truth).unwrap(), base.0);
        prop_assert_eq!(nmi(&renamed, &truth).unwrap(), base.1);
        prop_assert_eq!(ari(&renamed, &truth).unwrap(), base.2);

        prop_assert_eq!(acc(&truth, &pred).unwrap(), base.0);
        prop_assert_eq!(nmi(&truth, &pred).unwrap(), base.1);
        prop_assert_eq!(ari(&truth, &pred).unwrap(), base.2);

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let pred_o: Vec<usize> = order.iter().map(|&i| pred[i]).collect();
        let truth_o: Vec<usize> = order.iter().map(|&i| truth[i]).collect();
        prop_assert_eq!(acc(&pred_o, &truth_o).unwrap(), base.0);
        prop_assert_eq!(nmi(&pred_o, &truth_o).unwrap(), base.1);
        prop_assert_eq!(ari(&pred_o, &truth_o).unwrap(), base.2);
    }

    /// The data-parallel product is bit-identical to the sequential kernel,
    /// and transposition commutes with multiplication exactly (same
    /// accumulation order, commuted factors).
    #[test]
    fn matmul_kernels_agree(
        r in 1usize..20, k in 1usize..20, c in 1usize..20, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_mat(&mut rng, r, k);
        let b = rand_mat(&mut rng, k, c);
        let seq = a.matmul_seq(&b).unwrap();
        prop_assert_eq!(&a.matmul_par(&b).unwrap(), &seq);
        prop_assert_eq!(&a.matmul(&b).unwrap(), &seq);
        prop_assert_eq!(
            b.transpose().matmul(&a.transpose()).unwrap(),
            seq.transpose()
        );
    }

    /// One trailing update moves every target entry to the weighted average
    /// of where it was and its online counterpart; the result never leaves
    /// the interval the two endpoints span.
    #[test]
    fn ema_step_stays_between_endpoints(m in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bundle = init_model(&[5, 4], &Default::default(), 2, seed).unwrap();
        for v in &mut bundle.views {
            for mlp in [&mut v.dual.target.encoder, &mut v.dual.target.projector] {
                for p in mlp.params_mut() {
                    for e in p.data_mut() {
                        *e += rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
        }
        let before: Vec<Matrix> = bundle.target_params().into_iter().cloned().collect();
        let online: Vec<Matrix> = {
            let mut out = Vec::new();
            for v in &bundle.views {
                out.extend(v.encoder.params().into_iter().cloned());
                out.extend(v.dual.online.projector.params().into_iter().cloned());
            }
            out
        };
        ema_update(&mut bundle, m).unwrap();
        for ((after, b0), th) in bundle.target_params().iter().zip(&before).zip(&online) {
            for ((a, b), t) in after.data().iter().zip(b0.data()).zip(th.data()) {
                let (lo, hi) = (b.min(*t), b.max(*t));
                prop_assert!((lo - 1e-12..=hi + 1e-12).contains(a));
            }
        }
    }
}
