use gmmret::divergence::{gmm_kl_approx, gmm_kl_monte_carlo};
use gmmret::eval::{corpus_bleu, diversity, mean_reciprocal_rank, recall_at_k, reciprocal_rank};
use gmmret::paramgen::{generate_gmm, init_weights};
use gmmret::rng::{seeded_rng, standard_normal};
use gmmret::training::{npair_from_kl, npair_loss, Batch};
use gmmret::{ComponentMode, GmmEmbedding, TokenMatrix};
use proptest::prelude::*;

fn random_weights(mode: ComponentMode, dim: usize, seed: u64) -> gmmret::ParamGenWeights {
    let mut w = init_weights(mode, dim, true, seed).unwrap();
    let mut rng = seeded_rng(seed ^ 0xabc);
    for v in w.map_mean.weight.iter_mut().chain(w.map_mean.bias.iter_mut()) {
        *v += 0.3 * standard_normal(&mut rng);
    }
    for v in w.map_logvar.weight.iter_mut().chain(w.map_logvar.bias.iter_mut()) {
        *v = 0.2 * standard_normal(&mut rng);
    }
    w
}

fn matrix(rows: &[Vec<f64>]) -> TokenMatrix {
    TokenMatrix::from_rows(rows).unwrap()
}

fn token_rows(max_rows: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), 1..=max_rows)
}

fn close(a: &GmmEmbedding, b: &GmmEmbedding, tol: f64) -> bool {
    a.components() == b.components()
        && a.means().iter().zip(b.means()).all(|(x, y)| (x - y).abs() <= tol)
        && a.log_vars().iter().zip(b.log_vars()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffling_tokens_leaves_the_mixture_unchanged(rows in token_rows(6, 4), seed in 0u64..1000, rot in 0usize..6) {
        let w = random_weights(ComponentMode::Fixed(3), 4, seed);
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        let a = generate_gmm(&matrix(&rows), &w).unwrap();
        let b = generate_gmm(&matrix(&shuffled), &w).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
    }

    /// With an identity mean head each mean is a convex combination of token
    /// rows, so it lies inside their bounding box.
    #[test]
    fn means_stay_in_the_token_hull(rows in token_rows(5, 3), seed in 0u64..1000) {
        let w = init_weights(ComponentMode::Fixed(4), 3, true, seed).unwrap();
        let g = generate_gmm(&matrix(&rows), &w).unwrap();
        for k in 0..g.components() {
            for (j, &m) in g.mean(k).iter().enumerate() {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn loss_is_bounded(rows in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 4), 4)) {
        let mut kl = rows.clone();
        let loss = npair_from_kl(&kl);
        prop_assert!(loss.per_pair.iter().all(|&l| l >= 0.0));
        // Making the true pair the best in its row caps the loss at log B.
        for (i, row) in kl.iter_mut().enumerate() {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            row[i] = min;
        }
        let loss = npair_from_kl(&kl);
        prop_assert!(loss.per_pair.iter().all(|&l| l <= (4f64).ln() + 1e-12));
    }

    #[test]
    fn recall_grows_with_k(ranked in prop::collection::vec(0u8..20, 0..15), truth in 0u8..20) {
        let ranked: Vec<String> = ranked.iter().map(|v| v.to_string()).collect();
        let truth = truth.to_string();
        let hits: Vec<bool> = (0..=16).map(|k| recall_at_k(&ranked, &truth, k)).collect();
        prop_assert!(hits.windows(2).all(|w| w[0] <= w[1]));
        let rr = reciprocal_rank(&ranked, &truth);
        prop_assert!((0.0..=1.0).contains(&rr));
    }

    #[test]
    fn metrics_stay_in_range(
        pairs in prop::collection::vec((prop::collection::vec(0u8..6, 1..8), prop::collection::vec(0u8..6, 1..8)), 1..6),
        vecs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6),
    ) {
        let pairs: Vec<(Vec<String>, Vec<String>)> = pairs
            .into_iter()
            .map(|(c, r)| (c.iter().map(u8::to_string).collect(), r.iter().map(u8::to_string).collect()))
            .collect();
        for n in [1, 2, 4] {
            let b = corpus_bleu(&pairs, n);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b), "bleu {b}");
        }
        prop_assert!(diversity(&vecs).unwrap() >= 0.0);
    }
}

#[test]
fn mixture_kl_is_invariant_to_component_order() {
    let mut rng = seeded_rng(5);
    let mut draw = |k: usize| {
        let means: Vec<f64> = (0..k * 3).map(|_| standard_normal(&mut rng)).collect();
        let lv: Vec<f64> = (0..k * 3).map(|_| 0.5 * standard_normal(&mut rng)).collect();
        (means, lv)
    };
    let (rm, rl) = draw(3);
    let (cm, cl) = draw(2);
    let resp = GmmEmbedding::new(3, 3, rm.clone(), rl.clone()).unwrap();
    let ctx = GmmEmbedding::new(2, 3, cm.clone(), cl.clone()).unwrap();
    let rev = |v: &[f64]| v.chunks(3).rev().flatten().copied().collect::<Vec<_>>();
    let resp2 = GmmEmbedding::new(3, 3, rev(&rm), rev(&rl)).unwrap();
    let ctx2 = GmmEmbedding::new(2, 3, rev(&cm), rev(&cl)).unwrap();
    let a = gmm_kl_approx(&resp, &ctx).unwrap().total;
    let b = gmm_kl_approx(&resp2, &ctx2).unwrap().total;
    assert!((a - b).abs() < 1e-12);
    let mc_a = gmm_kl_monte_carlo(&resp, &ctx, 20_000, 3).unwrap();
    let mc_b = gmm_kl_monte_carlo(&resp2, &ctx2, 20_000, 3).unwrap();
    assert!((mc_a.estimate - mc_b.estimate).abs() < 4.0 * (mc_a.std_error + mc_b.std_error));
}

#[test]
fn mrr_of_perfect_rankings_is_one() {
    let rankings: Vec<(Vec<&str>, String)> = vec![(vec!["a", "b"], "a".into()), (vec!["c"], "c".into())];
    assert_eq!(mean_reciprocal_rank(&rankings), 1.0);
}

#[test]
fn loss_is_non_negative_on_generated_batches() {
    let dim = 4;
    let ctx_w = random_weights(ComponentMode::Fixed(2), dim, 1);
    let resp_w = random_weights(ComponentMode::Fixed(3), dim, 2);
    let mut rng = seeded_rng(9);
    let mut tokens = |m: usize| {
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| standard_normal(&mut rng)).collect()).collect();
        matrix(&rows)
    };
    let owned: Vec<(TokenMatrix, TokenMatrix)> = (0..5).map(|i| (tokens(2 + i % 3), tokens(1 + i % 2))).collect();
    let batch = Batch::from_owned(&owned).unwrap();
    let loss = npair_loss(&batch, &ctx_w, &resp_w).unwrap();
    assert!(loss.loss >= 0.0 && loss.per_pair.len() == 5);
    let mean = loss.per_pair.iter().sum::<f64>() / 5.0;
    assert!((mean - loss.loss).abs() < 1e-12);
}
