mod common;

use common::oracles::{brute_tp, optimal_tp};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sedge_core::arch::{sliced_order, ArchVariant, BackboneConfig, Head, NetworkGraph};
use sedge_core::bench::{ap, match_maps, match_points, mf_ods, pr_table, thin, BenchConfig, Pixel};
use sedge_core::kernel::conv::conv2d_forward;
use sedge_core::kernel::upsample::upsample_forward;
use sedge_core::kernel::{ConvSpec, Shape, Tape, Tensor};
use sedge_core::labels::{
    seg_to_eval_boundaries, seg_to_training_edges, Background, EdgeLabelStack, LabelSpace, ProbMaps, SegMap,
};
use sedge_core::loss::{compute_beta, multilabel_loss, reweighted_softmax_loss, BetaStat};
use sedge_core::labels::LabelMap;
use sedge_core::run::{decode_prediction, encode_prediction};
use sedge_core::viz::{pixel_hsv, tp_fp_overlay, HueTable, FALSE_NEGATIVE, FALSE_POSITIVE, TRUE_NEGATIVE, TRUE_POSITIVE};

fn tensor(shape: Shape, values: &[f32]) -> Tensor {
    Tensor::from_vec(shape, values.to_vec()).unwrap()
}

fn seg_strategy(max_id: u8) -> impl Strategy<Value = SegMap> {
    (2usize..10, 2usize..10).prop_flat_map(move |(h, w)| {
        proptest::collection::vec(0..=max_id, h * w).prop_map(move |d| SegMap::from_vec(h, w, d).unwrap())
    })
}

fn stack_strategy(k: usize) -> impl Strategy<Value = EdgeLabelStack> {
    (1usize..8, 1usize..8).prop_flat_map(move |(h, w)| {
        proptest::collection::vec(0u8..=1, k * h * w)
            .prop_map(move |d| EdgeLabelStack::from_planes(k, h, w, d).unwrap())
    })
}

fn points(max: usize, side: usize) -> impl Strategy<Value = Vec<Pixel>> {
    proptest::collection::btree_set((0..side, 0..side), 0..=max).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn grouped_conv_isolation(groups in 1usize..4, per_in in 1usize..3, per_out in 1usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = groups * per_in;
        let cout = groups * per_out;
        let rand_t = |shape: Shape, rng: &mut ChaCha8Rng| {
            Tensor::from_fn(shape, |_, _, _, _| rand::Rng::random_range(rng, -1.0f32..1.0))
        };
        let x = rand_t(Shape::new(1, cin, 5, 5), &mut rng);
        let w = rand_t(Shape::new(cout, per_in, 3, 3), &mut rng);
        let spec = ConvSpec::new(1, 1, groups, 1);
        let base = conv2d_forward(&x, &w, None, spec).unwrap();
        for g in 0..groups {
            let mut y = x.clone();
            for c in (0..cin).filter(|c| c / per_in != g) {
                y.channel_mut(0, c).iter_mut().for_each(|v| *v = -*v + 0.25);
            }
            let out = conv2d_forward(&y, &w, None, spec).unwrap();
            for c in g * per_out..(g + 1) * per_out {
                prop_assert_eq!(base.channel(0, c), out.channel(0, c));
            }
        }
    }

    #[test]
    fn upsample_is_linear(
        factor in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)],
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
        xs in proptest::collection::vec(-1.0f32..1.0, 12),
        ys in proptest::collection::vec(-1.0f32..1.0, 12),
    ) {
        let shape = Shape::new(1, 1, 3, 4);
        let x = tensor(shape, &xs);
        let y = tensor(shape, &ys);
        let mix = tensor(shape, &xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect::<Vec<_>>());
        let ux = upsample_forward(&x, factor).unwrap();
        let uy = upsample_forward(&y, factor).unwrap();
        let umix = upsample_forward(&mix, factor).unwrap();
        let ax = upsample_forward(&x.map(f32::abs), factor).unwrap();
        let ay = upsample_forward(&y.map(f32::abs), factor).unwrap();
        for i in 0..umix.data().len() {
            let rhs = a * ux.data()[i] + b * uy.data()[i];
            // round-off is relative to the magnitude of the terms, not the (possibly cancelled) result
            let scale = a.abs() * ax.data()[i] + b.abs() * ay.data()[i];
            let bound = 4.0 * f32::EPSILON * scale.max(f32::MIN_POSITIVE);
            prop_assert!((umix.data()[i] - rhs).abs() <= bound, "{} vs {}", umix.data()[i], rhs);
        }
    }

    #[test]
    fn sliced_order_is_a_permutation(k in 1usize..25) {
        let order = sliced_order(k);
        let mut inverse = vec![usize::MAX; 5 * k];
        for (o, &src) in order.iter().enumerate() {
            inverse[src] = o;
        }
        prop_assert!(inverse.iter().all(|&i| i != usize::MAX));
        for (src, &o) in inverse.iter().enumerate() {
            prop_assert_eq!(order[o], src);
        }
    }

    #[test]
    fn training_edges_grow_with_radius(seg in seg_strategy(3), r in 1usize..4) {
        let space = LabelSpace::new(3, Background::Excluded);
        let small = seg_to_training_edges(&seg, r - 1, space);
        let big = seg_to_training_edges(&seg, r, space);
        for (s, b) in small.data().iter().zip(big.data()) {
            prop_assert!(*s <= *b);
        }
    }

    #[test]
    fn relabeling_permutes_channels(seg in seg_strategy(3), perm_seed in any::<u64>(), r in 0usize..3) {
        let mut perm = [1u8, 2, 3];
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let map = |id: u8| if id == 0 { 0 } else { perm[id as usize - 1] };
        let relabeled = SegMap::from_vec(seg.height(), seg.width(), seg.data().iter().map(|&i| map(i)).collect()).unwrap();
        let space = LabelSpace::new(3, Background::Excluded);
        let a = seg_to_training_edges(&seg, r, space);
        let b = seg_to_training_edges(&relabeled, r, space);
        let ea = seg_to_eval_boundaries(&seg, space);
        let eb = seg_to_eval_boundaries(&relabeled, space);
        for c in 0..3 {
            let moved = perm[c] as usize - 1;
            prop_assert_eq!(a.plane(c), b.plane(moved));
            prop_assert_eq!(ea.plane(c), eb.plane(moved));
        }
    }

    #[test]
    fn eval_boundaries_inside_training_edges(seg in seg_strategy(4), r in 1usize..3, as_class in any::<bool>()) {
        let space = if as_class { LabelSpace::new(5, Background::AsClass) } else { LabelSpace::new(4, Background::Excluded) };
        let train = seg_to_training_edges(&seg, r, space);
        let eval = seg_to_eval_boundaries(&seg, space);
        for (e, t) in eval.data().iter().zip(train.data()) {
            prop_assert!(*e <= *t);
        }
    }

    #[test]
    fn training_edges_are_two_sided(seg in seg_strategy(3), r in 1usize..3) {
        let space = LabelSpace::new(4, Background::AsClass);
        let edges = seg_to_training_edges(&seg, r, space);
        let (h, w) = (seg.height(), seg.width());
        for y in 0..h {
            for x in 0..w {
                for qy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for qx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        let (a, b) = (seg.get(y, x) as usize, seg.get(qy, qx) as usize);
                        if a != b {
                            prop_assert!(edges.get(a, y, x) && edges.get(b, y, x));
                            prop_assert!(edges.get(a, qy, qx) && edges.get(b, qy, qx));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn multilabel_loss_properties(gt in stack_strategy(3), seed in any::<u64>(), scale in 0.1f64..30.0) {
        let (h, w) = (gt.height(), gt.width());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::from_fn(Shape::new(1, 3, h, w), |_, _, _, _| scale * rand::Rng::random_range(&mut rng, -1.0..1.0));
        let beta = compute_beta(&gt).unwrap();
        let term = multilabel_loss(&a, &gt, beta).unwrap();
        prop_assert!(term.value >= 0.0);

        // per-class losses with the shared beta add up to the total
        let plane = h * w;
        let mut per_class = 0.0;
        for c in 0..3 {
            let gc = EdgeLabelStack::from_planes(1, h, w, gt.plane(c).to_vec()).unwrap();
            let ac = Tensor::from_vec(Shape::new(1, 1, h, w), a.data()[c * plane..(c + 1) * plane].to_vec()).unwrap();
            per_class += multilabel_loss(&ac, &gc, beta).unwrap().value;
        }
        prop_assert!((per_class - term.value).abs() <= 1e-9 * term.value.abs().max(1e-300));

        for (i, (&x, &y)) in a.data().iter().zip(gt.data()).enumerate() {
            let s = 1.0 / (1.0 + (-x).exp());
            let want = if y != 0 { beta.beta * (s - 1.0) } else { (1.0 - beta.beta) * s };
            prop_assert!((term.grad.data()[i] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_loss_is_nonnegative(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::from_fn(Shape::new(1, 4, h, w), |_, _, _, _| 20.0 * rand::Rng::random_range(&mut rng, -1.0..1.0));
        let labels: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_range(&mut rng, 0..4u8)).collect();
        let term = reweighted_softmax_loss(&a, &LabelMap::from_vec(h, w, labels).unwrap()).unwrap();
        prop_assert!(term.value >= 0.0);
    }

    #[test]
    fn beta_ignores_class_order(gt in stack_strategy(4), perm_seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let data: Vec<u8> = perm.iter().flat_map(|&c| gt.plane(c).to_vec()).collect();
        let permuted = EdgeLabelStack::from_planes(4, gt.height(), gt.width(), data).unwrap();
        prop_assert_eq!(compute_beta(&gt).unwrap(), compute_beta(&permuted).unwrap());
    }

    #[test]
    fn thin_is_idempotent(h in 1usize..16, w in 1usize..16, seed in any::<u64>(), density in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut rng, density) as u8).collect();
        let once = thin(&map, h, w);
        prop_assert_eq!(thin(&once, h, w), once.clone());
        for (t, m) in once.iter().zip(&map) {
            prop_assert!(*t <= *m);
        }
    }

    #[test]
    fn matching_is_symmetric_and_monotone(pred in points(20, 12), gt in points(20, 12), d in 0.5f64..4.0) {
        let a = match_points(&pred, &gt, d);
        let b = match_points(&gt, &pred, d);
        prop_assert_eq!(a.tp, b.tp);
        prop_assert_eq!(a.fp, b.fn_);
        prop_assert_eq!(a.fn_, b.fp);
        prop_assert!(match_points(&pred, &gt, 2.0 * d).tp >= a.tp);
        prop_assert!(a.tp <= pred.len().min(gt.len()));
        for &(p, g) in &a.pairs {
            let dist = ((p.0 as f64 - g.0 as f64).powi(2) + (p.1 as f64 - g.1 as f64).powi(2)).sqrt();
            prop_assert!(dist <= d);
        }
        let mut used_p: Vec<_> = a.pairs.iter().map(|x| x.0).collect();
        let mut used_g: Vec<_> = a.pairs.iter().map(|x| x.1).collect();
        used_p.sort();
        used_p.dedup();
        used_g.sort();
        used_g.dedup();
        prop_assert_eq!(used_p.len(), a.tp);
        prop_assert_eq!(used_g.len(), a.tp);
    }

    #[test]
    fn hue_of_single_class_is_exact(k in 1usize..20, class_seed in any::<usize>(), y in 1e-6f64..1.0) {
        let hues = HueTable::evenly_spaced(k);
        let class = class_seed % k;
        let mut responses = vec![0.0; k];
        responses[class] = y;
        let (h, s, v) = pixel_hsv(&responses, &hues, false);
        prop_assert_eq!(h, hues.hues[class]);
        prop_assert_eq!(s, 255.0 * y);
        prop_assert_eq!(v, 255.0);
    }

    #[test]
    fn hue_ignores_common_scaling(responses in proptest::collection::vec(0.0f64..1.0, 5), alpha in 0.01f64..=1.0) {
        prop_assume!(responses.iter().any(|&r| r > 0.0));
        let hues = HueTable::evenly_spaced(5);
        let (h1, s1, _) = pixel_hsv(&responses, &hues, false);
        let scaled: Vec<f64> = responses.iter().map(|r| r * alpha).collect();
        let (h2, s2, _) = pixel_hsv(&scaled, &hues, false);
        prop_assert!((h1 - h2).abs() <= 1e-9 * h1.abs().max(1.0));
        prop_assert!((s2 - alpha * s1).abs() <= 1e-9 * s1.max(1.0));
    }

    #[test]
    fn overlay_partitions_pixels(h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut rng, 0.5) as u8).collect();
        let gt: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut rng, 0.5) as u8).collect();
        let img = tp_fp_overlay(&pred, &gt, h, w).unwrap();
        for i in 0..h * w {
            let want = match (pred[i] != 0, gt[i] != 0) {
                (true, true) => TRUE_POSITIVE,
                (false, true) => FALSE_NEGATIVE,
                (true, false) => FALSE_POSITIVE,
                (false, false) => TRUE_NEGATIVE,
            };
            let got = img.pixel(i / w, i % w);
            prop_assert_eq!(got, want);
            let hits = [TRUE_POSITIVE, FALSE_NEGATIVE, FALSE_POSITIVE, TRUE_NEGATIVE].iter().filter(|&&c| c == got).count();
            prop_assert_eq!(hits, 1);
        }
    }

    #[test]
    fn prediction_file_round_trip(k in 1usize..5, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..k * h * w).map(|_| rand::Rng::random_range(&mut rng, 0.0f32..=1.0)).collect();
        let maps = ProbMaps::new(k, h, w, data).unwrap();
        let bytes = encode_prediction(&maps).unwrap();
        let back = decode_prediction(&bytes).unwrap();
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), maps.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!((back.k, back.height, back.width), (k, h, w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn scores_ignore_image_order(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, h, w) = (2, 10, 10);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for _ in 0..n {
            let d: Vec<f32> = (0..k * h * w).map(|_| rand::Rng::random_range(&mut rng, 0.0f32..1.0)).collect();
            preds.push(ProbMaps::new(k, h, w, d).unwrap());
            let g: Vec<u8> = (0..k * h * w).map(|_| rand::Rng::random_bool(&mut rng, 0.15) as u8).collect();
            gts.push(EdgeLabelStack::from_planes(k, h, w, g).unwrap());
        }
        let cfg = BenchConfig::default();
        let table = pr_table(&preds, &gts, &cfg).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let p2: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
        let g2: Vec<_> = order.iter().map(|&i| gts[i].clone()).collect();
        let table2 = pr_table(&p2, &g2, &cfg).unwrap();
        prop_assert_eq!(&table.counts, &table2.counts);
        prop_assert_eq!(mf_ods(&table), mf_ods(&table2));
        prop_assert_eq!(ap(&table), ap(&table2));
        for s in mf_ods(&table).per_class.iter().chain(&ap(&table).per_class) {
            prop_assert!((0.0..=1.0).contains(s));
        }
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let net = NetworkGraph::build(ArchVariant::CaseNet, Head::Sigmoid, 2, BackboneConfig::default(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_, _, _, _| rand::Rng::random_range(&mut rng, -1.0f32..1.0));
        let mut t1 = Tape::new();
        let o1 = net.forward(&mut t1, image.clone()).unwrap();
        let mut t2 = Tape::new();
        let o2 = net.forward(&mut t2, image).unwrap();
        let bits = |t: &Tape, v| t.value(v).data().iter().map(|x: &f32| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&t1, o1.fused), bits(&t2, o2.fused));
    }
}

/// The matcher reaches the assignment optimum on 200 small instances.
#[test]
fn matcher_matches_hungarian_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let side = rand::Rng::random_range(&mut rng, 4..14usize);
        let draw = |rng: &mut ChaCha8Rng| {
            let n = rand::Rng::random_range(rng, 0..=15usize);
            let mut all: Vec<Pixel> = (0..side).flat_map(|y| (0..side).map(move |x| (y, x))).collect();
            all.shuffle(rng);
            all.truncate(n);
            all
        };
        let pred = draw(&mut rng);
        let gt = draw(&mut rng);
        let d = rand::Rng::random_range(&mut rng, 0.5..3.5);
        let want = optimal_tp(&pred, &gt, d);
        assert_eq!(match_points(&pred, &gt, d).tp, want, "case {case}");
        if pred.len() <= 7 && gt.len() <= 7 {
            assert_eq!(brute_tp(&pred, &gt, d), want, "oracle disagrees with exhaustive search, case {case}");
        }
    }
}

#[test]
fn map_matching_agrees_with_point_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w) = (9, 11);
    let pred: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut rng, 0.2) as u8).collect();
    let gt: Vec<u8> = (0..h * w).map(|_| rand::Rng::random_bool(&mut rng, 0.2) as u8).collect();
    let pts = |m: &[u8]| sedge_core::bench::matching::ones(m, w);
    assert_eq!(match_maps(&pred, &gt, w, 1.5).tp, optimal_tp(&pts(&pred), &pts(&gt), 1.5));
}

#[test]
fn beta_stat_is_edge_fraction() {
    let gt = EdgeLabelStack::from_planes(2, 1, 4, vec![1, 0, 0, 0, 1, 1, 0, 0]).unwrap();
    assert_eq!(compute_beta(&gt).unwrap(), BetaStat { beta: 1.0 - 3.0 / 8.0 });
}
