//! Gradient-check cases shared by the gradient tests and the acceptance run.

use rand::Rng;
use sedge_core::arch::{shared_concat, sliced_concat, ArchVariant, BackboneConfig, Head, NetworkGraph};
use sedge_core::kernel::{ConvSpec, ParamStore, ResidualBlock, Shape, Tape, Tensor};
use sedge_core::labels::{
    seg_to_multiclass_labels, seg_to_training_edges, Background, EdgeLabelStack, LabelMap, LabelSpace, SegMap,
};
use sedge_core::loss::{binary_edge_loss, compute_beta, multilabel_loss, reweighted_softmax_loss, LossTerm};
use sedge_core::pnm::RgbImage;
use sedge_core::run::{image_tensor, variant_loss, Targets};

use super::{check, normal_tensor, rng, weighted_sum, Eval, Report};

pub type Case = (String, Report);

pub fn conv() -> Vec<Case> {
    let cases = [
        // (cin, cout, k, stride, dilation, groups, pad, bias)
        (4, 3, 3, 1, 1, 1, 1, true),
        (4, 6, 3, 2, 1, 1, 1, true),
        (4, 2, 3, 1, 2, 1, 2, false),
        (4, 6, 1, 1, 1, 2, 0, true),
        (6, 3, 1, 1, 1, 3, 0, false),
        (2, 4, 3, 2, 1, 2, 0, true),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(n, &(cin, cout, k, stride, dilation, groups, pad, bias))| {
            let mut r = rng(n as u64);
            let mut store = ParamStore::new();
            let w = store.add("w", normal_tensor(Shape::new(cout, cin / groups, k, k), &mut r, 0.5));
            let b = bias.then(|| store.add("b", normal_tensor(Shape::new(1, cout, 1, 1), &mut r, 0.5)));
            let spec = ConvSpec { stride, dilation, groups, pad };
            let x = normal_tensor(Shape::new(1, cin, 6, 6), &mut r, 1.0);
            let f = weighted_sum(
                move |t: &mut Tape<f64>, s: &ParamStore<f64>, v| t.conv2d(s, v[0], w, b, spec).unwrap(),
                n as u64,
            );
            (format!("conv case {n}"), check(&mut store, &[x], f, 150, n as u64))
        })
        .collect()
}

pub fn residual() -> Vec<Case> {
    [(4, 4, 1, 1), (4, 6, 2, 1), (3, 3, 1, 2)]
        .iter()
        .enumerate()
        .map(|(n, &(cin, cout, stride, dilation))| {
            let mut store = ParamStore::new();
            let block = ResidualBlock::new(&mut store, 7 + n as u64, "blk", cin, cout, stride, dilation);
            let x = normal_tensor(Shape::new(1, cin, 6, 6), &mut rng(30 + n as u64), 1.0);
            let f = weighted_sum(
                move |t: &mut Tape<f64>, s: &ParamStore<f64>, v| block.forward(t, s, v[0]).unwrap(),
                n as u64,
            );
            (format!("residual case {n}"), check(&mut store, &[x], f, 150, n as u64))
        })
        .collect()
}

pub fn pointwise() -> Vec<Case> {
    let mut store = ParamStore::new();
    let a = normal_tensor(Shape::new(1, 2, 5, 5), &mut rng(1), 1.0);
    let b = normal_tensor(Shape::new(1, 2, 5, 5), &mut rng(2), 1.0);
    let add = weighted_sum(|t: &mut Tape<f64>, _: &ParamStore<f64>, v| t.add(v[0], v[1]).unwrap(), 1);
    let relu = weighted_sum(|t: &mut Tape<f64>, _: &ParamStore<f64>, v| t.relu(v[0]).unwrap(), 2);
    let sigmoid = weighted_sum(|t: &mut Tape<f64>, _: &ParamStore<f64>, v| t.sigmoid(v[0]).unwrap(), 3);
    vec![
        ("add".into(), check(&mut store, &[a.clone(), b], add, 100, 1)),
        ("relu".into(), check(&mut store, std::slice::from_ref(&a), relu, 50, 2)),
        ("sigmoid".into(), check(&mut store, &[a], sigmoid, 50, 3)),
    ]
}

/// Analytic slope of the sigmoid at 0 and its finite-difference check.
pub fn sigmoid_at_zero() -> (f64, Report) {
    let mut store = ParamStore::new();
    let x = Tensor::zeros(Shape::new(1, 1, 1, 1));
    let f = |_: &ParamStore<f64>, xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let v = tape.input(xs[0].clone()).unwrap();
        let y = tape.sigmoid(v).unwrap();
        let loss = tape.value(y).data()[0];
        Eval {
            tape,
            inputs: vec![v],
            seeds: vec![(y, Tensor::full(Shape::new(1, 1, 1, 1), 1.0))],
            loss,
        }
    };
    let e = f(&store, std::slice::from_ref(&x));
    let g = e.tape.backward(&mut store, e.seeds).unwrap();
    let slope = g.get(e.inputs[0]).unwrap().data()[0];
    (slope, check(&mut store, &[x], f, 1, 0))
}

pub fn upsample() -> Vec<Case> {
    let mut store = ParamStore::new();
    [1, 2, 4, 8]
        .into_iter()
        .map(|factor| {
            let x = normal_tensor(Shape::new(1, 2, 3, 4), &mut rng(factor as u64), 1.0);
            let f = weighted_sum(
                move |t: &mut Tape<f64>, _: &ParamStore<f64>, v| t.upsample_bilinear(v[0], factor).unwrap(),
                factor as u64,
            );
            (format!("upsample x{factor}"), check(&mut store, &[x], f, 24, 0))
        })
        .collect()
}

pub fn concat() -> Vec<Case> {
    let mut store = ParamStore::new();
    let k = 3;
    let sides: Vec<_> = (0..5).map(|i| normal_tensor(Shape::new(1, k, 4, 4), &mut rng(i), 1.0)).collect();
    let sliced = weighted_sum(move |t: &mut Tape<f64>, _: &ParamStore<f64>, v| sliced_concat(t, v, k).unwrap(), 4);
    let mut parts: Vec<_> = (0..3).map(|i| normal_tensor(Shape::new(1, 1, 4, 4), &mut rng(10 + i), 1.0)).collect();
    parts.push(normal_tensor(Shape::new(1, k, 4, 4), &mut rng(20), 1.0));
    let shared = weighted_sum(
        move |t: &mut Tape<f64>, _: &ParamStore<f64>, v| shared_concat(t, &v[..3], v[3]).unwrap(),
        5,
    );
    vec![
        ("sliced concatenation".into(), check(&mut store, &sides, sliced, 240, 0)),
        ("shared concatenation".into(), check(&mut store, &parts, shared, 96, 0)),
    ]
}

fn random_stack(k: usize, h: usize, w: usize, seed: u64) -> EdgeLabelStack {
    let mut r = rng(seed);
    let data = (0..k * h * w).map(|_| r.random_bool(0.3) as u8).collect();
    EdgeLabelStack::from_planes(k, h, w, data).unwrap()
}

/// Loss of an activation tensor held as the graph input.
fn loss_eval(loss: impl Fn(&Tensor<f64>) -> LossTerm<f64>) -> impl Fn(&ParamStore<f64>, &[Tensor<f64>]) -> Eval {
    move |_, xs| {
        let mut tape = Tape::new();
        let v = tape.input(xs[0].clone()).unwrap();
        let term = loss(&xs[0]);
        Eval {
            tape,
            inputs: vec![v],
            seeds: vec![(v, term.grad)],
            loss: term.value,
        }
    }
}

pub fn multilabel() -> Case {
    let gt = random_stack(2, 4, 4, 3);
    let beta = compute_beta(&gt).unwrap();
    let a = normal_tensor(Shape::new(1, 2, 4, 4), &mut rng(4), 2.0);
    let f = loss_eval(move |x| multilabel_loss(x, &gt, beta).unwrap());
    ("multi-label loss".into(), check(&mut ParamStore::new(), &[a], f, 32, 0))
}

pub fn binary_edge() -> Case {
    let gt = random_stack(3, 4, 4, 5).collapse_any();
    let beta = compute_beta(&gt).unwrap();
    let a = normal_tensor(Shape::new(1, 1, 4, 4), &mut rng(6), 2.0);
    let f = loss_eval(move |x| binary_edge_loss(x, &gt, beta).unwrap());
    ("binary edge loss".into(), check(&mut ParamStore::new(), &[a], f, 16, 0))
}

pub fn softmax() -> Case {
    let mut r = rng(7);
    let labels = LabelMap::from_vec(3, 3, (0..9).map(|_| r.random_range(0..3u8)).collect()).unwrap();
    let a = normal_tensor(Shape::new(1, 3, 3, 3), &mut rng(8), 2.0);
    let f = loss_eval(move |x| reweighted_softmax_loss(x, &labels).unwrap());
    ("softmax loss".into(), check(&mut ParamStore::new(), &[a], f, 27, 0))
}

/// Every op-level case.
pub fn ops() -> Vec<Case> {
    let mut all = conv();
    all.extend(residual());
    all.extend(pointwise());
    all.push(("sigmoid at 0".into(), sigmoid_at_zero().1));
    all.extend(upsample());
    all.extend(concat());
    all.push(multilabel());
    all.push(binary_edge());
    all.push(softmax());
    all
}

fn micro_scene(h: usize, w: usize) -> (RgbImage, SegMap) {
    let mut seg = SegMap::filled(h, w, 0);
    let mut img = RgbImage::new(w, h);
    let mut r = rng(99);
    for y in 0..h {
        for x in 0..w {
            let id = if (x as i64 - 5).pow(2) + (y as i64 - 6).pow(2) < 16 {
                1
            } else if x > 9 && y > 3 {
                2
            } else {
                0
            };
            seg.set(y, x, id);
            let base = [90u8, 160, 220][id as usize];
            img.put(y, x, [base, 255 - base, r.random_range(0..255)]);
        }
    }
    (img, seg)
}

/// Full training loss of a K=2 network on a 16x16 scene, w.r.t. its parameters.
pub fn network(variant: ArchVariant, head: Head) -> Case {
    let k = 2;
    let (img, seg) = micro_scene(16, 16);
    let space = LabelSpace::new(k, Background::Excluded);
    let targets = Targets {
        edges: seg_to_training_edges(&seg, 2, space),
        multiclass: Some(seg_to_multiclass_labels(&seg, 2, space)),
    };
    let net = NetworkGraph::<f64>::build(variant, head, k, BackboneConfig::default(), 11).unwrap();
    let image = image_tensor::<f64>(&img);
    let mut store = net.params.clone();
    let f = |s: &ParamStore<f64>, _: &[Tensor<f64>]| {
        let mut n = net.clone();
        n.params = s.clone();
        let mut tape = Tape::new();
        let out = n.forward(&mut tape, image.clone()).unwrap();
        let (value, seeds) = variant_loss(&n, &tape, &out, &targets).unwrap();
        Eval {
            tape,
            inputs: vec![],
            seeds,
            loss: value.total,
        }
    };
    let report = check(&mut store, &[], f, 120, variant.id() as u64);
    (format!("{} network ({head:?})", variant.name()), report)
}
