//! The per-operator finite-difference cases, callable one seed at a
//! time so both the oracle tests and the acceptance gate run the exact
//! same checks.

use super::naive;
use super::{
    assert_grads_close, assert_values_close, central_diff, nudge_away, promote, rng_for, sample,
    FD_STEP,
};
use nitcg::autodiff::{Graph, NodeId, Tensor};
use rand::Rng;

/// Name plus seeded runner for one operator case.
pub type OpCase = (&'static str, fn(u64));

/// Every operator case, by name. Acceptance iterates this list.
pub const ALL: &[OpCase] = &[
    ("add/sub/mul", add_sub_mul),
    ("affine", affine),
    ("sigmoid/silu", sigmoid_silu),
    ("log", log),
    ("abs", abs_off_kink),
    ("clamp", clamp_off_edges),
    ("mean/sum", mean_sum),
    ("l1_distance", l1_distance_off_ties),
    ("reshape", reshape),
    ("concat_rows", concat_rows),
    ("zero_pad2d", zero_pad2d),
    ("crop2d", crop2d),
    ("pixel_shuffle", pixel_shuffle),
    ("glu", glu_all_axes),
    ("instance_norm", instance_norm),
    ("conv2d", conv2d_geometries),
];

fn rt(rng: &mut impl Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, sample(rng, n, lo, hi)).unwrap()
}

/// Run one op through the tape and its twin: forward values must agree,
/// and the backward gradients of a random-weighted scalarization must
/// match central differences for every input element.
fn check(
    name: &str,
    seed: u64,
    inputs: &[Tensor],
    op: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId,
    twin: &dyn Fn(&[Vec<f64>]) -> Vec<f64>,
) {
    let ctx = format!("{name} (seed {seed})");
    let xs64: Vec<Vec<f64>> = inputs.iter().map(|t| promote(t.data())).collect();
    let out64 = twin(&xs64);

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = op(&mut g, &ids);
    let out_shape = g.value(out).shape().to_vec();
    assert_eq!(g.value(out).numel(), out64.len(), "{ctx}: twin output size");
    assert_values_close(&ctx, g.value(out).data(), &out64, 1e-5);

    let mut wrng = rng_for(seed ^ 0x5EED_C0DE);
    let w = sample(&mut wrng, out64.len(), -1.0, 1.0);
    let w64 = promote(&w);
    let wn = g.constant(Tensor::new(out_shape, w).unwrap());
    let prod = g.mul(out, wn).unwrap();
    let loss = g.sum(prod);
    g.backward(loss).unwrap();

    let sizes: Vec<usize> = xs64.iter().map(Vec::len).collect();
    let flat: Vec<f64> = xs64.concat();
    let f = |z: &[f64]| -> f64 {
        let mut parts = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for &s in &sizes {
            parts.push(z[off..off + s].to_vec());
            off += s;
        }
        twin(&parts).iter().zip(&w64).map(|(y, wk)| y * wk).sum()
    };
    let numeric = central_diff(&f, &flat, FD_STEP);

    let mut off = 0;
    for (k, id) in ids.iter().enumerate() {
        let analytic = g.grad(*id).expect("leaf gradient present");
        assert_grads_close(&format!("{ctx} input {k}"), analytic, &numeric[off..off + sizes[k]]);
        off += sizes[k];
    }
}

pub fn add_sub_mul(seed: u64) {
    let mut rng = rng_for(seed);
    let a = rt(&mut rng, vec![3, 4], -2.0, 2.0);
    let b = rt(&mut rng, vec![3, 4], -2.0, 2.0);
    let pair = [a, b];
    check("add", seed, &pair, &|g, n| g.add(n[0], n[1]).unwrap(), &|xs| {
        naive::zip(&xs[0], &xs[1], |x, y| x + y)
    });
    check("sub", seed, &pair, &|g, n| g.sub(n[0], n[1]).unwrap(), &|xs| {
        naive::zip(&xs[0], &xs[1], |x, y| x - y)
    });
    check("mul", seed, &pair, &|g, n| g.mul(n[0], n[1]).unwrap(), &|xs| {
        naive::zip(&xs[0], &xs[1], |x, y| x * y)
    });
}

pub fn affine(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![4, 5], -2.0, 2.0);
    check("affine", seed, &[x], &|g, n| g.affine(n[0], 1.7, -0.3), &|xs| {
        naive::map(&xs[0], |v| 1.7 * v - 0.3)
    });
}

pub fn sigmoid_silu(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![3, 7], -3.0, 3.0);
    check("sigmoid", seed, std::slice::from_ref(&x), &|g, n| g.sigmoid(n[0]), &|xs| {
        naive::map(&xs[0], naive::sigmoid)
    });
    check("silu", seed, &[x], &|g, n| g.silu(n[0]), &|xs| naive::silu(&xs[0]));
}

pub fn log(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![3, 7], 0.2, 3.0);
    check("log", seed, &[x], &|g, n| g.log(n[0]), &|xs| naive::map(&xs[0], f64::ln));
}

pub fn abs_off_kink(seed: u64) {
    let mut rng = rng_for(seed);
    let mut x = sample(&mut rng, 21, -1.0, 1.0);
    nudge_away(&mut x, &[0.0], 0.02);
    let x = Tensor::new(vec![3, 7], x).unwrap();
    check("abs", seed, &[x], &|g, n| g.abs(n[0]), &|xs| naive::map(&xs[0], f64::abs));
}

pub fn clamp_off_edges(seed: u64) {
    let mut rng = rng_for(seed);
    let mut x = sample(&mut rng, 21, -1.0, 1.0);
    nudge_away(&mut x, &[-0.5, 0.5], 0.02);
    let x = Tensor::new(vec![3, 7], x).unwrap();
    check("clamp", seed, &[x], &|g, n| g.clamp(n[0], -0.5, 0.5), &|xs| {
        naive::map(&xs[0], |v| v.clamp(-0.5, 0.5))
    });
}

pub fn mean_sum(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![3, 5], -2.0, 2.0);
    check("mean", seed, std::slice::from_ref(&x), &|g, n| g.mean(n[0]), &|xs| {
        vec![naive::mean(&xs[0])]
    });
    check("sum", seed, &[x], &|g, n| g.sum(n[0]), &|xs| vec![xs[0].iter().sum()]);
}

pub fn l1_distance_off_ties(seed: u64) {
    let mut rng = rng_for(seed);
    let a = sample(&mut rng, 12, -1.0, 1.0);
    let mut d = sample(&mut rng, 12, -1.0, 1.0);
    nudge_away(&mut d, &[0.0], 0.05);
    let b: Vec<f32> = a.iter().zip(&d).map(|(&x, &dv)| x - dv).collect();
    let a = Tensor::new(vec![3, 4], a).unwrap();
    let b = Tensor::new(vec![3, 4], b).unwrap();
    check("l1_distance", seed, &[a, b], &|g, n| g.l1_distance(n[0], n[1]).unwrap(), &|xs| {
        vec![naive::l1_distance(&xs[0], &xs[1])]
    });
}

pub fn reshape(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![2, 3, 4], -2.0, 2.0);
    check("reshape", seed, &[x], &|g, n| g.reshape(n[0], vec![4, 6]).unwrap(), &|xs| xs[0].clone());
}

pub fn concat_rows(seed: u64) {
    let mut rng = rng_for(seed);
    let a = rt(&mut rng, vec![2, 3, 4], -2.0, 2.0);
    let b = rt(&mut rng, vec![2, 2, 4], -2.0, 2.0);
    check("concat_rows", seed, &[a, b], &|g, n| g.concat_rows(n[0], n[1]).unwrap(), &|xs| {
        naive::concat_rows(&xs[0], &xs[1], (2, 3, 4), 2)
    });
}

pub fn zero_pad2d(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![2, 3, 4], -2.0, 2.0);
    check("zero_pad2d", seed, &[x], &|g, n| g.zero_pad2d(n[0], [1, 2, 0, 3]).unwrap(), &|xs| {
        naive::zero_pad2d(&xs[0], (2, 3, 4), [1, 2, 0, 3])
    });
}

pub fn crop2d(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![2, 5, 6], -2.0, 2.0);
    check("crop2d", seed, &[x], &|g, n| g.crop2d(n[0], 1, 2, 3, 2).unwrap(), &|xs| {
        naive::crop2d(&xs[0], (2, 5, 6), 1, 2, 3, 2)
    });
}

pub fn pixel_shuffle(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![8, 2, 3], -2.0, 2.0);
    check("pixel_shuffle", seed, &[x], &|g, n| g.pixel_shuffle(n[0], 2).unwrap(), &|xs| {
        naive::pixel_shuffle(&xs[0], 2, 2, 3, 2)
    });
}

pub fn glu_all_axes(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![4, 2, 6], -2.0, 2.0);
    for axis in 0..3 {
        check(
            &format!("glu axis {axis}"),
            seed,
            std::slice::from_ref(&x),
            &|g, n| g.glu(n[0], axis).unwrap(),
            &|xs| naive::glu(&xs[0], &[4, 2, 6], axis),
        );
    }
}

pub fn instance_norm(seed: u64) {
    let mut rng = rng_for(seed);
    let x = rt(&mut rng, vec![3, 4, 5], -2.0, 2.0);
    let gamma = rt(&mut rng, vec![3], 0.5, 1.5);
    let beta = rt(&mut rng, vec![3], -0.5, 0.5);
    check(
        "instance_norm",
        seed,
        &[x, gamma, beta],
        &|g, n| g.instance_norm(n[0], n[1], n[2], 1e-5).unwrap(),
        &|xs| naive::instance_norm(&xs[0], 3, 20, &xs[1], &xs[2], 1e-5),
    );
}

pub fn conv2d_geometries(seed: u64) {
    // (kernel, stride, pad, bias); geometries cover the strided
    // downsampler, the 1x1 projection, and asymmetric padding.
    let cases = [
        (3usize, (1usize, 1usize), (1usize, 1usize), true),
        (3, (2, 2), (1, 1), true),
        (1, (1, 1), (0, 0), false),
        (3, (2, 1), (0, 2), false),
    ];
    let mut rng = rng_for(seed);
    for &(k, stride, pad, bias) in &cases {
        let x = rt(&mut rng, vec![3, 6, 7], -1.0, 1.0);
        let w = rt(&mut rng, vec![4, 3, k, k], -0.6, 0.6);
        let name = format!("conv2d k{k} s{stride:?} p{pad:?} bias {bias}");
        if bias {
            let b = rt(&mut rng, vec![4], -0.3, 0.3);
            check(
                &name,
                seed,
                &[x, w, b],
                &|g, n| g.conv2d(n[0], n[1], Some(n[2]), stride, pad).unwrap(),
                &|xs| {
                    naive::conv2d(&xs[0], (3, 6, 7), &xs[1], (4, k, k), Some(&xs[2]), stride, pad)
                },
            );
        } else {
            check(
                &name,
                seed,
                &[x, w],
                &|g, n| g.conv2d(n[0], n[1], None, stride, pad).unwrap(),
                &|xs| naive::conv2d(&xs[0], (3, 6, 7), &xs[1], (4, k, k), None, stride, pad),
            );
        }
    }
}
