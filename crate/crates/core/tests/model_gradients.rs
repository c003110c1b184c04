//! Directional derivative checks through the full models and the
//! adversarial training objectives. The per-op oracle pins gradients to
//! 1e-4; these end-to-end checks run entirely in f32, where forward
//! rounding limits central differences to roughly 1e-2 relative, so the
//! tolerance here is about composition bugs, not arithmetic precision.

mod common;

use common::{promote, rng_for, sample};
use nitcg::autodiff::{Bind, Graph, Tensor};
use nitcg::conditioning::{append_label, DomainLabel};
use nitcg::losses::{
    adv1_discriminator_loss, adv1_generator_loss, adv2_discriminator_loss, identity_loss,
    nit_cycle_loss, GeneratorAdvForm,
};
use nitcg::models::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
use rand::Rng;

const SEEDS: u64 = 10;
const FD_STEP: f32 = 1e-3;
const REL_TOL: f64 = 2e-2;
const ABS_FLOOR: f64 = 1e-4;

fn rt(rng: &mut impl Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, sample(rng, n, lo, hi)).unwrap()
}

/// Unit-norm direction matching each parameter tensor's element count.
fn directions(rng: &mut impl Rng, sizes: &[usize]) -> Vec<Vec<f32>> {
    let mut dirs: Vec<Vec<f32>> = sizes.iter().map(|&n| sample(rng, n, -1.0, 1.0)).collect();
    let norm =
        dirs.iter().flat_map(|d| d.iter()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    for d in &mut dirs {
        for v in d.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    dirs
}

fn dot(grads: &[Tensor], dirs: &[Vec<f32>]) -> f64 {
    grads
        .iter()
        .zip(dirs)
        .flat_map(|(g, d)| g.data().iter().zip(d))
        .map(|(&g, &d)| g as f64 * d as f64)
        .sum()
}

/// Four-point stencil `(8(f(h)-f(-h)) - (f(2h)-f(-2h))) / 12h`. The
/// composite objectives sit near 20 in f32, so a plain central
/// difference at small `h` is rounding-bound; the wider stencil keeps
/// truncation negligible at a step large enough to clear the noise.
fn stencil_slope(eval_at: &mut dyn FnMut(f32) -> f64, h: f32) -> f64 {
    let f1 = eval_at(h) - eval_at(-h);
    let f2 = eval_at(2.0 * h) - eval_at(-2.0 * h);
    eval_at(0.0);
    (8.0 * f1 - f2) / (12.0 * h as f64)
}

fn assert_directional(ctx: &str, analytic: f64, numeric: f64) {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        return;
    }
    let rel = diff / analytic.abs().max(numeric.abs());
    assert!(
        rel < REL_TOL,
        "{ctx}: tape directional {analytic:.6e} vs differences {numeric:.6e} (rel {rel:.3e})"
    );
}

/// Checks d/dt L(theta + t*d) at t = 0 against backward, for the global
/// direction and for each parameter tensor in isolation. `eval_with`
/// installs the given parameter values and returns the loss.
fn check_directions(
    ctx: &str,
    rng: &mut impl Rng,
    originals: &[Vec<f32>],
    grads: &[Tensor],
    eval_with: &mut dyn FnMut(&[Vec<f32>]) -> f64,
) {
    let sizes: Vec<usize> = originals.iter().map(Vec::len).collect();
    let dirs = directions(rng, &sizes);
    let mut fd = |keep: Option<usize>| -> f64 {
        let mut eval_at = |t: f32| -> f64 {
            let shifted: Vec<Vec<f32>> = originals
                .iter()
                .enumerate()
                .map(|(k, orig)| {
                    if keep.is_some_and(|only| only != k) {
                        return orig.clone();
                    }
                    orig.iter().zip(&dirs[k]).map(|(&v, &d)| v + t * d).collect()
                })
                .collect();
            eval_with(&shifted)
        };
        let up = eval_at(FD_STEP);
        let down = eval_at(-FD_STEP);
        eval_at(0.0);
        (up - down) / (2.0 * FD_STEP as f64)
    };

    assert_directional(&format!("{ctx} global"), dot(grads, &dirs), fd(None));
    for k in 0..sizes.len() {
        let analytic = dot(&grads[k..k + 1], &dirs[k..k + 1]);
        assert_directional(&format!("{ctx} tensor {k}"), analytic, fd(Some(k)));
    }
}

fn write_params(gen: &mut Generator, values: &[Vec<f32>]) {
    for (p, v) in gen.params_mut().iter_mut().zip(values) {
        p.value_mut().data_mut().copy_from_slice(v);
    }
}

fn write_disc_params(d: &mut Discriminator, values: &[Vec<f32>]) {
    for (p, v) in d.params_mut().iter_mut().zip(values) {
        p.value_mut().data_mut().copy_from_slice(v);
    }
}

fn snapshot(params: &[&nitcg::autodiff::Parameter]) -> Vec<Vec<f32>> {
    params.iter().map(|p| p.value().data().to_vec()).collect()
}

#[test]
fn generator_gradients_match_directional_differences() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed);
        let spec = GeneratorSpec {
            in_rows: 11,
            base_channels: 4,
            n_residual_blocks: 1,
            downsample_factor: 4,
        };
        let mut gen = Generator::init(spec, "g", &mut rng).unwrap();
        let x = rt(&mut rng, vec![11, 6], -1.0, 1.0);

        let mut g = Graph::new();
        let xin = g.constant(x.clone());
        let out = gen.forward(&mut g, xin, Bind::Trainable).unwrap();
        let loss = g.mean(out);
        g.backward(loss).unwrap();
        let grads: Vec<Tensor> =
            gen.params().iter().map(|p| g.export_grad(p.id()).unwrap()).collect();
        let originals = snapshot(&gen.params());

        check_directions(
            &format!("generator seed {seed}"),
            &mut rng,
            &originals,
            &grads,
            &mut |vals| {
                write_params(&mut gen, vals);
                let mut g = Graph::new();
                let xin = g.constant(x.clone());
                let out = gen.forward(&mut g, xin, Bind::Frozen).unwrap();
                let l = g.mean(out);
                g.value(l).data()[0] as f64
            },
        );
    }
}

#[test]
fn discriminator_gradients_match_directional_differences() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed);
        let spec = DiscriminatorSpec { in_rows: 11, base_channels: 4, n_layers: 2 };
        let mut disc = Discriminator::init(spec, "d", &mut rng).unwrap();
        let x = rt(&mut rng, vec![11, 6], -1.0, 1.0);

        let mut g = Graph::new();
        let xin = g.constant(x.clone());
        let out = disc.forward(&mut g, xin, Bind::Trainable).unwrap();
        let score = g.log(out);
        let loss = g.mean(score);
        g.backward(loss).unwrap();
        let grads: Vec<Tensor> =
            disc.params().iter().map(|p| g.export_grad(p.id()).unwrap()).collect();
        let originals = snapshot(&disc.params());

        check_directions(
            &format!("discriminator seed {seed}"),
            &mut rng,
            &originals,
            &grads,
            &mut |vals| {
                write_disc_params(&mut disc, vals);
                let mut g = Graph::new();
                let xin = g.constant(x.clone());
                let out = disc.forward(&mut g, xin, Bind::Frozen).unwrap();
                let score = g.log(out);
                let l = g.mean(score);
                g.value(l).data()[0] as f64
            },
        );
    }
}

struct AdversarialRig {
    g_ys: Generator,
    g_sy: Generator,
    d_s: Discriminator,
    d_y: Discriminator,
    s_tc: Tensor,
    s_tn: Tensor,
    y_tc: Tensor,
    y_tn: Tensor,
}

/// Tiny two-noise setup with conditioned features: 8 feature rows plus 3
/// label rows, one utterance per domain.
fn rig(seed: u64) -> AdversarialRig {
    let mut rng = rng_for(seed);
    let n_noise = 2;
    let feat_s = rt(&mut rng, vec![8, 6], -1.0, 1.0);
    let feat_y = rt(&mut rng, vec![8, 6], -1.0, 1.0);
    let clean = DomainLabel::clean(n_noise);
    let noise = DomainLabel::new(2, n_noise).unwrap();
    let target = DomainLabel::new(1, n_noise).unwrap();
    let gspec =
        GeneratorSpec { in_rows: 11, base_channels: 4, n_residual_blocks: 1, downsample_factor: 4 };
    let dspec = DiscriminatorSpec { in_rows: 11, base_channels: 4, n_layers: 2 };
    AdversarialRig {
        g_ys: Generator::init(gspec, "g_ys", &mut rng).unwrap(),
        g_sy: Generator::init(gspec, "g_sy", &mut rng).unwrap(),
        d_s: Discriminator::init(dspec, "d_s", &mut rng).unwrap(),
        d_y: Discriminator::init(dspec, "d_y", &mut rng).unwrap(),
        s_tc: append_label(&feat_s, &clean).unwrap().into_matrix(),
        s_tn: append_label(&feat_s, &target).unwrap().into_matrix(),
        y_tc: append_label(&feat_y, &clean).unwrap().into_matrix(),
        y_tn: append_label(&feat_y, &noise).unwrap().into_matrix(),
    }
}

/// The generator objective exactly as the training step composes it:
/// conditioned cycle, identity, and non-saturating adversarial terms
/// against frozen critics. Returns the scalar and, when trainable, the
/// exported generator gradients.
fn generator_objective(r: &AdversarialRig, bind_g: Bind) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let s_tc = g.constant(r.s_tc.clone());
    let s_tn = g.constant(r.s_tn.clone());
    let y_tc = g.constant(r.y_tc.clone());
    let y_tn = g.constant(r.y_tn.clone());
    let paths =
        nit_cycle_loss(&mut g, &r.g_ys, &r.g_sy, &[s_tc], &[s_tn], &[y_tc], &[y_tn], 3, bind_g)
            .unwrap();
    let idm = identity_loss(&mut g, &r.g_ys, &r.g_sy, &[s_tc], &[y_tn], bind_g).unwrap();
    let adv_s = adv1_generator_loss(
        &mut g,
        &r.d_s,
        &paths.fake_s,
        GeneratorAdvForm::NonSaturating,
        Bind::Frozen,
    )
    .unwrap();
    let adv_y = adv1_generator_loss(
        &mut g,
        &r.d_y,
        &paths.fake_y,
        GeneratorAdvForm::NonSaturating,
        Bind::Frozen,
    )
    .unwrap();
    let cyc = g.affine(paths.loss, 10.0, 0.0);
    let idm = g.affine(idm, 5.0, 0.0);
    let sum = g.add(adv_s, adv_y).unwrap();
    let sum = g.add(sum, cyc).unwrap();
    let total = g.add(sum, idm).unwrap();
    let mut grads = Vec::new();
    if bind_g == Bind::Trainable {
        g.backward(total).unwrap();
        grads = r
            .g_ys
            .params()
            .iter()
            .chain(r.g_sy.params().iter())
            .map(|p| g.export_grad(p.id()).unwrap())
            .collect();
    }
    (g.value(total).data()[0] as f64, grads)
}

#[test]
fn generator_objective_gradients_match_directional_differences() {
    for seed in 0..3 {
        let mut r = rig(seed);
        let (_, grads) = generator_objective(&r, Bind::Trainable);
        let originals: Vec<Vec<f32>> = r
            .g_ys
            .params()
            .iter()
            .chain(r.g_sy.params().iter())
            .map(|p| p.value().data().to_vec())
            .collect();
        let n_ys = r.g_ys.params().len();

        let mut rng = rng_for(seed ^ 0xD1CE);
        let sizes: Vec<usize> = originals.iter().map(Vec::len).collect();
        let dirs = directions(&mut rng, &sizes);
        let analytic = dot(&grads, &dirs);

        let mut eval_at = |t: f32| -> f64 {
            for (k, (p, d)) in r.g_ys.params_mut().iter_mut().zip(&dirs[..n_ys]).enumerate() {
                let orig = &originals[k];
                for ((v, &o), &dv) in p.value_mut().data_mut().iter_mut().zip(orig).zip(d.iter()) {
                    *v = o + t * dv;
                }
            }
            for (k, (p, d)) in r.g_sy.params_mut().iter_mut().zip(&dirs[n_ys..]).enumerate() {
                let orig = &originals[n_ys + k];
                for ((v, &o), &dv) in p.value_mut().data_mut().iter_mut().zip(orig).zip(d.iter()) {
                    *v = o + t * dv;
                }
            }
            generator_objective(&r, Bind::Frozen).0
        };
        let numeric = stencil_slope(&mut eval_at, 5e-3);
        assert_directional(&format!("generator objective seed {seed}"), analytic, numeric);
    }
}

#[test]
fn discriminator_objective_gradients_match_directional_differences() {
    for seed in 0..3 {
        let mut r = rig(seed);

        // Detached fakes exactly as the critic phase sees them: raw first
        // hops plus label-swapped cycled outputs, all plain constants.
        let fake_s = r.g_ys.eval(&r.y_tc).unwrap();
        let fake_y = r.g_sy.eval(&r.s_tn).unwrap();
        let cycled_s = r.g_ys.eval(&fake_y).unwrap();
        let cycled_y = r.g_sy.eval(&fake_s).unwrap();

        let objective = |r: &AdversarialRig, bind_d: Bind| -> (f64, Vec<Tensor>) {
            let mut g = Graph::new();
            let real_s = g.constant(r.s_tc.clone());
            let real_y = g.constant(r.y_tn.clone());
            let fs = g.constant(fake_s.clone());
            let fy = g.constant(fake_y.clone());
            let cs = g.constant(cycled_s.clone());
            let cy = g.constant(cycled_y.clone());
            let a1s = adv1_discriminator_loss(&mut g, &r.d_s, &[real_s], &[fs], bind_d).unwrap();
            let a1y = adv1_discriminator_loss(&mut g, &r.d_y, &[real_y], &[fy], bind_d).unwrap();
            let a2s = adv2_discriminator_loss(&mut g, &r.d_s, &[real_s], &[cs], bind_d).unwrap();
            let a2y = adv2_discriminator_loss(&mut g, &r.d_y, &[real_y], &[cy], bind_d).unwrap();
            let sum = g.add(a1s, a1y).unwrap();
            let sum = g.add(sum, a2s).unwrap();
            let total = g.add(sum, a2y).unwrap();
            let mut grads = Vec::new();
            if bind_d == Bind::Trainable {
                g.backward(total).unwrap();
                grads = r
                    .d_s
                    .params()
                    .iter()
                    .chain(r.d_y.params().iter())
                    .map(|p| g.export_grad(p.id()).unwrap())
                    .collect();
            }
            (g.value(total).data()[0] as f64, grads)
        };

        let (_, grads) = objective(&r, Bind::Trainable);
        let originals: Vec<Vec<f32>> = r
            .d_s
            .params()
            .iter()
            .chain(r.d_y.params().iter())
            .map(|p| p.value().data().to_vec())
            .collect();
        let n_ds = r.d_s.params().len();

        let mut rng = rng_for(seed ^ 0xD15C);
        let sizes: Vec<usize> = originals.iter().map(Vec::len).collect();
        let dirs = directions(&mut rng, &sizes);
        let analytic = dot(&grads, &dirs);

        let mut eval_at = |t: f32| -> f64 {
            for (k, (p, d)) in r.d_s.params_mut().iter_mut().zip(&dirs[..n_ds]).enumerate() {
                let orig = &originals[k];
                for ((v, &o), &dv) in p.value_mut().data_mut().iter_mut().zip(orig).zip(d.iter()) {
                    *v = o + t * dv;
                }
            }
            for (k, (p, d)) in r.d_y.params_mut().iter_mut().zip(&dirs[n_ds..]).enumerate() {
                let orig = &originals[n_ds + k];
                for ((v, &o), &dv) in p.value_mut().data_mut().iter_mut().zip(orig).zip(d.iter()) {
                    *v = o + t * dv;
                }
            }
            objective(&r, Bind::Frozen).0
        };
        let numeric = stencil_slope(&mut eval_at, 5e-3);
        assert_directional(&format!("critic objective seed {seed}"), analytic, numeric);
    }
}

/// Repeated frozen evaluation is bitwise stable and shape preserving;
/// the directional checks above lean on both properties.
#[test]
fn generator_forward_is_layout_stable() {
    let mut rng = rng_for(99);
    let spec =
        GeneratorSpec { in_rows: 11, base_channels: 4, n_residual_blocks: 1, downsample_factor: 4 };
    let gen = Generator::init(spec, "g", &mut rng).unwrap();
    let x = rt(&mut rng, vec![11, 6], -1.0, 1.0);
    let once = gen.eval(&x).unwrap();
    let twice = gen.eval(&x).unwrap();
    assert_eq!(promote(once.data()), promote(twice.data()));
    assert_eq!(once.shape(), x.shape());
}
